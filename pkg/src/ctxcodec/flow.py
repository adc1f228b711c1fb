"""Backward warping, pyramid flow estimation and flow orientation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Module, ShapeError, Tensor, conv_stack, ops


def warp(source: Tensor, flow: Tensor) -> Tensor:
    """Sample ``source`` at ``p + flow(p)`` with bilinear weights.

    Out-of-image positions are clamped to the border.  Differentiable in both
    arguments.
    """
    if source.shape[0] != flow.shape[0] or source.shape[2:] != flow.shape[2:]:
        raise ShapeError("warp", f"flow {flow.shape} does not match source {source.shape}")
    return ops.grid_sample(source, flow)


def resize_flow(flow: Tensor, size: tuple[int, int]) -> Tensor:
    """Bilinearly resample a flow field, rescaling displacements with it."""
    h, w = flow.shape[2:]
    sy, sx = size[0] / h, size[1] / w
    if sx != sy:
        raise ShapeError("resize_flow", "anisotropic resize not supported")
    return ops.resize_bilinear(flow, size) * float(sx)


@dataclass
class PyramidTrace:
    """Per-level intermediates, coarsest first, kept for inspection."""

    upsampled: list[np.ndarray]
    refined: list[np.ndarray]


CORR_RADIUS = 2
CORR_SHARPNESS = 10.0


def _unit_features(f: Tensor) -> Tensor:
    """Scale every pixel's feature vector to unit RMS so correlations are cosines."""
    return f * ops.power(ops.mean(ops.square(f), axis=1, keepdims=True) + 1e-6, -0.5)


class PyramidFlowEstimator(Module):
    """Coarse-to-fine residual flow estimator (SpyNet-like).

    Level ``l`` sees the reference warped by the upsampled coarser flow, the
    target and the upsampled flow, and predicts a residual.  A local
    correlation between shared features of the aligned reference and the
    target (plus its soft-argmax displacement) is fed to each level's head,
    which makes small residual motions easy to read off.  The last conv of
    every head is zero-initialised, so an untrained estimator returns exactly
    zero flow.
    """

    def __init__(self, rng: np.random.Generator, levels: int = 3, hidden: int = 16, channels: int = 3,
                 radius: int = CORR_RADIUS):
        self.levels = levels
        self.radius = radius
        n_disp = (2 * radius + 1) ** 2
        self.features = conv_stack(rng, channels, hidden, hidden, depth=2)
        self.nets = [conv_stack(rng, 2 * channels + 2 + n_disp + 2, hidden, 2, depth=3, zero_last=True)
                     for _ in range(levels)]
        offsets = np.array(ops.displacements(radius), dtype=np.float32)  # (K, 2) as (dy, dx)
        self._disp = offsets[:, ::-1].T.copy()[:, :, None, None]  # (2, K, 1, 1) as (dx, dy)

    def forward(self, reference: Tensor, target: Tensor, trace: PyramidTrace | None = None) -> Tensor:
        if reference.shape != target.shape:
            raise ShapeError("estimate_flow", f"frames differ: {reference.shape} vs {target.shape}")
        n, _, h, w = reference.shape
        factor = 2 ** (self.levels - 1)
        if h % factor or w % factor or h // factor < 8 or w // factor < 8:
            raise ShapeError("estimate_flow", f"{h}x{w} too small for {self.levels} pyramid levels")
        refs, tgts = [reference], [target]
        for _ in range(self.levels - 1):
            refs.append(ops.avg_pool2d(refs[-1]))
            tgts.append(ops.avg_pool2d(tgts[-1]))
        disp = Tensor(self._disp.astype(reference.dtype))
        flow = None
        for level in range(self.levels - 1, -1, -1):
            ref_l, tgt_l = refs[level], tgts[level]
            if flow is None:
                up = Tensor(np.zeros((n, 2) + ref_l.shape[2:], dtype=ref_l.dtype))
            else:
                up = ops.upsample_bilinear(flow) * 2.0
            aligned = warp(ref_l, up)
            corr = ops.local_correlation(_unit_features(self.features(tgt_l)),
                                         _unit_features(self.features(aligned)), self.radius)
            soft = ops.conv2d(ops.softmax(corr * CORR_SHARPNESS), disp)
            head_in = ops.concat([aligned, tgt_l, up, corr, soft], axis=1)
            flow = up + self.nets[self.levels - 1 - level](head_in)
            if trace is not None:
                trace.upsampled.append(up.data.copy())
                trace.refined.append(flow.data.copy())
        return flow


def estimate_flow(estimator: PyramidFlowEstimator, reference: Tensor, target: Tensor) -> Tensor:
    return estimator(reference, target)


class OrientedContextExtractor(Module):
    """Full-resolution features of the reference frame, aligned by a flow."""

    def __init__(self, rng: np.random.Generator, ctx_channels: int, hidden: int):
        self.features = conv_stack(rng, 3, hidden, ctx_channels, depth=2)

    def forward(self, ref_frame: Tensor, flow: Tensor) -> Tensor:
        return warp(self.features(ref_frame), flow)


class FlowOrientation(Module):
    """Re-estimates flow between the reference and its motion-compensated prediction.

    Everything here is a function of decoder-side quantities (the decoded
    reference frame and the decoded flow), so it costs no bits.
    """

    def __init__(self, rng: np.random.Generator, levels: int = 3, hidden: int = 16):
        self.estimator = PyramidFlowEstimator(rng, levels, hidden)

    def forward(self, ref_frame: Tensor, decoded_flow: Tensor) -> tuple[Tensor, Tensor]:
        prediction = warp(ref_frame, decoded_flow)
        oriented = self.estimator(ref_frame, prediction)
        return prediction, oriented


def orient_flow(orientation: FlowOrientation, ref_frame: Tensor, decoded_flow: Tensor) -> tuple[Tensor, Tensor]:
    return orientation(ref_frame, decoded_flow)


def extract_oriented_context(extractor: OrientedContextExtractor, ref_frame: Tensor, oriented_flow: Tensor) -> Tensor:
    return extractor(ref_frame, oriented_flow)
