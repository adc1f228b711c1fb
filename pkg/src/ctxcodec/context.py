"""Temporal context mining and global/local context compensation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import resize_flow, warp
from .numerics import ChannelAttention, Conv2d, Module, ShapeError, Tensor, conv_stack, ops

DECOUPLE_DELTA = 1e-6
COSINE_EPS = 1e-8


@dataclass
class ContextSet:
    """Propagated contexts at full, half and quarter resolution."""

    c0: Tensor
    c1: Tensor
    c2: Tensor

    def __post_init__(self):
        h, w = self.c0.shape[2:]
        if self.c1.shape[2:] != (h // 2, w // 2) or self.c2.shape[2:] != (h // 4, w // 4):
            raise ShapeError("ContextSet", f"scales {self.c0.shape}, {self.c1.shape}, {self.c2.shape} are not 1, 1/2, 1/4")


@dataclass
class PropagationState:
    """Decoded reference frame and propagated feature for the next P-frame."""

    ref_frame: Tensor
    ref_feature: Tensor
    index: int = 0


@dataclass
class DecoupleTerms:
    g_oriented: Tensor
    g_propagated: Tensor
    l_oriented: Tensor
    l_propagated: Tensor
    cor_g: Tensor
    cor_l: Tensor


class FeatureRefresh(Module):
    """Builds the propagated feature from an intra-coded frame (tanh-bounded,
    like the generator's feature head)."""

    def __init__(self, rng: np.random.Generator, feat_channels: int, hidden: int):
        self.net = conv_stack(rng, 3, hidden, feat_channels, depth=2)

    def forward(self, frame: Tensor) -> Tensor:
        return ops.tanh(self.net(frame))


class TemporalContextMiner(Module):
    """Three-scale feature pyramid from F_{t-1}, each level aligned by the decoded flow."""

    def __init__(self, rng: np.random.Generator, feat_channels: int, ctx_channels: int, hidden: int):
        self.level0 = Conv2d(rng, feat_channels, hidden)
        self.level1 = Conv2d(rng, hidden, hidden, stride=2)
        self.level2 = Conv2d(rng, hidden, hidden, stride=2)
        self.refine = [conv_stack(rng, hidden, hidden, ctx_channels, depth=2) for _ in range(3)]

    @staticmethod
    def flow_pyramid(flow: Tensor) -> list[Tensor]:
        h, w = flow.shape[2:]
        v1 = resize_flow(flow, (h // 2, w // 2))
        v2 = resize_flow(v1, (h // 4, w // 4))
        return [flow, v1, v2]

    def forward(self, state: PropagationState, decoded_flow: Tensor) -> ContextSet:
        feature = state.ref_feature
        if feature.shape[2:] != decoded_flow.shape[2:]:
            raise ShapeError("mine_temporal_context", f"feature {feature.shape} vs flow {decoded_flow.shape}")
        f0 = ops.leaky_relu(self.level0(feature))
        f1 = ops.leaky_relu(self.level1(f0))
        f2 = ops.leaky_relu(self.level2(f1))
        flows = self.flow_pyramid(decoded_flow)
        ctx = [net(warp(f, v)) for net, f, v in zip(self.refine, (f0, f1, f2), flows)]
        return ContextSet(*ctx)


def mine_temporal_context(miner: TemporalContextMiner, state: PropagationState, decoded_flow: Tensor) -> ContextSet:
    return miner(state, decoded_flow)


# ---------------------------------------------------------------------------
# invertible local path


class AffineCoupling(Module):
    """One affine coupling layer.

    With ``parity`` 0 the first channel half conditions the second; parity 1
    swaps the roles.  ``s`` is bounded by ``scale * tanh``.  The conditioner's
    last conv starts at zero, so a fresh layer is the identity.
    """

    def __init__(self, rng: np.random.Generator, channels: int, hidden: int, parity: int = 0, scale: float = 1.0):
        if channels % 2:
            raise ShapeError("affine_coupling", f"channel count {channels} is odd")
        self.channels = channels
        self.parity = parity
        self.scale = scale
        half = channels // 2
        self.net = conv_stack(rng, half, hidden, 2 * half, depth=2, zero_last=True)

    def _halves(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1] != self.channels:
            raise ShapeError("affine_coupling", f"expected {self.channels} channels, got {x.shape[1]}")
        a, b = ops.split(x, 2, axis=1)
        return (a, b) if self.parity == 0 else (b, a)

    def _join(self, cond: Tensor, other: Tensor) -> Tensor:
        return ops.concat([cond, other] if self.parity == 0 else [other, cond], axis=1)

    def _shift_scale(self, cond: Tensor) -> tuple[Tensor, Tensor]:
        raw_s, shift = ops.split(self.net(cond), 2, axis=1)
        return ops.tanh(raw_s) * self.scale, shift

    def forward(self, x: Tensor) -> Tensor:
        return self.forward_with_logdet(x)[0]

    def forward_with_logdet(self, x: Tensor) -> tuple[Tensor, Tensor]:
        cond, other = self._halves(x)
        s, shift = self._shift_scale(cond)
        y = other * ops.exp(s) + shift
        return self._join(cond, y), ops.sum(s, axis=(1, 2, 3))

    def inverse(self, y: Tensor) -> Tensor:
        cond, other = self._halves(y)
        s, shift = self._shift_scale(cond)
        x = (other - shift) * ops.exp(-s)
        return self._join(cond, x)


class CouplingStack(Module):
    def __init__(self, rng: np.random.Generator, channels: int, hidden: int, layers: int = 2, scale: float = 1.0):
        self.layers = [AffineCoupling(rng, channels, hidden, parity=i % 2, scale=scale) for i in range(layers)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def forward_with_logdet(self, x: Tensor) -> tuple[Tensor, Tensor]:
        total = None
        for layer in self.layers:
            x, ld = layer.forward_with_logdet(x)
            total = ld if total is None else total + ld
        return x, total

    def inverse(self, y: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            y = layer.inverse(y)
        return y


def affine_coupling_forward(x: Tensor, layers: CouplingStack | AffineCoupling) -> Tensor:
    return layers(x)


def affine_coupling_inverse(y: Tensor, layers: CouplingStack | AffineCoupling) -> Tensor:
    return layers.inverse(y)


# ---------------------------------------------------------------------------
# decoupling objective


def cosine_correlation(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity per batch item, inputs flattened; returns shape (N,)."""
    if a.shape != b.shape:
        raise ShapeError("cosine_correlation", f"{a.shape} vs {b.shape}")
    n = a.shape[0]
    fa = ops.reshape(a, (n, -1))
    fb = ops.reshape(b, (n, -1))
    dot = ops.sum(fa * fb, axis=1)
    norm = ops.sqrt(ops.sum(ops.square(fa), axis=1)) * ops.sqrt(ops.sum(ops.square(fb), axis=1))
    return dot / (norm + COSINE_EPS)


def decoupling_loss(cor_l, cor_g, delta: float = DECOUPLE_DELTA):
    """Squared local correlation over squared global correlation (plus delta).

    Works on floats and on tensors (per-item, unreduced).
    """
    if isinstance(cor_l, Tensor) or isinstance(cor_g, Tensor):
        return ops.square(cor_l) / (ops.square(cor_g) + delta)
    return cor_l * cor_l / (cor_g * cor_g + delta)


# ---------------------------------------------------------------------------
# compensation network


class GlobalBranch(Module):
    """Two stride-2 convs, channel attention, then back to full resolution."""

    def __init__(self, rng: np.random.Generator, channels: int):
        self.down1 = Conv2d(rng, channels, channels, stride=2)
        self.down2 = Conv2d(rng, channels, channels, stride=2)
        self.attention = ChannelAttention(rng, channels)
        self.out = Conv2d(rng, channels, channels)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.down1(x))
        h = ops.leaky_relu(self.down2(h))
        h = self.attention(h)
        h = ops.resize_bilinear(h, x.shape[2:])
        return self.out(h)


class ContextCompensation(Module):
    """Modulates the propagated context with the oriented one.

    ``full``: shared mutual extractor, private global (large receptive field)
    and local (invertible coupling) extractors per input, pairwise sums fed
    to fusion nets of the same architecture, then a shared fusion conv stack.
    ``concat``: both contexts concatenated and refined by convs.
    """

    def __init__(self, rng: np.random.Generator, channels: int, mode: str = "full", coupling_layers: int = 2,
                 coupling_scale: float = 1.0):
        if mode not in ("full", "concat"):
            raise ValueError(f"unsupported compensation mode {mode!r}")
        self.mode = mode
        self.channels = channels
        c = channels
        if mode == "concat":
            self.refine = conv_stack(rng, 2 * c, c, c, depth=2)
            return
        self.mutual_extractor = conv_stack(rng, c, c, c, depth=2)
        self.global_oriented = GlobalBranch(rng, c)
        self.global_propagated = GlobalBranch(rng, c)
        self.local_oriented = CouplingStack(rng, c, c, coupling_layers, coupling_scale)
        self.local_propagated = CouplingStack(rng, c, c, coupling_layers, coupling_scale)
        self.global_fusion = GlobalBranch(rng, c)
        self.local_fusion = CouplingStack(rng, c, c, coupling_layers, coupling_scale)
        self.mutual_fusion = conv_stack(rng, 2 * c, c, c, depth=2)

    def forward(self, c0: Tensor, oriented: Tensor) -> tuple[Tensor, DecoupleTerms | None]:
        if c0.shape != oriented.shape:
            raise ShapeError("compensate_context", f"{c0.shape} vs {oriented.shape}")
        if self.mode == "concat":
            return self.refine(ops.concat([c0, oriented], axis=1)), None
        m_o = self.mutual_extractor(oriented)
        m_p = self.mutual_extractor(c0)
        g_o, g_p = self.global_oriented(m_o), self.global_propagated(m_p)
        l_o, l_p = self.local_oriented(m_o), self.local_propagated(m_p)
        terms = DecoupleTerms(g_o, g_p, l_o, l_p, cosine_correlation(g_o, g_p), cosine_correlation(l_o, l_p))
        fused_g = self.global_fusion(g_o + g_p)
        fused_l = self.local_fusion(l_o + l_p)
        return self.mutual_fusion(ops.concat([fused_g, fused_l], axis=1)), terms


def compensate_context(net: ContextCompensation, c0: Tensor, oriented: Tensor):
    return net(c0, oriented)
