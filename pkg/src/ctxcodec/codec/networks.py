"""Motion coder, contextual encoder/decoder, entropy priors and frame generator."""

from __future__ import annotations

import numpy as np

from ..context import ContextSet
from ..numerics import Conv2d, Module, ShapeError, Tensor, conv_stack, ops
from .entropy import SCALE_MIN


def _mean_scale(params: Tensor) -> tuple[Tensor, Tensor]:
    mean, raw = ops.split(params, 2, axis=1)
    return mean, ops.lower_bound(ops.softplus(raw), SCALE_MIN)


class MotionCoder(Module):
    """Flow autoencoder at 1/16 resolution with a prior conditioned on F_{t-1}.

    The decoder's output conv starts at zero, so an untrained coder delivers
    zero flow and the prediction starts as a copy of the reference.
    """

    def __init__(self, rng: np.random.Generator, latent: int, hidden: int, feat_channels: int):
        self.enc = [Conv2d(rng, 2, hidden, stride=2), Conv2d(rng, hidden, hidden, stride=2),
                    Conv2d(rng, hidden, hidden, stride=2), Conv2d(rng, hidden, latent, stride=2)]
        self.dec = [Conv2d(rng, latent, hidden), Conv2d(rng, hidden, hidden),
                    Conv2d(rng, hidden, hidden), Conv2d(rng, hidden, 2, zero_init=True)]
        self.prior_net = conv_stack(rng, feat_channels, hidden, 2 * latent, depth=2)

    def encode(self, flow: Tensor) -> Tensor:
        h = flow
        for i, conv in enumerate(self.enc):
            h = conv(h)
            if i < len(self.enc) - 1:
                h = ops.leaky_relu(h)
        return h

    def decode(self, latent: Tensor) -> Tensor:
        h = latent
        for i, conv in enumerate(self.dec):
            h = conv(ops.upsample_bilinear(h))
            if i < len(self.dec) - 1:
                h = ops.leaky_relu(h)
        return h

    def prior(self, ref_feature: Tensor) -> tuple[Tensor, Tensor]:
        pooled = ref_feature
        for _ in range(4):
            pooled = ops.avg_pool2d(pooled)
        return _mean_scale(self.prior_net(pooled))


class ContextualEncoder(Module):
    """Strided encoder; contexts join at full, 1/2 and 1/4 resolution."""

    def __init__(self, rng: np.random.Generator, ctx: int, hidden: int, latent: int):
        self.stage0 = Conv2d(rng, 3 + ctx, hidden, stride=2)
        self.stage1 = Conv2d(rng, hidden + ctx, hidden, stride=2)
        self.stage2 = Conv2d(rng, hidden + ctx, hidden, stride=2)
        self.stage3 = Conv2d(rng, hidden, latent, stride=2)

    def forward(self, x: Tensor, ctx: ContextSet) -> Tensor:
        if x.shape[2:] != ctx.c0.shape[2:]:
            raise ShapeError("contextual_encode", f"frame {x.shape} vs context {ctx.c0.shape}")
        h = ops.leaky_relu(self.stage0(ops.concat([x, ctx.c0], axis=1)))
        h = ops.leaky_relu(self.stage1(ops.concat([h, ctx.c1], axis=1)))
        h = ops.leaky_relu(self.stage2(ops.concat([h, ctx.c2], axis=1)))
        return self.stage3(h)

    # stage index -> context scale it consumes (0 = full resolution)
    context_scales = {0: 0, 1: 1, 2: 2}


class ContextualDecoder(Module):
    """Mirror of the encoder: contexts re-injected at 1/4, 1/2 and full resolution."""

    def __init__(self, rng: np.random.Generator, ctx: int, hidden: int, latent: int):
        self.up3 = Conv2d(rng, latent, hidden)
        self.up2 = Conv2d(rng, hidden + ctx, hidden)
        self.up1 = Conv2d(rng, hidden + ctx, hidden)
        self.up0 = Conv2d(rng, hidden + ctx, hidden)

    def forward(self, y_hat: Tensor, ctx: ContextSet) -> Tensor:
        h = ops.leaky_relu(self.up3(ops.upsample_bilinear(y_hat)))
        h = ops.upsample_bilinear(h)
        if h.shape[2:] != ctx.c2.shape[2:]:
            raise ShapeError("contextual_decode", f"latent does not match context size {ctx.c2.shape}")
        h = ops.leaky_relu(self.up2(ops.concat([h, ctx.c2], axis=1)))
        h = ops.upsample_bilinear(h)
        h = ops.leaky_relu(self.up1(ops.concat([h, ctx.c1], axis=1)))
        h = ops.upsample_bilinear(h)
        return ops.leaky_relu(self.up0(ops.concat([h, ctx.c0], axis=1)))

    context_scales = {2: 2, 1: 1, 0: 0}


class ContextPrior(Module):
    """Gaussian mean/scale for the frame latent from the quarter-scale context."""

    def __init__(self, rng: np.random.Generator, ctx: int, hidden: int, latent: int):
        self.down1 = Conv2d(rng, ctx, hidden, stride=2)
        self.down2 = Conv2d(rng, hidden, hidden, stride=2)
        self.out = Conv2d(rng, hidden, 2 * latent, k=1)

    def forward(self, c2: Tensor) -> tuple[Tensor, Tensor]:
        h = ops.leaky_relu(self.down1(c2))
        h = ops.leaky_relu(self.down2(h))
        return _mean_scale(self.out(h))


class FrameGenerator(Module):
    """Two heads: the reconstruction (clamped to [0, 1]) and the feature F_t.

    The frame head predicts a correction on top of ``base`` (the
    motion-compensated prediction during coding, mid-grey when omitted).  Its
    last conv starts at zero, so an untrained generator reproduces ``base``.
    F_t goes through tanh: it is the recurrent state of the frame chain and
    must stay bounded over long sequences.
    """

    def __init__(self, rng: np.random.Generator, hidden: int, feat_channels: int):
        self.frame_head = conv_stack(rng, hidden, hidden, 3, depth=2, zero_last=True)
        self.feature_head = conv_stack(rng, hidden, hidden, feat_channels, depth=2)

    def forward(self, decoded: Tensor, base: Tensor | None = None) -> tuple[Tensor, Tensor]:
        correction = self.frame_head(decoded)
        frame = ops.clamp(correction + (0.5 if base is None else base), 0.0, 1.0)
        return frame, ops.tanh(self.feature_head(decoded))
