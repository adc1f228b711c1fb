"""The full P-frame codec: motion, context modulation, contextual coding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ModelConfig
from ..context import (
    ContextCompensation,
    ContextSet,
    DecoupleTerms,
    FeatureRefresh,
    PropagationState,
    TemporalContextMiner,
    decoupling_loss,
)
from ..flow import FlowOrientation, OrientedContextExtractor, PyramidFlowEstimator, warp
from ..numerics import Module, NonFiniteError, Tensor, load_checkpoint, no_grad, save_checkpoint
from .entropy import decode_latent, encode_latent, entropy_bits, quantize, saturation_count
from .networks import ContextPrior, ContextualDecoder, ContextualEncoder, FrameGenerator, MotionCoder

# Fixed sub-streams of the init RNG, so a module's initial weights do not
# depend on which optional modules a variant builds.
_INIT_STREAMS = {
    "motion_estimator": 1, "motion_coder": 2, "refresh": 3, "miner": 4, "encoder": 5,
    "prior": 6, "decoder": 7, "generator": 8, "orientation": 9, "oriented_extractor": 10,
    "compensation": 11,
}


@dataclass
class DecoderSide:
    """Everything derived from the decoded motion and the previous state."""

    flow_hat: Tensor
    contexts: ContextSet
    propagated_c0: Tensor
    prediction: Tensor | None = None
    oriented_flow: Tensor | None = None
    oriented_context: Tensor | None = None
    terms: DecoupleTerms | None = None


@dataclass
class PFrameOutput:
    """Training-time forward of one P-frame (all Tensors stay on the tape)."""

    x_hat: Tensor
    feature: Tensor
    flow: Tensor
    bits_motion: Tensor
    bits_latent: Tensor
    side: DecoderSide

    @property
    def bits(self) -> Tensor:
        return self.bits_motion + self.bits_latent


@dataclass
class FrameStats:
    bits_motion_est: float
    bits_context_est: float
    bytes_motion: int
    bytes_context: int
    bpp_motion: float
    bpp_context: float
    mse: float
    cor_g: float | None = None
    cor_l: float | None = None
    decouple: float | None = None
    saturated: int = 0

    @property
    def bpp(self) -> float:
        return self.bpp_motion + self.bpp_context


@dataclass
class PFramePayload:
    motion: bytes
    context: bytes

    @property
    def nbytes(self) -> int:
        return len(self.motion) + len(self.context)


@dataclass
class SideHashes:
    """Digests of (prediction frame, oriented flow, oriented context)."""

    prediction: str | None = None
    oriented_flow: str | None = None
    oriented_context: str | None = None
    reconstruction: str = ""

    def as_tuple(self) -> tuple:
        return (self.prediction, self.oriented_flow, self.oriented_context, self.reconstruction)


def tensor_digest(t: Tensor | None) -> str | None:
    if t is None:
        return None
    arr = np.ascontiguousarray(t.data)
    h = hashlib.sha256(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class EncodedPFrame:
    payload: PFramePayload
    state: PropagationState
    stats: FrameStats
    hashes: SideHashes = field(default_factory=SideHashes)


class VideoCodec(Module):
    """All learned parts of the codec, built from a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.seed = seed
        c = self.config

        def rng(name: str) -> np.random.Generator:
            return np.random.default_rng([seed, _INIT_STREAMS[name]])

        self.motion_estimator = PyramidFlowEstimator(rng("motion_estimator"), c.flow_levels, c.flow_hidden)
        self.motion_coder = MotionCoder(rng("motion_coder"), c.motion_channels, c.hidden_channels, c.feat_channels)
        self.refresh = FeatureRefresh(rng("refresh"), c.feat_channels, c.hidden_channels)
        self.miner = TemporalContextMiner(rng("miner"), c.feat_channels, c.ctx_channels, c.hidden_channels)
        self.encoder = ContextualEncoder(rng("encoder"), c.ctx_channels, c.hidden_channels, c.latent_channels)
        self.prior = ContextPrior(rng("prior"), c.ctx_channels, c.hidden_channels, c.latent_channels)
        self.decoder = ContextualDecoder(rng("decoder"), c.ctx_channels, c.hidden_channels, c.latent_channels)
        self.generator = FrameGenerator(rng("generator"), c.hidden_channels, c.feat_channels)
        if c.orientation:
            self.orientation = FlowOrientation(rng("orientation"), c.flow_levels, c.flow_hidden)
        if c.uses_second_context:
            self.oriented_extractor = OrientedContextExtractor(rng("oriented_extractor"), c.ctx_channels,
                                                               c.hidden_channels)
            self.compensation = ContextCompensation(rng("compensation"), c.ctx_channels, c.compensation_mode,
                                                    c.coupling_layers, c.coupling_scale)

    # -- shared pieces -----------------------------------------------------

    def refresh_state(self, frame: Tensor, index: int = 0) -> PropagationState:
        """State after an intra frame: F comes from the reconstruction alone."""
        return PropagationState(frame, self.refresh(frame), index)

    def decoder_side(self, flow_hat: Tensor, state: PropagationState) -> DecoderSide:
        """Context modulation from decoded quantities only."""
        ctx = self.miner(state, flow_hat)
        side = DecoderSide(flow_hat, ctx, ctx.c0)
        ref = state.ref_frame
        if not self.config.uses_second_context:
            side.prediction = warp(ref, flow_hat)
            return side
        if self.config.orientation:
            side.prediction, side.oriented_flow = self.orientation(ref, flow_hat)
            side.oriented_context = self.oriented_extractor(ref, side.oriented_flow)
        else:
            side.prediction = warp(ref, flow_hat)
            side.oriented_context = self.oriented_extractor.features(side.prediction)
        c0_bar, side.terms = self.compensation(ctx.c0, side.oriented_context)
        side.contexts = ContextSet(c0_bar, ctx.c1, ctx.c2)
        return side

    def reconstruct(self, y_hat: Tensor, side: DecoderSide) -> tuple[Tensor, Tensor]:
        return self.generator(self.decoder(y_hat, side.contexts), side.prediction)

    # -- training ----------------------------------------------------------

    def forward(self, x: Tensor, state: PropagationState) -> PFrameOutput:
        flow = self.motion_estimator(state.ref_frame, x)
        y_mv_hat = quantize(self.motion_coder.encode(flow), "train")
        mv_mean, mv_scale = self.motion_coder.prior(state.ref_feature)
        flow_hat = self.motion_coder.decode(y_mv_hat)
        side = self.decoder_side(flow_hat, state)
        y_hat = quantize(self.encoder(x, side.contexts), "train")
        mean, scale = self.prior(side.contexts.c2)
        x_hat, feature = self.reconstruct(y_hat, side)
        return PFrameOutput(
            x_hat=x_hat,
            feature=feature,
            flow=flow,
            bits_motion=entropy_bits(y_mv_hat, mv_mean, mv_scale),
            bits_latent=entropy_bits(y_hat, mean, scale),
            side=side,
        )

    # -- coding ------------------------------------------------------------

    def encode_p_frame(self, x: Tensor, state: PropagationState, original_size: tuple[int, int] | None = None
                       ) -> EncodedPFrame:
        """Code one padded frame ``x`` (1x3xHxW) against ``state``.

        ``original_size`` (h, w) is the pre-padding size used for the bpp and
        MSE figures; defaults to the padded size.
        """
        if not np.all(np.isfinite(x.data)):
            raise NonFiniteError("encode_p_frame", x.id)
        h, w = original_size or x.shape[2:]
        with no_grad():
            flow = self.motion_estimator(state.ref_frame, x)
            if not np.all(np.isfinite(flow.data)):
                raise NonFiniteError("encode_motion", flow.id)
            y_mv = self.motion_coder.encode(flow)
            saturated = saturation_count(y_mv.data)
            y_mv_hat = quantize(y_mv)
            mv_mean, mv_scale = self.motion_coder.prior(state.ref_feature)
            motion_bytes = encode_latent(y_mv_hat.data, mv_mean.data, mv_scale.data)
            side = self.decoder_side(self.motion_coder.decode(y_mv_hat), state)

            y = self.encoder(x, side.contexts)
            saturated += saturation_count(y.data)
            y_hat = quantize(y)
            mean, scale = self.prior(side.contexts.c2)
            context_bytes = encode_latent(y_hat.data, mean.data, scale.data)
            x_hat, feature = self.reconstruct(y_hat, side)

        diff = x.data[..., :h, :w].astype(np.float64) - x_hat.data[..., :h, :w]
        pixels = h * w
        stats = FrameStats(
            bits_motion_est=entropy_bits(y_mv_hat.data, mv_mean.data, mv_scale.data),
            bits_context_est=entropy_bits(y_hat.data, mean.data, scale.data),
            bytes_motion=len(motion_bytes),
            bytes_context=len(context_bytes),
            bpp_motion=len(motion_bytes) * 8 / pixels,
            bpp_context=len(context_bytes) * 8 / pixels,
            mse=float(np.mean(diff * diff)),
            saturated=saturated,
        )
        if side.terms is not None:
            stats.cor_g = float(side.terms.cor_g.data.mean())
            stats.cor_l = float(side.terms.cor_l.data.mean())
            stats.decouple = float(decoupling_loss(side.terms.cor_l, side.terms.cor_g).data.mean())
        new_state = PropagationState(x_hat, feature, state.index + 1)
        return EncodedPFrame(PFramePayload(motion_bytes, context_bytes), new_state, stats,
                             self._hashes(side, x_hat))

    def decode_p_frame(self, payload: PFramePayload, state: PropagationState
                       ) -> tuple[Tensor, PropagationState, SideHashes]:
        with no_grad():
            mv_mean, mv_scale = self.motion_coder.prior(state.ref_feature)
            y_mv_hat = Tensor(decode_latent(payload.motion, mv_mean.data, mv_scale.data))
            side = self.decoder_side(self.motion_coder.decode(y_mv_hat), state)
            mean, scale = self.prior(side.contexts.c2)
            y_hat = Tensor(decode_latent(payload.context, mean.data, scale.data))
            x_hat, feature = self.reconstruct(y_hat, side)
        return x_hat, PropagationState(x_hat, feature, state.index + 1), self._hashes(side, x_hat)

    @staticmethod
    def _hashes(side: DecoderSide, x_hat: Tensor) -> SideHashes:
        return SideHashes(tensor_digest(side.prediction), tensor_digest(side.oriented_flow),
                          tensor_digest(side.oriented_context), tensor_digest(x_hat))

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Weights as CMWT plus a ``.json`` sidecar with the architecture."""
        path = Path(path)
        save_checkpoint(path, self.state_dict())
        sidecar = {"model": self.config.to_dict(), "seed": self.seed}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "VideoCodec":
        path = Path(path)
        sidecar = path.with_suffix(path.suffix + ".json")
        if not sidecar.exists():
            raise FileNotFoundError(f"model config sidecar {sidecar} not found")
        meta = json.loads(sidecar.read_text())
        model = cls(ModelConfig.from_dict(meta["model"]), seed=int(meta.get("seed", 0)))
        model.load_state_dict(load_checkpoint(path))
        return model


def encode_motion(model: VideoCodec, flow: Tensor, ref_feature: Tensor) -> tuple[np.ndarray, Tensor, float]:
    """Motion latent, decoded flow and its estimated bit cost."""
    if not np.all(np.isfinite(flow.data)):
        raise NonFiniteError("encode_motion", flow.id)
    with no_grad():
        y_hat = quantize(model.motion_coder.encode(flow))
        mean, scale = model.motion_coder.prior(ref_feature)
        flow_hat = model.motion_coder.decode(y_hat)
    return y_hat.data, flow_hat, entropy_bits(y_hat.data, mean.data, scale.data)


def contextual_encode(model: VideoCodec, x: Tensor, contexts: ContextSet) -> Tensor:
    return model.encoder(x, contexts)


def contextual_decode(model: VideoCodec, y_hat: Tensor, contexts: ContextSet) -> Tensor:
    return model.decoder(y_hat, contexts)


def generate_frame(model: VideoCodec, decoded: Tensor, base: Tensor | None = None) -> tuple[Tensor, Tensor]:
    return model.generator(decoded, base)

