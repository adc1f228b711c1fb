"""Rate-distortion loss and the cascaded multi-frame training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .codec.entropy import entropy_bits, quantize
from .codec.model import VideoCodec
from .config import TrainConfig
from .context import PropagationState, decoupling_loss
from .data import SyntheticClips
from .flow import warp
from .ingest import from_uint8, to_uint8
from .numerics import ParamStore, Tensor, backward, clip_grad_norm, ops

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "frame_index_in_clip", "lambda_t", "D", "R", "decouple", "cor_G", "cor_L", "total")


@dataclass
class LossBreakdown:
    """Tensors on the tape; ``values()`` gives plain floats for logging."""

    distortion: Tensor
    rate: Tensor
    decouple: Tensor
    total: Tensor
    lambda_t: float

    def values(self) -> dict[str, float]:
        return {"D": self.distortion.item(), "R": self.rate.item(), "decouple": self.decouple.item(),
                "total": self.total.item(), "lambda_t": self.lambda_t}


def rd_loss(x, x_hat, bits_est, decouple, lambda_t: float, alpha: float) -> LossBreakdown:
    """total = lambda_t * MSE + alpha * decouple + bits / pixels.

    ``x`` is N x C x H x W; the pixel count is N * H * W.
    """
    x, x_hat = Tensor(x) if not isinstance(x, Tensor) else x, x_hat
    if x.shape != x_hat.shape:
        raise ValueError(f"rd_loss: {x.shape} vs {x_hat.shape}")
    if not isinstance(bits_est, Tensor):
        bits_est = Tensor(np.asarray(bits_est, dtype=np.float64))
    if not isinstance(decouple, Tensor):
        decouple = Tensor(np.asarray(decouple, dtype=np.float64))
    n, _, h, w = x.shape
    distortion = ops.mean(ops.square(x_hat - x))
    rate = bits_est * (1.0 / (n * h * w))
    total = distortion * float(lambda_t) + rate
    if alpha:
        total = total + decouple * float(alpha)
    return LossBreakdown(distortion, rate, decouple, total, float(lambda_t))


def intra_reference(frames: np.ndarray) -> Tensor:
    """What the decoder holds after a raw I-frame: the 8-bit quantised input."""
    return Tensor(from_uint8(to_uint8(frames)))


@dataclass
class TrainResult:
    model: VideoCodec
    store: ParamStore
    rows: list[dict] = field(default_factory=list)
    warmup_rows: list[dict] = field(default_factory=list)


def _apply(store: ParamStore, loss: Tensor, lr: float, clip: float) -> float:
    store.zero_grad()
    backward(loss)
    grads = store.grads()
    norm = clip_grad_norm(grads, clip)
    store.step(grads, lr)
    return norm


def warmup_step(model: VideoCodec, clip: np.ndarray, lambda_t: float) -> tuple[Tensor, dict]:
    """Motion-only objective: warp the previous frame with the decoded flow."""
    ref = intra_reference(clip[:, 0])
    x = Tensor(clip[:, 1])
    flow = model.motion_estimator(ref, x)
    y_hat = quantize(model.motion_coder.encode(flow), "train")
    mean, scale = model.motion_coder.prior(model.refresh(ref))
    warped = warp(ref, model.motion_coder.decode(y_hat))
    bits = entropy_bits(y_hat, mean, scale)
    parts = rd_loss(x, warped, bits, 0.0, lambda_t, 0.0)
    return parts.total, parts.values()


def sync_orientation(model: VideoCodec) -> None:
    """Start the orientation estimator from the motion estimator's weights."""
    if not model.config.orientation:
        return
    src = dict(model.motion_estimator.named_parameters())
    for name, p in model.orientation.estimator.named_parameters():
        p.data = src[name].data.copy()


def cascade_loss(model: VideoCodec, clip: np.ndarray, config: TrainConfig, frame_offset: int = 0
                 ) -> tuple[Tensor, list[dict]]:
    """Code frames 1..T-1 of ``clip`` (N, T, 3, H, W) in a chain; mean loss over P-frames."""
    alpha = config.alpha if config.decouple_loss else 0.0
    state = model.refresh_state(intra_reference(clip[:, 0]), 0)
    total = None
    rows = []
    n_p = clip.shape[1] - 1
    for t in range(1, clip.shape[1]):
        out = model(Tensor(clip[:, t]), state)
        terms = out.side.terms
        if terms is not None:
            dec = ops.mean(decoupling_loss(terms.cor_l, terms.cor_g))
            cor_g, cor_l = float(terms.cor_g.data.mean()), float(terms.cor_l.data.mean())
        else:
            dec = Tensor(np.zeros((), dtype=np.float32))
            cor_g = cor_l = float("nan")
        lam = config.lambda_for_frame(frame_offset + t)
        parts = rd_loss(Tensor(clip[:, t]), out.x_hat, out.bits, dec, lam, alpha)
        total = parts.total if total is None else total + parts.total
        rows.append({"frame_index_in_clip": t, **parts.values(), "cor_G": cor_g, "cor_L": cor_l})
        state = PropagationState(out.x_hat, out.feature, t)
    return total * (1.0 / n_p), rows


def train_cascaded(config: TrainConfig, dataset=None, model: VideoCodec | None = None,
                   log_path=None, progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Optional supervised flow pre-training, warm-up on motion, then end-to-end
    training through the frame chain.

    ``dataset`` needs ``batch(step, stream) -> (N, T, 3, H, W)``; defaults to the
    synthetic clip stream.  Clips shorter than ``frames_per_clip`` are skipped.
    """
    model = model or VideoCodec(config.model_config(), seed=config.seed)
    store = ParamStore.from_module(model)
    if dataset is None:
        dataset = SyntheticClips(config.seed, config.frames_per_clip, config.crop_size, config.batch_size)
    result = TrainResult(model, store)

    if config.flow_pretrain_steps:
        pretrain_flow(model.motion_estimator, config.flow_pretrain_steps, seed=config.seed,
                      size=min(config.crop_size, 32), lr=config.warmup_learning_rate)
    for step in range(config.warmup_steps):
        clip = dataset.batch(step, stream=1)
        loss, values = warmup_step(model, clip, config.base_lambda)
        _apply(store, loss, config.warmup_learning_rate, config.grad_clip)
        result.warmup_rows.append({"step": step, **values})
    if config.warmup_steps:
        sync_orientation(model)
        store = ParamStore.from_module(model)
        result.store = store

    for step in range(config.steps):
        clip = dataset.batch(step)
        if clip.shape[1] < config.frames_per_clip:
            log.warning("step %d: clip has %d frames, need %d; skipped", step, clip.shape[1], config.frames_per_clip)
            continue
        clip = clip[:, :config.frames_per_clip]
        loss, rows = cascade_loss(model, clip, config)
        _apply(store, loss, config.learning_rate, config.grad_clip)
        for row in rows:
            values = [row[k] for k in ("D", "R", "decouple", "total")]
            if not all(np.isfinite(values)) or min(values) < 0:
                raise FloatingPointError(f"step {step}: invalid loss components {row}")
            result.rows.append({"step": step, **row})
        if progress is not None:
            progress(step, loss.item())

    if log_path is not None:
        write_log(log_path, result.rows)
    return result


def write_log(path, rows: list[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{row[k]:.9g}" if isinstance(row[k], float) else row[k]) for k in LOG_COLUMNS})


def pretrain_flow(model, steps: int, seed: int = 0, size: int = 32, lr: float = 1e-3, max_shift: float = 4.0,
                  batch_size: int = 4) -> list[float]:
    """Supervised training of a pyramid estimator on synthetic translations.

    Targets satisfy target(p) = reference(p + d), so the ground-truth flow is d.
    The learning rate follows a cosine decay to 5% of ``lr``.
    """
    from .data import translated_pair

    store = ParamStore.from_module(model)
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        refs, tgts, gts = [], [], []
        for _ in range(batch_size):
            d = rng.uniform(-max_shift, max_shift, 2)
            if rng.random() < 0.2:
                d = np.zeros(2)
            ref, tgt = translated_pair(int(rng.integers(2**31)), size, (float(d[0]), float(d[1])))
            refs.append(ref)
            tgts.append(tgt)
            gts.append(np.broadcast_to(d[:, None, None], (2, size, size)))
        flow = model(Tensor(np.stack(refs)), Tensor(np.stack(tgts)))
        gt = Tensor(np.stack(gts).astype(np.float32))
        loss = ops.mean(ops.abs(flow - gt))
        _apply(store, loss, lr * (0.05 + 0.475 * (1 + math.cos(math.pi * step / steps))), 10.0)
        losses.append(loss.item())
    return losses
