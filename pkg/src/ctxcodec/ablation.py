"""Train-and-evaluate loop for the context-modulation ablation variants.

Each (variant, seed) run is cached as JSON next to its checkpoint, keyed by a
hash of the full training config and the evaluation protocol, so repeated
invocations only pay for what changed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec.model import VideoCodec
from .codec.sequence import encode_sequence
from .config import TrainConfig, variant_config
from .data import SceneSpec, heldout_sequences
from .evaluation import SequenceSummary, eval_sequence
from .ingest import Video, pad_frame
from .training import train_cascaded, write_log

log = logging.getLogger(__name__)

# Bumped whenever a change to the code invalidates cached results.
CACHE_VERSION = 5
EVAL_LAMBDA = 170.0


@dataclass(frozen=True)
class EvalProtocol:
    sequences: int = 2
    frames: int = 96
    size: int = 64
    intra_period: int = -1
    base_seed: int = 10_000


@dataclass
class VariantResult:
    variant: str
    seed: int
    key: str
    train_seconds: float
    rd_cost: float
    bpp: float
    psnr_db: float
    mse: float
    psnr_per_frame: list[float] = field(default_factory=list)
    bpp_per_frame: list[float] = field(default_factory=list)

    @property
    def psnr_decline(self) -> float:
        """PSNR at frame 1 minus PSNR at the last frame (positive = quality drops)."""
        return self.psnr_per_frame[1] - self.psnr_per_frame[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "VariantResult":
        return cls(**data)


def run_key(config: TrainConfig, protocol: EvalProtocol) -> str:
    blob = json.dumps({"v": CACHE_VERSION, "train": config.to_dict(), "eval": asdict(protocol)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def protocol_videos(protocol: EvalProtocol) -> list[Video]:
    spec = SceneSpec(protocol.size, protocol.size, protocol.frames)
    seqs = heldout_sequences(protocol.sequences, protocol.frames, protocol.size, protocol.base_seed, spec)
    return [Video([pad_frame(f) for f in seq], protocol.size, protocol.size, name=f"heldout{i}")
            for i, seq in enumerate(seqs)]


def evaluate_model(model: VideoCodec, videos: list[Video], intra_period: int = -1, lambda_index: int = 1
                   ) -> tuple[list[SequenceSummary], np.ndarray, np.ndarray]:
    """Summaries plus per-frame PSNR and bpp averaged over the videos."""
    summaries, psnrs, bpps = [], [], []
    for video in videos:
        enc = encode_sequence(model, video, intra_period, lambda_index)
        rows, summary = eval_sequence(model, enc.data, [video.cropped(t) for t in range(len(video))], video.name)
        summaries.append(summary)
        psnrs.append([r.psnr_db for r in rows])
        bpps.append([r.bpp for r in rows])
    return summaries, np.mean(psnrs, axis=0), np.mean(bpps, axis=0)


def run_variant(base: TrainConfig, variant: str, seed: int, protocol: EvalProtocol, out_dir,
                use_cache: bool = True, videos: list[Video] | None = None) -> VariantResult:
    config = variant_config(base, variant).replace(seed=seed)
    key = run_key(config, protocol)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"{variant}_s{seed}_{key}"
    cached = stem.with_suffix(".json")
    if use_cache and cached.exists():
        return VariantResult.from_dict(json.loads(cached.read_text()))

    log.info("training %s seed %d (%s)", variant, seed, key)
    start = time.perf_counter()
    trained = train_cascaded(config)
    seconds = time.perf_counter() - start
    trained.model.save(stem.with_suffix(".cmwt"))
    write_log(stem.with_suffix(".log.csv"), trained.rows)

    videos = videos if videos is not None else protocol_videos(protocol)
    summaries, psnr_t, bpp_t = evaluate_model(trained.model, videos, protocol.intra_period, config.lambda_index)
    mse = float(np.mean([s.mse for s in summaries]))
    bpp = float(np.mean([s.bpp for s in summaries]))
    result = VariantResult(
        variant=variant, seed=seed, key=key, train_seconds=seconds,
        rd_cost=float(np.mean([s.rd_cost(EVAL_LAMBDA) for s in summaries])),
        bpp=bpp, psnr_db=float(np.mean([s.psnr_db for s in summaries])), mse=mse,
        psnr_per_frame=[float(v) for v in psnr_t], bpp_per_frame=[float(v) for v in bpp_t],
    )
    cached.write_text(json.dumps(result.to_dict(), indent=1) + "\n")
    return result


def run_ablation(base: TrainConfig, variants, seeds, protocol: EvalProtocol, out_dir, use_cache: bool = True
                 ) -> dict[str, list[VariantResult]]:
    videos = None
    results: dict[str, list[VariantResult]] = {}
    for variant in variants:
        for seed in seeds:
            config = variant_config(base, variant).replace(seed=seed)
            cached = Path(out_dir) / f"{variant}_s{seed}_{run_key(config, protocol)}.json"
            if videos is None and not (use_cache and cached.exists()):
                videos = protocol_videos(protocol)
            results.setdefault(variant, []).append(
                run_variant(base, variant, seed, protocol, out_dir, use_cache, videos))
    return results


def format_table(results: dict[str, list[VariantResult]], anchor: str | None = None) -> str:
    """Markdown table of mean RD cost, bpp, PSNR and quality decline per variant."""
    anchor = anchor or next(iter(results))
    ref = np.mean([r.rd_cost for r in results[anchor]])
    lines = ["| variant | seeds | RD cost | vs " + anchor + " | bpp | PSNR (dB) | PSNR decline (dB) |",
             "|---|---|---|---|---|---|---|"]
    for name, runs in results.items():
        cost = np.mean([r.rd_cost for r in runs])
        lines.append(f"| {name} | {len(runs)} | {cost:.5f} | {100 * (cost / ref - 1):+.2f}% | "
                     f"{np.mean([r.bpp for r in runs]):.4f} | {np.mean([r.psnr_db for r in runs]):.3f} | "
                     f"{np.mean([r.psnr_decline for r in runs]):.3f} |")
    return "\n".join(lines)
