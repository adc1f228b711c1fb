"""PSNR, bits per pixel, Bjontegaard delta rate and per-frame traces."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitstream import I_FRAME
from .codec.model import VideoCodec
from .codec.sequence import iter_decode

PSNR_CAP = 100.0


class EvaluationError(ValueError):
    pass


def mse(x: np.ndarray, x_hat: np.ndarray) -> float:
    if x.shape != x_hat.shape:
        raise EvaluationError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    d = x.astype(np.float64) - x_hat.astype(np.float64)
    return float(np.mean(d * d))


def psnr(x: np.ndarray, x_hat: np.ndarray) -> float:
    """RGB PSNR in dB for [0, 1] images; identical inputs give the 100 dB cap."""
    err = mse(x, x_hat)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / err))


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    quality: float


def validate_curve(points) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted((RDPoint(float(p.bpp), float(p.quality)) if isinstance(p, RDPoint) else RDPoint(*map(float, p))
                  for p in points), key=lambda p: p.bpp)
    if len(pts) < 4:
        raise EvaluationError(f"BD-rate needs at least 4 points, got {len(pts)}")
    rate = np.array([p.bpp for p in pts])
    quality = np.array([p.quality for p in pts])
    if np.any(rate <= 0):
        raise EvaluationError("bpp must be positive")
    if np.any(np.diff(rate) <= 0) or np.any(np.diff(quality) <= 0):
        raise EvaluationError("RD curve must be strictly increasing in both bpp and PSNR")
    return rate, quality


def bd_rate(anchor, test) -> float:
    """Average bitrate difference (percent) of ``test`` against ``anchor`` at equal PSNR.

    Each curve is fitted with a cubic polynomial log10(bpp) = p(PSNR); the fits
    are integrated exactly over the shared PSNR interval.  Negative means the
    test codec needs fewer bits.
    """
    ra, qa = validate_curve(anchor)
    rt, qt = validate_curve(test)
    lo, hi = max(qa.min(), qt.min()), min(qa.max(), qt.max())
    if hi <= lo:
        raise EvaluationError(f"PSNR ranges do not overlap ([{qa.min()}, {qa.max()}] vs [{qt.min()}, {qt.max()}])")
    pa = np.polynomial.Polynomial.fit(qa, np.log10(ra), 3).convert()
    pt = np.polynomial.Polynomial.fit(qt, np.log10(rt), 3).convert()
    ia, it = pa.integ(), pt.integ()
    avg = ((it(hi) - it(lo)) - (ia(hi) - ia(lo))) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)


def read_rd_csv(path) -> list[RDPoint]:
    """``bpp,psnr_db`` per line; a header line is allowed."""
    points = []
    with Path(path).open() as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            try:
                points.append(RDPoint(float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise EvaluationError(f"{path}:{i + 1}: expected 'bpp,psnr_db'") from None
    return points


# ---------------------------------------------------------------------------
# sequence evaluation


@dataclass
class TraceRow:
    t: int
    frame_type: str
    bpp: float
    psnr_db: float
    mse: float


@dataclass
class SequenceSummary:
    name: str
    bpp: float
    psnr_db: float
    mse: float
    frames: int

    def rd_point(self) -> RDPoint:
        return RDPoint(self.bpp, self.psnr_db)

    def rd_cost(self, lam: float = 170.0) -> float:
        return lam * self.mse + self.bpp


def eval_sequence(model: VideoCodec, data: bytes, originals: list[np.ndarray], name: str = ""
                  ) -> tuple[list[TraceRow], SequenceSummary]:
    """Decode ``data`` and score it against ``originals`` (unpadded 3xHxW frames)."""
    rows = []
    bits = 0
    pixels = 0
    for header, rec in iter_decode(model, data):
        if rec.index >= len(originals):
            raise EvaluationError(f"stream has more frames than the reference ({len(originals)})")
        ref = originals[rec.index][..., :header.height, :header.width]
        n_pix = header.height * header.width
        bits += rec.nbytes * 8
        pixels += n_pix
        err = mse(ref, rec.reconstruction)
        rows.append(TraceRow(rec.index, "I" if rec.frame_type == I_FRAME else "P", rec.nbytes * 8 / n_pix,
                             psnr(ref, rec.reconstruction), err))
    if not rows:
        raise EvaluationError("stream contains no frames")
    summary = SequenceSummary(name, bits / pixels, float(np.mean([r.psnr_db for r in rows])),
                              float(np.mean([r.mse for r in rows])), len(rows))
    return rows, summary


def write_trace(path, rows: list[TraceRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("t,type,bpp,psnr_db\n")
        for r in rows:
            fh.write(f"{r.t},{r.frame_type},{r.bpp:.6f},{r.psnr_db:.6f}\n")


def read_trace(path) -> list[TraceRow]:
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        return [TraceRow(int(r["t"]), r["type"], float(r["bpp"]), float(r["psnr_db"]), float("nan"))
                for r in reader]


def write_summary(path, summaries: list[SequenceSummary]) -> None:
    payload = [{"name": s.name, "bpp": s.bpp, "psnr_db": s.psnr_db} for s in summaries]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
