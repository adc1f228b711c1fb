"""Offline figures: feature heatmaps, flow dumps and per-frame trace plots."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def _normalise(a: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(a.min()), float(a.max())
    scaled = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a, dtype=np.float64)
    return np.round(scaled * 255).astype(np.uint8), lo, hi


def save_heatmap(path, feature: np.ndarray) -> None:
    """Channel mean of a CxHxW (or 1xCxHxW) tensor as a min-max scaled grey PNG."""
    feature = np.asarray(feature)
    if feature.ndim == 4:
        feature = feature[0]
    img, _, _ = _normalise(feature.mean(axis=0))
    Image.fromarray(img, mode="L").save(path)


def save_flow(prefix, flow: np.ndarray) -> list[Path]:
    """Writes ``<prefix>_x.png``, ``<prefix>_y.png`` and ``<prefix>_range.txt``.

    The text file holds ``channel min max`` lines so the PNGs can be mapped
    back to pixel displacements.
    """
    flow = np.asarray(flow)
    if flow.ndim == 4:
        flow = flow[0]
    prefix = Path(prefix)
    paths, lines = [], []
    for ch, tag in enumerate("xy"):
        img, lo, hi = _normalise(flow[ch])
        p = prefix.with_name(f"{prefix.name}_{tag}.png")
        Image.fromarray(img, mode="L").save(p)
        paths.append(p)
        lines.append(f"{tag} {lo:.9g} {hi:.9g}")
    rng_path = prefix.with_name(f"{prefix.name}_range.txt")
    rng_path.write_text("\n".join(lines) + "\n")
    return paths + [rng_path]


def load_flow(prefix) -> np.ndarray:
    """Inverse of :func:`save_flow` up to 8-bit quantisation."""
    prefix = Path(prefix)
    ranges = {}
    for line in prefix.with_name(f"{prefix.name}_range.txt").read_text().split("\n"):
        if line.strip():
            tag, lo, hi = line.split()
            ranges[tag] = (float(lo), float(hi))
    chans = []
    for tag in "xy":
        img = np.asarray(Image.open(prefix.with_name(f"{prefix.name}_{tag}.png")), dtype=np.float64) / 255
        lo, hi = ranges[tag]
        chans.append(lo + img * (hi - lo))
    return np.stack(chans)


def plot_trace(rows, out, title: str | None = None) -> None:
    """Two stacked panels (PSNR and bpp against frame index) written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r.t for r in rows]
    fig, (ax_q, ax_r) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax_q.plot(t, [r.psnr_db for r in rows], lw=1.2)
    ax_q.set_ylabel("PSNR (dB)")
    ax_r.plot(t, [r.bpp for r in rows], lw=1.2, color="tab:orange")
    ax_r.set_ylabel("bpp")
    ax_r.set_yscale("log")
    ax_r.set_xlabel("frame")
    intra = [r.t for r in rows if r.frame_type == "I"]
    for ax in (ax_q, ax_r):
        for i in intra:
            ax.axvline(i, color="0.8", lw=0.8, zorder=0)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
