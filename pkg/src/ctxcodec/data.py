"""Procedural video: textured backgrounds under global motion plus independently moving objects.

Frames are evaluated analytically at sub-pixel positions, so motion is exact
and there is no resampling blur.  Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    frames: int = 8
    n_waves: int = 4
    n_objects: int = 2
    max_speed: float = 2.0
    noise: float = 0.01


def _texture(rng: np.random.Generator, n_waves: int):
    freqs = rng.uniform(0.02, 0.15, size=(n_waves, 2)) * rng.choice([-1, 1], size=(n_waves, 2))
    phases = rng.uniform(0, 2 * np.pi, n_waves)
    colors = rng.uniform(-0.25, 0.25, size=(n_waves, 3))
    base = rng.uniform(0.25, 0.75, 3)

    def sample(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(base[:, None, None], (3,) + yy.shape).copy()
        for (fy, fx), ph, col in zip(freqs, phases, colors):
            out += col[:, None, None] * np.sin(2 * np.pi * (fy * yy + fx * xx) + ph)[None]
        return out

    return sample


def _bounce(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Reflect ``x`` back into [lo, hi] (objects bounce off the frame margins)."""
    span = hi - lo
    u = np.mod(x - lo, 2 * span)
    return lo + np.where(u > span, 2 * span - u, u)


def render_sequence(spec: SceneSpec, seed: int) -> np.ndarray:
    """(T, 3, H, W) float32 in [0, 1]."""
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    background = _texture(rng, spec.n_waves)
    g_vel = rng.uniform(-spec.max_speed, spec.max_speed, 2)
    g_rot = rng.uniform(-0.01, 0.01)
    objects = []
    for _ in range(spec.n_objects):
        objects.append(dict(
            center=rng.uniform([0.2 * h, 0.2 * w], [0.8 * h, 0.8 * w]),
            vel=rng.uniform(-spec.max_speed, spec.max_speed, 2),
            radius=rng.uniform(0.1, 0.25) * min(h, w),
            texture=_texture(rng, 2),
        ))
    noise_rng = np.random.default_rng([seed, 1])
    frames = np.empty((spec.frames, 3, h, w), dtype=np.float32)
    cy, cx = h / 2, w / 2
    lo, hi = np.array([0.1 * h, 0.1 * w]), np.array([0.9 * h, 0.9 * w])
    for t in range(spec.frames):
        angle = g_rot * t
        c, s = np.cos(angle), np.sin(angle)
        ry = c * (yy - cy) - s * (xx - cx) + cy - g_vel[0] * t
        rx = s * (yy - cy) + c * (xx - cx) + cx - g_vel[1] * t
        img = background(ry, rx)
        for ob in objects:
            oy, ox = _bounce(ob["center"] + ob["vel"] * t, lo, hi)
            d = np.hypot(yy - oy, xx - ox)
            mask = np.clip(ob["radius"] - d + 0.5, 0.0, 1.0)[None]
            img = img * (1 - mask) + ob["texture"](yy - oy, xx - ox) * mask
        img += spec.noise * noise_rng.standard_normal(img.shape)
        frames[t] = np.clip(img, 0.0, 1.0)
    return frames


def translated_pair(seed: int, size: int = 32, shift: tuple[float, float] = (3.0, -2.0), n_waves: int = 4
                    ) -> tuple[np.ndarray, np.ndarray]:
    """(reference, target) with target(p) = reference(p + shift), shift as (dx, dy)."""
    rng = np.random.default_rng(seed)
    tex = _texture(rng, n_waves)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ref = np.clip(tex(yy, xx), 0, 1).astype(np.float32)
    tgt = np.clip(tex(yy + shift[1], xx + shift[0]), 0, 1).astype(np.float32)
    return ref, tgt


class SyntheticClips:
    """Infinite deterministic stream of training batches, one per step index."""

    def __init__(self, seed: int, frames: int, size: int, batch_size: int, spec: SceneSpec | None = None):
        self.seed = seed
        self.frames = frames
        self.size = size
        self.batch_size = batch_size
        self.spec = spec or SceneSpec()

    def batch(self, step: int, stream: int = 0) -> np.ndarray:
        """(N, T, 3, size, size); ``stream`` separates e.g. warm-up from main batches."""
        spec = SceneSpec(self.size, self.size, self.frames, self.spec.n_waves, self.spec.n_objects,
                         self.spec.max_speed, self.spec.noise)
        seeds = np.random.SeedSequence([self.seed, stream, step]).generate_state(self.batch_size)
        clips = [render_sequence(spec, int(s)) for s in seeds]
        return np.stack(clips)


def heldout_sequences(count: int, frames: int = 96, size: int = 64, base_seed: int = 10_000,
                      spec: SceneSpec | None = None) -> list[np.ndarray]:
    """Evaluation sequences; seeds disjoint from the training stream's."""
    spec = spec or SceneSpec()
    full = SceneSpec(size, size, frames, spec.n_waves, spec.n_objects, spec.max_speed, spec.noise)
    return [render_sequence(full, base_seed + i) for i in range(count)]
