"""Quantisation and the conditional Gaussian rate model."""

from __future__ import annotations

import numpy as np
from scipy import special

from ..numerics import Tensor, ops
from .rangecoder import TOTAL, range_decode, range_encode

LATENT_MAX = 64
SCALE_MIN = 0.04
PROB_MIN = 2.0 ** -16
_SUPPORT = np.arange(-LATENT_MAX, LATENT_MAX + 1, dtype=np.float64)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(y: Tensor, mode: str = "infer") -> Tensor:
    """``infer``: round half away from zero and clamp to +-64.
    ``train``: straight-through rounding (identity gradient).
    """
    if mode == "train":
        return ops.round_ste(y)
    if mode != "infer":
        raise ValueError(f"unknown quantisation mode {mode!r}")
    q = np.clip(round_half_away(y.data), -LATENT_MAX, LATENT_MAX).astype(y.dtype)
    return Tensor(q)


def saturation_count(y: np.ndarray) -> int:
    """How many entries the +-64 clamp changes."""
    return int(np.count_nonzero(np.abs(round_half_away(y)) > LATENT_MAX))


def likelihood(y_hat: Tensor, mean: Tensor, scale: Tensor) -> Tensor:
    """Probability mass of the unit bin around ``y_hat``, floored at 2^-16.

    Evaluated on the lower tail (``|y - mean|`` mirrored) to avoid
    cancellation far from the mean.
    """
    v = ops.abs(y_hat - mean)
    upper = ops.normal_cdf((0.5 - v) / scale)
    lower = ops.normal_cdf((-0.5 - v) / scale)
    return ops.lower_bound(upper - lower, PROB_MIN)


def entropy_bits(y_hat, mean, scale):
    """Estimated code length in bits, summed over all entries.

    Tensor inputs give a differentiable scalar Tensor; numpy inputs a float.
    """
    if isinstance(y_hat, Tensor):
        return ops.sum(ops.neg(ops.log2(likelihood(y_hat, mean, scale))))
    return float(np.sum(bits_per_entry(np.asarray(y_hat), np.asarray(mean), np.asarray(scale))))


def bits_per_entry(y_hat: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    v = np.abs(y_hat.astype(np.float64) - mean)
    p = special.ndtr((0.5 - v) / scale) - special.ndtr((-0.5 - v) / scale)
    return -np.log2(np.maximum(p, PROB_MIN))


def cdf_tables(mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Integer CDFs over symbols -64..64 for every (mean, scale) pair.

    Deterministic function of its inputs; encoder and decoder call it on
    bit-identical parameters.  Every symbol keeps a frequency of at least 1
    and rounding slack goes to the most probable symbol.
    """
    mu = np.asarray(mean, dtype=np.float64).reshape(-1, 1)
    sigma = np.asarray(scale, dtype=np.float64).reshape(-1, 1)
    v = np.abs(_SUPPORT[None, :] - mu)
    pmf = special.ndtr((0.5 - v) / sigma) - special.ndtr((-0.5 - v) / sigma)
    k = _SUPPORT.size
    freq = np.maximum(1, np.floor(pmf * (TOTAL - k))).astype(np.int64)
    slack = TOTAL - freq.sum(axis=1)
    rows = np.arange(freq.shape[0])
    freq[rows, np.argmax(freq, axis=1)] += slack
    cdf = np.zeros((freq.shape[0], k + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return cdf


def encode_latent(y_hat: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> bytes:
    symbols = y_hat.reshape(-1).astype(np.int64) + LATENT_MAX
    return range_encode(symbols, cdf_tables(mean, scale))


def decode_latent(payload: bytes, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    symbols = range_decode(payload, cdf_tables(mean, scale))
    return (symbols - LATENT_MAX).astype(np.float32).reshape(np.shape(mean))
