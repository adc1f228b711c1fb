"""Central finite-difference checks for the autodiff primitives."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[Sequence[np.ndarray]], float], arrays: list[np.ndarray], which: int,
                 step: float = 1e-3) -> np.ndarray:
    """d fn / d arrays[which] by central differences (mutates and restores)."""
    x = arrays[which]
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(arrays)
        flat[i] = orig - step
        fm = fn(arrays)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(op: Callable[..., Tensor], arrays: list[np.ndarray], step: float = 1e-3,
                    seed: int = 0) -> list[float]:
    """Relative error between analytic and numeric gradients for each input.

    The scalar test loss is ``sum(op(*inputs) * r)`` with a fixed random
    projection ``r`` so every output element contributes with its own weight.
    Inputs are promoted to float64 so the finite differences are not limited
    by float32 rounding.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = op(*[Tensor(a) for a in arrays])
    r = np.random.default_rng(seed).standard_normal(probe.shape)

    def scalar(arrs):
        return float(np.sum(op(*[Tensor(a) for a in arrs]).data * r))

    inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*inputs)
    loss = ops.sum(ops.mul(out, Tensor(r)))
    analytic = backward(loss, inputs)
    errors = []
    for i in range(len(arrays)):
        num = numeric_grad(scalar, arrays, i, step)
        errors.append(relative_error(analytic[i], num))
    return errors


def _away_from(x: np.ndarray, point: float, margin: float) -> np.ndarray:
    d = x - point
    return point + np.sign(d) * (np.abs(d) + margin)


def _fractional_flow(rng: np.random.Generator, shape) -> np.ndarray:
    # keep sample positions off integer grid lines, where bilinear has kinks
    f = rng.uniform(-2.0, 2.0, size=shape)
    return np.floor(f) + 0.1 + 0.8 * (f - np.floor(f))


def primitive_cases(seed: int, channels: int = 4, size: int = 6) -> dict[str, tuple[Callable[..., Tensor], list[np.ndarray]]]:
    """Random inputs for every primitive, shaped 1 x channels x size x size."""
    rng = np.random.default_rng(seed)
    shape = (1, channels, size, size)

    def x():
        return rng.standard_normal(shape)

    c = channels
    return {
        "conv2d": (lambda a, w, b: ops.conv2d(a, w, b), [x(), rng.standard_normal((c, c, 3, 3)) * 0.3, rng.standard_normal(c)]),
        "conv2d_stride2": (lambda a, w, b: ops.conv2d(a, w, b, stride=2), [x(), rng.standard_normal((c, c, 3, 3)) * 0.3, rng.standard_normal(c)]),
        "conv2d_1x1": (lambda a, w: ops.conv2d(a, w), [x(), rng.standard_normal((c, c, 1, 1))]),
        "add": (ops.add, [x(), x()]),
        "add_broadcast": (ops.add, [x(), rng.standard_normal((1, c, 1, 1))]),
        "sub": (ops.sub, [x(), x()]),
        "mul": (ops.mul, [x(), x()]),
        "mul_broadcast": (ops.mul, [x(), rng.standard_normal((1, c, 1, 1))]),
        "div": (ops.div, [x(), _away_from(x(), 0.0, 0.5)]),
        "concat": (lambda a, b: ops.concat([a, b], axis=1), [x(), x()]),
        "split": (lambda a: ops.concat(ops.split(a, 2, axis=1)[::-1], axis=1) * ops.split(a, 2, axis=1)[0].sum(), [x()]),
        "warp": (ops.grid_sample, [x(), _fractional_flow(rng, (1, 2, size, size))]),
        "local_correlation": (lambda a, b: ops.local_correlation(a, b, 2), [x(), x()]),
        "softmax": (ops.softmax, [x()]),
        "leaky_relu": (ops.leaky_relu, [_away_from(x(), 0.0, 0.05)]),
        "sigmoid": (ops.sigmoid, [x()]),
        "tanh": (ops.tanh, [x()]),
        "softplus": (ops.softplus, [x()]),
        "exp": (ops.exp, [x() * 0.5]),
        "log2": (ops.log2, [np.abs(x()) + 0.5]),
        "normal_cdf": (ops.normal_cdf, [x()]),
        "square": (ops.square, [x()]),
        "lower_bound": (lambda a: ops.lower_bound(a, 0.04), [_away_from(x(), 0.04, 0.05)]),
        "avg_pool": (ops.avg_pool2d, [x()]),
        "upsample_nearest": (ops.upsample_nearest, [x()]),
        "upsample_bilinear": (ops.upsample_bilinear, [x()]),
        "resize_bilinear_down": (lambda a: ops.resize_bilinear(a, (size // 2, size // 2)), [x()]),
        "mean_spatial": (lambda a: ops.mean(a, axis=(2, 3), keepdims=True), [x()]),
        "sum": (lambda a: ops.sum(a), [x()]),
        "reshape": (lambda a: ops.reshape(a, (1, -1)) * ops.reshape(a, (1, -1)), [x()]),
    }
