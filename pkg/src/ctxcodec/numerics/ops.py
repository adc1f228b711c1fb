"""Differentiable primitives on :class:`~ctxcodec.numerics.tensor.Tensor`.

Feature maps use the NCHW layout.  Every kernel uses a fixed reduction order
(plain numpy reductions and a single GEMM per convolution), so forward and
backward are bit-reproducible for a given input on a given machine.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .tensor import ShapeError, Tensor, as_tensor, make_node

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return as_tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    b = _t(b, a)
    _check_broadcast("add", a, b)
    return make_node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast("sub", a, b)
    return make_node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast("mul", a, b)
    return make_node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    e = float(exponent)
    out = a.data ** e
    return make_node(out, (a,), lambda g: (g * e * a.data ** (e - 1.0),), "pow")


def square(a: Tensor) -> Tensor:
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return make_node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def log2(a: Tensor) -> Tensor:
    inv_ln2 = a.dtype.type(1.0 / math.log(2.0))
    return make_node(np.log2(a.data), (a,), lambda g: (g * inv_ln2 / a.data,), "log2")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(a.data)
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(a.data.dtype.type(0.0), a.data)
    return make_node(out, (a,), lambda g: (g * special.expit(a.data),), "softplus")


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    pos = a.data > 0
    s = a.dtype.type(slope)
    out = np.where(pos, a.data, a.data * s)
    return make_node(out, (a,), lambda g: (np.where(pos, g, g * s),), "leaky_relu")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return make_node(np.where(pos, a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,), "relu")


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(a.data)
    return make_node(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def lower_bound(a: Tensor, bound: float) -> Tensor:
    """``max(a, bound)``; zero gradient where the bound is active."""
    b = a.dtype.type(bound)
    above = a.data > b
    return make_node(np.maximum(a.data, b), (a,), lambda g: (g * above,), "lower_bound")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    out = np.clip(a.data, a.dtype.type(lo), a.dtype.type(hi))
    return make_node(out, (a,), lambda g: (g * inside,), "clamp")


def normal_cdf(a: Tensor) -> Tensor:
    """Standard normal CDF, elementwise."""
    out = special.ndtr(a.data).astype(a.dtype, copy=False)

    def bw(g):
        pdf = np.exp(-0.5 * a.data * a.data) * a.dtype.type(_INV_SQRT_2PI)
        return (g * pdf,)

    return make_node(out, (a,), bw, "normal_cdf")


def round_ste(a: Tensor) -> Tensor:
    """Round half away from zero; identity gradient (straight-through)."""
    out = np.sign(a.data) * np.floor(np.abs(a.data) + 0.5)
    return make_node(out.astype(a.dtype), (a,), lambda g: (g,), "round_ste")


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(a.dtype, copy=True),)

    return make_node(np.asarray(out, dtype=a.dtype), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    shape = a.shape
    scale = a.dtype.type(1.0 / count)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * scale, shape).astype(a.dtype, copy=True),)

    return make_node(np.asarray(out, dtype=a.dtype), (a,), bw, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", str(exc)) from None
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return make_node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g) if _has_advanced(index) else full.__setitem__(index, g)
        return (full,)

    return make_node(np.array(out, copy=True), (a,), bw, "getitem")


def _has_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_t(x) for x in tensors]
    ref = tensors[0].shape
    for x in tensors[1:]:
        if x.ndim != len(ref) or any(
            i != axis % len(ref) and x.shape[i] != ref[i] for i in range(len(ref))
        ):
            raise ShapeError("concat", f"shapes {[t.shape for t in tensors]} differ off axis {axis}")
    sizes = [x.shape[axis] for x in tensors]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in tensors], axis=axis)

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis))

    return make_node(out, tensors, bw, "concat")


def split(a: Tensor, sections, axis: int = 1) -> list[Tensor]:
    """Split along ``axis`` into equal parts (int) or parts of given sizes."""
    n = a.shape[axis]
    if isinstance(sections, int):
        if n % sections:
            raise ShapeError("split", f"axis size {n} not divisible by {sections}")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if np.sum(sizes) != n:
            raise ShapeError("split", f"sizes {sizes} do not sum to {n}")
    outs = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(start, start + size)
        sl = tuple(sl)

        def bw(g, sl=sl):
            full = np.zeros_like(a.data)
            full[sl] = g
            return (full,)

        outs.append(make_node(np.ascontiguousarray(a.data[sl]), (a,), bw, "split"))
        start += size
    return outs


# ---------------------------------------------------------------------------
# spatial kernels


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation with zero padding (default: 'same' for odd k)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d", f"expected NCHW input and OCkk weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeError("conv2d", f"input has {c} channels, weight expects {ci} (kernel {k}x{k2})")
    p = (k - 1) // 2 if padding is None else padding
    ho = (h + 2 * p - k) // stride + 1
    wo = (w + 2 * p - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d", f"input {h}x{w} too small for kernel {k}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    if k == 1 and stride == 1:
        cols = xp.transpose(1, 0, 2, 3).reshape(c, n * ho * wo)
    else:
        cols = _im2col(xp, k, stride, ho, wo)
    wmat = weight.data.reshape(o, -1)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gm = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (gm @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = gm.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = wmat.T @ gm
            if k == 1 and stride == 1:
                gx = np.ascontiguousarray(gcols.reshape(c, n, ho, wo).transpose(1, 0, 2, 3))
                if p:
                    gx = gx[:, :, p:-p, p:-p]
            else:
                gcols = gcols.reshape(c, k, k, n, ho, wo)
                gxp = np.zeros((c, n) + xp.shape[2:], dtype=x.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j]
                gxp = gxp.transpose(1, 0, 2, 3)
                gx = np.ascontiguousarray(gxp[:, :, p : p + h, p : p + w])
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_node(out, parents, bw, "conv2d")


def avg_pool2d(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError("avg_pool2d", f"{h}x{w} not divisible by {factor}")
    out = x.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))
    scale = x.dtype.type(1.0 / (factor * factor))

    def bw(g):
        gx = np.repeat(np.repeat(g * scale, factor, axis=2), factor, axis=3)
        return (gx,)

    return make_node(out.astype(x.dtype, copy=False), (x,), bw, "avg_pool2d")


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def bw(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return make_node(out, (x,), bw, "upsample_nearest")


_interp_cache: dict[tuple[int, int, str], np.ndarray] = {}


def _interp_matrix(src: int, dst: int, dtype) -> np.ndarray:
    """Half-pixel-aligned linear interpolation matrix (dst x src), edge clamped."""
    key = (src, dst, np.dtype(dtype).str)
    m = _interp_cache.get(key)
    if m is None:
        m = np.zeros((dst, src), dtype=np.float64)
        scale = src / dst
        for o in range(dst):
            s = min(max((o + 0.5) * scale - 0.5, 0.0), src - 1.0)
            i0 = int(math.floor(s))
            i1 = min(i0 + 1, src - 1)
            f = s - i0
            m[o, i0] += 1.0 - f
            m[o, i1] += f
        m = m.astype(dtype)
        _interp_cache[key] = m
    return m


def resize_bilinear(x: Tensor, size: tuple[int, int]) -> Tensor:
    """Bilinear resize (half-pixel centres, clamp at the border).

    Downscaling by exactly 2 reduces to 2x2 averaging.
    """
    n, c, h, w = x.shape
    oh, ow = size
    mh = _interp_matrix(h, oh, x.dtype)
    mw = _interp_matrix(w, ow, x.dtype)
    # (oh,h) @ (n,c,h,w) @ (w,ow)
    out = np.matmul(np.matmul(mh, x.data), mw.T)

    def bw(g):
        return (np.matmul(np.matmul(mh.T, g), mw),)

    return make_node(out, (x,), bw, "resize_bilinear")


def upsample_bilinear(x: Tensor, factor: int = 2) -> Tensor:
    return resize_bilinear(x, (x.shape[2] * factor, x.shape[3] * factor))


def grid_sample(source: Tensor, flow: Tensor) -> Tensor:
    """Backward warp: ``out[p] = bilinear(source, p + flow[p])``.

    Sample coordinates are clamped to the image border.  ``flow`` channel 0 is
    the horizontal displacement, channel 1 the vertical one, in pixels.
    """
    if source.ndim != 4 or flow.ndim != 4 or flow.shape[1] != 2:
        raise ShapeError("warp", f"expected NCHW source and Nx2xHxW flow, got {source.shape}, {flow.shape}")
    n, c, h, w = source.shape
    if flow.shape[0] != n or flow.shape[2:] != (h, w):
        raise ShapeError("warp", f"flow extents {flow.shape[2:]} do not match source {(h, w)}")
    dt = source.dtype
    ys = np.arange(h, dtype=dt)[:, None]
    xs = np.arange(w, dtype=dt)[None, :]
    sx_raw = xs + flow.data[:, 0]
    sy_raw = ys + flow.data[:, 1]
    sx = np.clip(sx_raw, 0, w - 1)
    sy = np.clip(sy_raw, 0, h - 1)
    x0f = np.floor(sx)
    y0f = np.floor(sy)
    fx = (sx - x0f).astype(dt, copy=False)
    fy = (sy - y0f).astype(dt, copy=False)
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    flat = source.data.reshape(n, c, h * w)
    idx = [(y0 * w + x0), (y0 * w + x1), (y1 * w + x0), (y1 * w + x1)]
    idx = [i.reshape(n, 1, h * w) for i in idx]
    v00, v01, v10, v11 = (np.take_along_axis(flat, i, axis=2).reshape(n, c, h, w) for i in idx)
    one = dt.type(1.0)
    w00 = ((one - fx) * (one - fy))[:, None]
    w01 = (fx * (one - fy))[:, None]
    w10 = ((one - fx) * fy)[:, None]
    w11 = (fx * fy)[:, None]
    out = v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11
    in_x = ((sx_raw >= 0) & (sx_raw <= w - 1))[:, None]
    in_y = ((sy_raw >= 0) & (sy_raw <= h - 1))[:, None]

    def bw(g):
        gsrc = None
        if source.requires_grad:
            base = (np.arange(n * c, dtype=np.int64) * (h * w)).reshape(n, c, 1)
            acc = np.zeros(n * c * h * w, dtype=np.float64)
            for i, wt in zip(idx, (w00, w01, w10, w11)):
                pos = (i + base).reshape(-1)
                acc += np.bincount(pos, weights=(g * wt).reshape(-1), minlength=acc.size)
            gsrc = acc.astype(dt).reshape(n, c, h, w)
        gflow = None
        if flow.requires_grad:
            dx = ((v01 - v00) * (one - fy)[:, None] + (v11 - v10) * fy[:, None]) * g
            dy = ((v10 - v00) * (one - fx)[:, None] + (v11 - v01) * fx[:, None]) * g
            gx = dx.sum(axis=1) * in_x[:, 0]
            gy = dy.sum(axis=1) * in_y[:, 0]
            gflow = np.stack([gx, gy], axis=1).astype(dt, copy=False)
        return gsrc, gflow

    return make_node(out, (source, flow), bw, "warp")


def _fold_edge_pad(gp: np.ndarray, r: int, h: int, w: int) -> np.ndarray:
    """Adjoint of ``np.pad(x, r, mode="edge")`` over the last two axes."""
    g = gp[..., r : r + h, :].copy()
    g[..., 0, :] += gp[..., :r, :].sum(axis=-2)
    g[..., h - 1, :] += gp[..., r + h :, :].sum(axis=-2)
    out = g[..., r : r + w].copy()
    out[..., 0] += g[..., :r].sum(axis=-1)
    out[..., w - 1] += g[..., r + w :].sum(axis=-1)
    return out


def displacements(radius: int) -> list[tuple[int, int]]:
    """(dy, dx) offsets in the channel order used by :func:`local_correlation`."""
    return [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]


def local_correlation(a: Tensor, b: Tensor, radius: int) -> Tensor:
    """``out[:, k, p] = mean_c a[:, c, p] * b[:, c, p + d_k]`` over a square window.

    ``b`` is edge-clamped outside the image.  Output has ``(2r+1)^2`` channels
    ordered as :func:`displacements`.
    """
    if a.shape != b.shape or a.ndim != 4:
        raise ShapeError("local_correlation", f"{a.shape} vs {b.shape}")
    n, c, h, w = a.shape
    r = int(radius)
    bp = np.pad(b.data, ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    offsets = displacements(r)
    inv_c = a.dtype.type(1.0 / c)
    out = np.empty((n, len(offsets), h, w), dtype=a.dtype)
    for k, (dy, dx) in enumerate(offsets):
        out[:, k] = (a.data * bp[:, :, r + dy : r + dy + h, r + dx : r + dx + w]).sum(axis=1) * inv_c

    def bw(g):
        g = g * inv_c
        ga = np.zeros_like(a.data) if a.requires_grad else None
        gbp = np.zeros_like(bp) if b.requires_grad else None
        for k, (dy, dx) in enumerate(offsets):
            gk = g[:, k : k + 1]
            win = (slice(None), slice(None), slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
            if ga is not None:
                ga += gk * bp[win]
            if gbp is not None:
                gbp[win] += gk * a.data
        gb = _fold_edge_pad(gbp, r, h, w) if gbp is not None else None
        return ga, gb

    return make_node(out, (a, b), bw, "local_correlation")


def softmax(a: Tensor, axis: int = 1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (a,), bw, "softmax")
