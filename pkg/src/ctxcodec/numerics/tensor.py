"""Dense tensors with a define-by-run tape for reverse-mode differentiation.

Every differentiable operation produces a new :class:`Tensor` that remembers
its parents and a closure pushing the output gradient back to them.  The tape
is the set of tensors reachable from the loss; :func:`backward` walks it once
in reverse topological order.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_debug = False
_ids = itertools.count()


class NumericsError(RuntimeError):
    """Base class for failures raised by the tensor library."""


class ShapeError(NumericsError, ValueError):
    """Operand shapes are incompatible with an operation."""

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class NonFiniteError(NumericsError, FloatingPointError):
    """A NaN or Inf was produced while debug checks were enabled."""

    def __init__(self, op: str, node_id: int):
        super().__init__(f"non-finite value produced by {op} (node {node_id})")
        self.op = op
        self.node_id = node_id


class BackwardError(NumericsError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference, entropy coding)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def debug_checks(enabled: bool = True):
    """Raise :class:`NonFiniteError` as soon as any op emits NaN/Inf."""
    global _debug
    prev = _debug
    _debug = enabled
    try:
        yield
    finally:
        _debug = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "id", "_parents", "_backward", "_retain")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._retain = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def retain_grad(self) -> "Tensor":
        """Keep ``.grad`` on this non-leaf after :func:`backward`."""
        self._retain = True
        return self

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- arithmetic sugar; implementations live in ops ---------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.power(self, exponent)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
    return Tensor(arr)


def make_node(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    op: str,
) -> Tensor:
    """Wrap an op result, recording it on the tape when any parent needs grad.

    ``backward`` maps the output gradient to one gradient per parent (``None``
    for parents that do not need one).
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.id = next(_ids)
    out._retain = False
    if _debug and not np.all(np.isfinite(data)):
        raise NonFiniteError(op, out.id)
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.id not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray] | None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Each node is visited exactly once.  When ``params`` is given, their
    gradients are returned in the same order, zero-filled for parameters the
    loss does not depend on.
    """
    if not isinstance(loss, Tensor):
        raise BackwardError("loss must be a Tensor")
    if loss.data.size != 1:
        raise BackwardError(f"loss must be scalar, got shape {loss.shape}")
    order = _topological_order(loss) if loss.requires_grad else []
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        if node._retain:
            node.grad = g if node.grad is None else node.grad + g
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if pg.shape != p.data.shape:
                raise ShapeError(node.op, f"gradient shape {pg.shape} != input shape {p.data.shape}")
            prev = grads.get(p.id)
            grads[p.id] = pg if prev is None else prev + pg
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


class Graph:
    """A named-input/named-output function whose last run is kept as a tape.

    ``forward`` binds inputs and evaluates ``fn``; ``backward`` differentiates
    one of the outputs.  Calling ``backward`` before any ``forward`` raises.
    """

    def __init__(self, fn: Callable[..., dict[str, Tensor]], input_names: Sequence[str]):
        self.fn = fn
        self.input_names = tuple(input_names)
        self.outputs: dict[str, Tensor] | None = None

    def forward(self, **inputs) -> dict[str, Tensor]:
        missing = [n for n in self.input_names if n not in inputs]
        if missing:
            raise ShapeError("graph.forward", f"unbound inputs {missing}")
        bound = {k: v if isinstance(v, Tensor) else as_tensor(v) for k, v in inputs.items()}
        self.outputs = self.fn(**bound)
        return self.outputs

    def backward(self, loss_name: str, params: Iterable[Tensor] | None = None):
        if self.outputs is None:
            raise BackwardError("backward called before forward")
        return backward(self.outputs[loss_name], params)
