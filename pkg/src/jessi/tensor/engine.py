"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` and, when it was produced by a
differentiable operation, remembers its parents and a closure that pushes an
upstream gradient back into them. :func:`backward` walks that graph in reverse
topological order.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "backward",
    "no_grad",
    "grad_enabled",
    "default_precision",
    "get_default_dtype",
    "as_tensor",
    "NonFiniteError",
    "ShapeError",
    "EmptySequenceError",
]


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand extents are incompatible."""


class EmptySequenceError(ValueError):
    """A reduction over time saw no unmasked position."""


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.dtype = np.dtype(np.float32)


_state = _State()


def grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad():
    """Run operations without recording them for differentiation."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def get_default_dtype() -> np.dtype:
    return _state.dtype


@contextlib.contextmanager
def default_precision(dtype):
    """Temporarily switch the dtype used for freshly created tensors."""
    prev = _state.dtype
    _state.dtype = np.dtype(dtype)
    if _state.dtype not in (np.float32, np.float64):
        _state.dtype = prev
        raise ValueError(f"precision must be float32 or float64, got {dtype}")
    try:
        yield
    finally:
        _state.dtype = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    # a finite sum implies finite entries; fall back to the full scan only when it is not
    if data.size and not np.isfinite(data.sum()):
        if not np.isfinite(data).all():
            raise NonFiniteError(f"operation '{op}' produced non-finite values")


class Tensor:
    """Dense real array plus the record needed to differentiate through it."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                dtype = data.dtype
            else:
                dtype = _state.dtype
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward = None

    # construction of op outputs -------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward_fn, op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if _state.grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # convenience --------------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __float__(self) -> float:
        return self.item()

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def backward(self):
        backward(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    # operator sugar; the implementations live in ops.py
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
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.index(self, idx)

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


class Parameter(Tensor):
    """A trainable leaf tensor with its own gradient accumulator.

    ``max_norm`` is an optional bound on the L2 norm of each output unit's
    weights; ``out_axis`` names the axis that indexes output units.
    """

    __slots__ = ("name", "max_norm", "out_axis")

    def __init__(self, data, max_norm=None, out_axis: int = 0, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        if max_norm is not None and max_norm <= 0:
            raise ValueError("max_norm must be positive")
        self.grad = np.zeros_like(self.data)
        self.name = ""
        self.max_norm = max_norm
        self.out_axis = out_axis

    def zero_grad(self):
        self.grad[...] = 0

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into the gradient slot of ``t`` (no-op for constants)."""
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = np.array(g, copy=True) if g.shape == t.data.shape else np.broadcast_to(g, t.data.shape).copy()
    elif isinstance(t, Parameter):
        t.grad += g
    else:
        t.grad = t.grad + g


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf that requires grad.

    Parameters accumulate across calls; intermediate gradients are released
    as soon as they have been propagated.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological(root)
    for node in order:
        if node._backward is not None:
            node.grad = None
    accumulate(root, np.ones_like(root.data))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None
