"""Reverse-mode automatic differentiation on NumPy storage.

A Tensor wraps a float32 array (float64 in the gradient-check shadow mode)
plus an optional gradient of the same shape. Operations record their parents
and a backward closure; Tensor.backward() walks the recorded graph in exact
reverse topological order, accumulating into .grad of every tensor that
requires one.

Only the primitives the language-ID architectures need are implemented here;
the neural-network operations built from them (and from the compiled
kernels) live in lidf.tensor_core.functional.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import InvalidArgumentError, InvalidStateError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, optimizer math)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional float array with optional gradient.

    data is always C-contiguous float32 or float64. grad, once populated by
    backward(), has the same shape and dtype as data.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Tuple[Tensor, ...] = ()
        self._backward_fn: Optional[Callable[[np.ndarray], None]] = None
        self.op = ""
        self.name = name

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self.op!r}{tag})"

    # -- graph bookkeeping -------------------------------------------------

    def _record(self, parents: Tuple["Tensor", ...], backward_fn, op: str) -> "Tensor":
        if _grad_enabled and any(p.requires_grad for p in parents):
            self.requires_grad = True
            self._parents = parents
            self._backward_fn = backward_fn
            self.op = op
        return self

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def cast_(self, dtype) -> "Tensor":
        """In-place dtype change; used to move a whole model into float64."""
        self.data = self.data.astype(dtype)
        if self.grad is not None:
            self.grad = self.grad.astype(dtype)
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Backpropagate from a scalar. Populates .grad on every tensor in the
        recorded graph that requires a gradient."""
        if self.data.size != 1:
            raise InvalidArgumentError(f"backward() requires a scalar, got shape {self.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), neg(self))

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis: int, keepdims: bool = False):
        return reduce_max(self, axis, keepdims)

    def narrow(self, axis: int, start: int, length: int):
        return narrow(self, axis, start, length)


def _scalar_error(t: Tensor):
    raise InvalidArgumentError(f"item() requires a single-element tensor, got shape {t.shape}")


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _check_same_dtype(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise InvalidArgumentError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


def _topo_order(root: Tensor) -> list:
    order: list = []
    seen = set()
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing NumPy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitive operations ------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_dtype(a, b, "add")
    out = Tensor(a.data + b.data)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.shape))

    return out._record((a, b), backward, "add")


def mul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_dtype(a, b, "mul")
    out = Tensor(a.data * b.data)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.shape))

    return out._record((a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(-grad)

    return out._record((a,), backward, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "matmul")
    if a.shape[-1] != b.shape[0 if b.ndim == 2 else -2]:
        raise InvalidArgumentError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(grad):
        if a.requires_grad:
            ga = grad @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ grad
            b._accumulate(_unbroadcast(gb, b.shape))

    return out._record((a, b), backward, "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad.reshape(a.shape))

    return out._record((a,), backward, "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad.transpose(inverse))

    return out._record((a,), backward, "transpose")


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims, dtype=a.dtype))

    def backward(grad):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(grad.reshape(()), a.shape).copy())
            return
        g = grad if keepdims else np.expand_dims(grad, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return out._record((a,), backward, "sum")


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    out = Tensor((a.data.sum(axis=axis, keepdims=keepdims, dtype=a.dtype) / a.dtype.type(count)))

    def backward(grad):
        if not a.requires_grad:
            return
        scale = a.dtype.type(1.0 / count)
        if axis is None:
            a._accumulate(np.broadcast_to(grad.reshape(()) * scale, a.shape).copy())
            return
        g = grad if keepdims else np.expand_dims(grad, axis)
        a._accumulate(np.broadcast_to(g * scale, a.shape).copy())

    return out._record((a,), backward, "mean")


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis. Backward routes to the first (lowest-index) argmax."""
    argmax = a.data.argmax(axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(argmax, axis), axis=axis)
    out = Tensor(out_data if keepdims else out_data.squeeze(axis))

    def backward(grad):
        if not a.requires_grad:
            return
        g = grad if keepdims else np.expand_dims(grad, axis)
        dx = np.zeros_like(a.data)
        np.put_along_axis(dx, np.expand_dims(argmax, axis), g, axis=axis)
        a._accumulate(dx)

    return out._record((a,), backward, "max")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along axis."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(np.ascontiguousarray(a.data[index]))

    def backward(grad):
        if a.requires_grad:
            dx = np.zeros_like(a.data)
            dx[index] = grad
            a._accumulate(dx)

    return out._record((a,), backward, "narrow")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t, "concat")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(int(lo), int(hi))
                t._accumulate(np.ascontiguousarray(grad[tuple(index)]))

    return out._record(tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else t.ndim + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis)
