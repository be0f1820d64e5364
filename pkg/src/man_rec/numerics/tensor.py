"""Dense float64 tensors with define-by-run reverse-mode differentiation."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any, Union

import numpy as np
import numpy.typing as npt

from man_rec.errors import ShapeError

Array = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]
IndexArray = npt.NDArray[np.int64]
BackwardFn = Callable[[Array], Sequence[Union[Array, None]]]
Operand = Union["Tensor", float, int, npt.ArrayLike]


class Tensor:
    """A dense array that remembers which operation produced it.

    Every operation on a tensor records its inputs and a backward function, so the
    graph is rebuilt on each forward pass. Calling :meth:`backward` on a scalar result
    accumulates gradients into all tensors created with ``requires_grad=True``.
    """

    __slots__ = (
        "data",
        "requires_grad",
        "grad",
        "name",
        "op",
        "stop_gradient",
        "_parents",
        "_backward",
    )

    def __init__(
        self,
        data: npt.ArrayLike,
        requires_grad: bool = False,
        *,
        name: str | None = None,
    ) -> None:
        self.data: Array = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name
        self.op = "leaf"
        self.stop_gradient = False
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _from_op(
        cls,
        data: npt.ArrayLike,
        parents: Sequence[Tensor],
        backward: BackwardFn,
        op: str,
    ) -> Tensor:
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        out.name = None
        out.op = op
        out.stop_gradient = False
        out._parents = tuple(parents)
        out._backward = backward if out.requires_grad else None
        return out

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def parents(self) -> tuple[Tensor, ...]:
        return self._parents

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    @property
    def mT(self) -> Tensor:
        """Swap the last two axes."""
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return transpose(self, tuple(axes))

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> Array:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # Arithmetic.
    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return getitem(self, index)

    # Reductions and shape changes.
    def sum(
        self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
    ) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(
        self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
    ) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def relu(self) -> Tensor:
        return relu(self)

    def sigmoid(self) -> Tensor:
        return sigmoid(self)

    def tanh(self) -> Tensor:
        return tanh(self)


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(a % ndim for a in axes))


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._from_op(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._from_op(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._from_op(
        a.data * b.data,
        (a, b),
        lambda g: (
            unbroadcast(g * b.data, a.shape),
            unbroadcast(g * a.data, b.shape),
        ),
        "mul",
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._from_op(
        a.data / b.data,
        (a, b),
        lambda g: (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    return Tensor._from_op(
        a.data**exponent,
        (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1),),
        "pow",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting any leading axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"Cannot multiply matrices of shapes {a.shape} and {b.shape}.")

    def _backward(g: Array) -> tuple[Array, Array]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return Tensor._from_op(a.data @ b.data, (a, b), _backward, "matmul")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so neither branch overflows.
    positive = x >= 0
    z = np.exp(-np.abs(x))
    out = np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z))
    return Tensor._from_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    active = a.data > 0
    return Tensor._from_op(
        np.where(active, a.data, 0.0), (a,), lambda g: (g * active,), "relu"
    )


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    return Tensor._from_op(
        np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clip"
    )


def masked_fill(a: Tensor, keep: npt.ArrayLike, value: float) -> Tensor:
    """Replace the entries where ``keep`` is false by ``value``."""
    keep_mask = np.broadcast_to(np.asarray(keep, dtype=bool), a.shape)
    return Tensor._from_op(
        np.where(keep_mask, a.data, value),
        (a,),
        lambda g: (g * keep_mask,),
        "masked_fill",
    )


def sum_(
    a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)

    def _backward(g: Array) -> tuple[Array]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    out = a.data.sum(axis=axes, keepdims=keepdims)
    return Tensor._from_op(out, (a,), _backward, "sum")


def mean(
    a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return sum_(a, axis=axes, keepdims=keepdims) / float(count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Tensor._from_op(
        a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(a.shape),), "reshape"
    )


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    order = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(order))
    return Tensor._from_op(
        a.data.transpose(order), (a,), lambda g: (g.transpose(inverse),), "transpose"
    )


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Tensor._from_op(
        np.broadcast_to(a.data, tuple(shape)),
        (a,),
        lambda g: (unbroadcast(g, a.shape),),
        "broadcast_to",
    )


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("Cannot concatenate an empty list of tensors.")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"Cannot concatenate shapes {shapes}: {e}") from e
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g: Array) -> list[Array]:
        return list(np.split(g, boundaries, axis=axis))

    return Tensor._from_op(out, tensors, _backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("Cannot stack an empty list of tensors.")
    out = np.stack([t.data for t in tensors], axis=axis)

    def _backward(g: Array) -> list[Array]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return Tensor._from_op(out, tensors, _backward, "stack")


def getitem(a: Tensor, index: Any) -> Tensor:
    def _backward(g: Array) -> tuple[Array]:
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(a.data[index], (a,), _backward, "getitem")


def take_rows(table: Tensor, indices: npt.ArrayLike) -> Tensor:
    """Look up rows of a 2-D table into shape ``indices.shape + (columns,)``."""
    idx = np.asarray(indices, dtype=np.int64)
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise IndexError(
            f"Row index out of range for table with {rows} rows "
            f"(valid indices 0..{rows - 1}, got {int(idx.min())}..{int(idx.max())})."
        )

    def _backward(g: Array) -> tuple[Array]:
        full = np.zeros(table.shape)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._from_op(table.data[idx], (table,), _backward, "take_rows")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``, stabilized by subtracting the slice maximum."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g: Array) -> tuple[Array]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (a,), _backward, "softmax")


def stop_gradient(a: Tensor) -> Tensor:
    """Pass values through unchanged while sending zero gradient back to ``a``."""
    out = Tensor._from_op(a.data, (a,), lambda g: (np.zeros(a.shape),), "stop_gradient")
    out.stop_gradient = True
    return out


def topological_order(root: Tensor) -> list[Tensor]:
    """Return the gradient-carrying part of the graph below ``root``, inputs first."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor.

    Leaf gradients accumulate across calls; intermediate gradients are overwritten.
    Edges created by :func:`stop_gradient` contribute exactly zero.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}.")
    if not loss.requires_grad:
        return
    grads: dict[int, Array] = {id(loss): np.ones(loss.shape)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = np.array(g) if node.grad is None else node.grad + g
            continue
        node.grad = np.array(g)
        if node._backward is None:
            continue
        for parent, parent_grad in zip(node.parents, node._backward(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
