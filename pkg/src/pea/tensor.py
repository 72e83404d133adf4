"""Dense tensors with define-by-run reverse-mode differentiation.

A :class:`Tensor` wraps a NumPy array (float32 for training, float64
for gradient-check builds) plus the bookkeeping needed to replay the
recorded computation backwards.  The graph is rebuilt on every forward
pass; calling :meth:`Tensor.backward` on a scalar walks it once in
reverse topological order.

Values are treated as immutable once produced by an op.  Only the
optimizer mutates ``.data``, and only on leaf parameters between steps.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError


def as_farray(data, dtype=None) -> np.ndarray:
    """Coerce to a float32/float64 ndarray (default float32)."""
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(np.float32)


class Tensor:
    """n-dimensional float array, optionally tracked by autograd."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = as_farray(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, piece: np.ndarray) -> None:
        if piece.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {piece.shape} does not match value shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = piece.astype(self.data.dtype, copy=True)
        else:
            self.grad += piece

    def backward(self) -> None:
        """Reverse-mode sweep from this scalar; fills ``.grad`` on the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.data.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for t in order:
            if t._backward_fn is not None and t.grad is not None:
                t._backward_fn(t.grad)


def _toposort(root: Tensor) -> list[Tensor]:
    # iterative DFS; deep residual graphs must not hit the recursion limit
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def make_op(out_data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result; ``backward_fn(g)`` must push into the parents.

    The result requires grad iff any parent does; otherwise the backward
    closure is dropped so inference builds no graph.
    """
    out = Tensor(out_data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def gradients(named_params) -> dict[str, np.ndarray]:
    """Collect .grad per named parameter after a backward pass."""
    out = {}
    for name, p in named_params:
        if p.grad is None:
            raise StateError(f"gradient for {name!r} requested before backward()")
        out[name] = p.grad
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)
