"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Only what the policy networks need: matmul, broadcast add/mul, ReLU family,
row-wise (masked) softmax and log-softmax, and scalar reduction. Graphs are
recorded only when an operand requires gradients and recording is enabled;
``no_grad`` turns recording off for rollouts and evaluation.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every contributing leaf's ``grad``.

        The root must be scalar. A recorded graph may be traversed once;
        reusing it without a fresh forward pass raises.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
        if self._consumed:
            raise RuntimeError("backward() already called; run a new forward pass first")
        self._consumed = True

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = grad.copy() if t.grad is None else t.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def constant(data) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return _node(a.data.T, (a,), backward)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a 2-D tensor."""

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accumulate(a, full)

    return _node(a.data[start:stop], (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0.0
    scale = np.where(mask, 1.0, slope)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * scale)

    return _node(a.data * scale, (a,), backward)


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * out)

    return _node(out, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, 2.0 * g * a.data)

    return _node(a.data * a.data, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def backward(g: np.ndarray) -> None:
        _accumulate(a, np.broadcast_to(g, a.data.shape))

    return _node(out, (a,), backward)


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, p * (g - (g * p).sum(axis=1, keepdims=True)))

    return _node(p, (a,), backward)


def row_log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    p = np.exp(out)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g - p * g.sum(axis=1, keepdims=True))

    return _node(out, (a,), backward)


def masked_row_softmax(a: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax restricted to ``mask``; fully masked rows yield zero
    rows (isolated nodes aggregate nothing)."""
    mask = mask.astype(bool)
    neg = np.where(mask, a.data, -np.inf)
    row_max = neg.max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.exp(neg - row_max)
    e = np.where(mask, e, 0.0)
    denom = e.sum(axis=1, keepdims=True)
    safe = np.where(denom > 0.0, denom, 1.0)
    p = e / safe

    def backward(g: np.ndarray) -> None:
        _accumulate(a, p * (g - (g * p).sum(axis=1, keepdims=True)))

    return _node(p, (a,), backward)
