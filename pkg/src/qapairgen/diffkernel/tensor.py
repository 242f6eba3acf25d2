"""Dense tensors with reverse-mode automatic differentiation.

Forward ops record a graph of Tensor nodes; ``backward()`` on a scalar loss
walks the graph in reverse topological order and accumulates gradients.
float32 is the training default; gradient checks run in float64 (see
``set_default_dtype`` / ``precision``).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.dtype(np.float32)
_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise ValueError(f"supported dtypes are float32 and float64, got {dt}")
    _DEFAULT_DTYPE = dt


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype, e.g. ``with precision('float64'):``."""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


class Tensor:
    """Dense row-major array with an optional same-shape gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        arr = data if isinstance(data, np.ndarray) else np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable parameter."""
        if self.data.size != 1:
            raise ValueError(f"backward() expects a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited = {id(self)}
        stack: list[tuple[Tensor, object]] = [(self, iter(self._parents))]
        while stack:
            node, parent_iter = stack[-1]
            advanced = False
            for parent in parent_iter:
                if id(parent) not in visited and parent.requires_grad:
                    visited.add(id(parent))
                    stack.append((parent, iter(parent._parents)))
                    advanced = True
                    break
            if not advanced:
                topo.append(node)
                stack.pop()
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # arithmetic sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other, like=self), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other, like=self), mul(self, -1.0))

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.asarray(value, dtype=dtype))


def constant(value) -> Tensor:
    """Wrap an array as a non-trainable graph leaf in the default dtype."""
    return Tensor(np.asarray(value, dtype=_DEFAULT_DTYPE))


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents, backward_fn=backward_fn if req else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul expects (n,m) x (m,k) operands, got {a.data.shape} x {b.data.shape}"
        )

    def backward_fn(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward_fn)


def transpose(x: Tensor) -> Tensor:
    def backward_fn(g):
        _accum(x, g.T)

    return _node(x.data.T, (x,), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward_fn(g):
        _accum(x, g.reshape(x.data.shape))

    return _node(x.data.reshape(shape), (x,), backward_fn)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat of an empty list")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accum(part, g[tuple(index)])

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward_fn)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward_fn(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[index] = g
            _accum(x, gx)

    return _node(x.data[index], (x,), backward_fn)


def rows(x: Tensor, indices) -> Tensor:
    """Gather rows by integer index; backward scatters (duplicate ids accumulate)."""
    idx = np.asarray(indices, dtype=np.intp)

    def backward_fn(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            _accum(x, gx)

    return _node(x.data[idx], (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward_fn(g):
        _accum(x, g * (1.0 - out * out))

    return _node(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])  # split form never exponentiates a positive argument
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        _accum(x, g * out * (1.0 - out))

    return _node(out, (x,), backward_fn)


def softmax(x: Tensor, axis: int) -> Tensor:
    if x.data.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(x, (g - inner) * out)

    return _node(out, (x,), backward_fn)


def reduce_sum(x: Tensor) -> Tensor:
    def backward_fn(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _node(np.asarray(x.data.sum()), (x,), backward_fn)


def mean_rows(x: Tensor) -> Tensor:
    """Mean over axis 0 with keepdims, (n, d) -> (1, d)."""
    n = x.data.shape[0]
    if n == 0:
        raise ValueError("mean_rows of an empty matrix")

    def backward_fn(g):
        _accum(x, np.broadcast_to(g / n, x.data.shape))

    return _node(x.data.mean(axis=0, keepdims=True), (x,), backward_fn)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None, train: bool = False) -> Tensor:
    """Inverted-scaling dropout; identity in eval mode or at p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)

    def backward_fn(g):
        _accum(x, g * keep)

    return _node(x.data * keep, (x,), backward_fn)


def nll_loss(logits: Tensor, targets, pad_id: int | None = None, average: bool = True) -> Tensor:
    """Negative log likelihood of integer targets under row-wise softmax(logits).

    Rows whose target equals ``pad_id`` contribute exactly zero to both the
    loss and the gradient. ``average=True`` divides by the non-pad row count.
    """
    t = np.asarray(targets, dtype=np.intp)
    if logits.data.ndim != 2 or t.ndim != 1 or t.shape[0] != logits.data.shape[0]:
        raise ValueError(
            f"nll_loss expects (n,V) logits and n targets, got {logits.data.shape} and {t.shape}"
        )
    d = logits.data
    shifted = d - d.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_row = lse - shifted[np.arange(t.shape[0]), t]
    mask = np.ones_like(per_row) if pad_id is None else (t != pad_id).astype(d.dtype)
    denom = float(mask.sum()) if average else 1.0
    denom = max(denom, 1.0)
    value = np.asarray((per_row * mask).sum() / denom)

    def backward_fn(g):
        if logits.requires_grad:
            probs = np.exp(shifted - lse[:, None])
            probs[np.arange(t.shape[0]), t] -= 1.0
            _accum(logits, probs * (mask * (float(g) / denom))[:, None])

    return _node(value, (logits,), backward_fn)
