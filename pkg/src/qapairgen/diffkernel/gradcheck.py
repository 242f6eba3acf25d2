"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from qapairgen.diffkernel import tensor as T
from qapairgen.diffkernel.lstm import LSTMCell, lstm_step
from qapairgen.diffkernel.tensor import Tensor, precision

# Floor keeps near-zero gradients from inflating the ratio; central differences
# in float64 are accurate to ~1e-10, so genuine defects still stand out.
_ERROR_FLOOR = 1e-3


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), _ERROR_FLOOR)


def grad_check(
    fn: Callable[..., Tensor],
    shapes: Sequence[tuple[int, ...]] | None = None,
    seed: int = 0,
    step: float = 1e-5,
    inputs: Sequence[np.ndarray] | None = None,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` maps the given Tensors to a scalar loss and must be deterministic
    across calls. Runs in float64; inputs default to seeded uniform(-0.8, 0.8)
    arrays of the given shapes.
    """
    with precision("float64"):
        rng = np.random.default_rng(seed)
        if inputs is None:
            if shapes is None:
                raise ValueError("grad_check needs shapes or explicit inputs")
            arrays = [rng.uniform(-0.8, 0.8, size=s) for s in shapes]
        else:
            arrays = [np.asarray(a, dtype=np.float64).copy() for a in inputs]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]

        loss = fn(*tensors)
        loss.backward()
        analytic = [
            t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors
        ]

        worst = 0.0
        for t, a_grad in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + step
                up = float(fn(*tensors).data)
                flat[j] = original - step
                down = float(fn(*tensors).data)
                flat[j] = original
                numeric = (up - down) / (2.0 * step)
                worst = max(worst, relative_error(float(a_grad.reshape(-1)[j]), numeric))
        return worst


def _check_tanh():
    return lambda x: T.reduce_sum(T.tanh(x)), [(3, 4)]


def _check_sigmoid():
    return lambda x: T.reduce_sum(T.mul(T.sigmoid(x), T.sigmoid(x))), [(3, 4)]


def _check_add():
    return lambda a, b: T.reduce_sum(T.tanh(T.add(a, b))), [(3, 4), (4,)]


def _check_mul():
    return lambda a, b: T.reduce_sum(T.tanh(T.mul(a, b))), [(3, 4), (3, 4)]


def _check_matmul():
    return lambda a, b: T.reduce_sum(T.tanh(T.matmul(a, b))), [(3, 4), (4, 2)]


def _check_transpose():
    return lambda a, b: T.reduce_sum(T.tanh(T.matmul(T.transpose(a), b))), [(4, 3), (4, 2)]


def _check_reshape():
    return lambda x: T.reduce_sum(T.tanh(T.reshape(x, (2, 6)))), [(3, 4)]


def _check_concat():
    return lambda a, b: T.reduce_sum(T.tanh(T.concat([a, b], axis=1))), [(3, 2), (3, 4)]


def _check_slice():
    return lambda x: T.reduce_sum(T.tanh(T.slice_axis(x, 1, 1, 3))), [(3, 5)]


def _check_mean_rows():
    return lambda x: T.reduce_sum(T.tanh(T.mean_rows(x))), [(5, 3)]


def _check_softmax():
    w = T.constant(np.linspace(-1.0, 1.0, 12).reshape(3, 4))
    return lambda x: T.reduce_sum(T.mul(T.softmax(x, axis=1), w)), [(3, 4)]


def _check_embedding_rows():
    idx = [0, 2, 2, 5]  # duplicate index exercises sparse accumulation
    return lambda e: T.reduce_sum(T.tanh(T.rows(e, idx))), [(6, 4)]


def _check_dropout():
    def fn(x):
        rng = np.random.default_rng(1234)  # fixed mask keeps fn deterministic
        return T.reduce_sum(T.tanh(T.dropout(x, 0.4, rng, train=True)))

    return fn, [(4, 5)]


def _check_nll_pad_mask():
    targets = [1, 3, 0, 2, 0]  # pad id 0 rows must contribute nothing
    return lambda logits: T.nll_loss(logits, targets, pad_id=0), [(5, 4)]


def _check_softmax_nll():
    targets = [2, 0, 1]
    return lambda logits: T.nll_loss(logits, targets), [(3, 4)]


def _check_lstm_step():
    def fn(x, h, c, wx, wh, b):
        h2, c2 = lstm_step(x, h, c, LSTMCell(wx, wh, b))
        return T.reduce_sum(T.tanh(T.concat([h2, c2], axis=1)))

    return fn, [(1, 3), (1, 4), (1, 4), (3, 16), (4, 16), (16,)]


def standard_checks() -> list[tuple[str, Callable[..., Tensor], list[tuple[int, ...]]]]:
    """(name, scalar-valued fn, input shapes) for every differentiable kernel op."""
    table = []
    for name, builder in [
        ("tanh", _check_tanh),
        ("sigmoid", _check_sigmoid),
        ("add", _check_add),
        ("mul", _check_mul),
        ("matmul", _check_matmul),
        ("transpose", _check_transpose),
        ("reshape", _check_reshape),
        ("concat", _check_concat),
        ("slice_axis", _check_slice),
        ("mean_rows", _check_mean_rows),
        ("softmax", _check_softmax),
        ("embedding_rows", _check_embedding_rows),
        ("dropout", _check_dropout),
        ("nll_pad_mask", _check_nll_pad_mask),
        ("softmax_nll", _check_softmax_nll),
        ("lstm_step", _check_lstm_step),
    ]:
        fn, shapes = builder()
        table.append((name, fn, shapes))
    return table
