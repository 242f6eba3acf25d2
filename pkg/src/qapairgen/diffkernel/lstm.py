"""LSTM cell and sequence scan helpers."""

from __future__ import annotations

from dataclasses import dataclass

from qapairgen.diffkernel.tensor import (
    Tensor,
    add,
    matmul,
    mul,
    sigmoid,
    slice_axis,
    tanh,
    zeros,
)


@dataclass
class LSTMCell:
    """Parameter bundle for one LSTM cell; gates packed in (i, f, g, o) order."""

    wx: Tensor  # (input_size, 4 * hidden)
    wh: Tensor  # (hidden, 4 * hidden)
    b: Tensor  # (4 * hidden,)

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[0]

    @property
    def input_size(self) -> int:
        return self.wx.shape[0]


def lstm_step(x: Tensor, h: Tensor, c: Tensor, cell: LSTMCell) -> tuple[Tensor, Tensor]:
    """One LSTM step: sigmoid input/forget/output gates, tanh candidate.

    ``x`` is one (1, input_size) row; ``h`` and ``c`` are (1, hidden) rows.
    """
    hidden = cell.hidden_size
    if x.data.ndim != 2 or x.shape[1] != cell.input_size:
        raise ValueError(f"lstm_step: input shape {x.shape} does not match wx {cell.wx.shape}")
    if h.shape != (x.shape[0], hidden):
        raise ValueError(f"lstm_step: state h shape {h.shape} does not match wh {cell.wh.shape}")
    if c.shape != h.shape:
        raise ValueError(f"lstm_step: cell state c shape {c.shape} does not match h {h.shape}")
    if cell.b.shape != (4 * hidden,):
        raise ValueError(f"lstm_step: bias b shape {cell.b.shape}, expected ({4 * hidden},)")

    z = add(add(matmul(x, cell.wx), matmul(h, cell.wh)), cell.b)
    i = sigmoid(slice_axis(z, 1, 0, hidden))
    f = sigmoid(slice_axis(z, 1, hidden, 2 * hidden))
    g = tanh(slice_axis(z, 1, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(z, 1, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def run_lstm(
    inputs: Tensor,
    cell: LSTMCell,
    h0: Tensor | None = None,
    c0: Tensor | None = None,
    reverse: bool = False,
) -> tuple[list[Tensor], Tensor, Tensor]:
    """Scan a (n, input_size) matrix through the cell, one row per step.

    Returns per-position (1, hidden) states aligned with the INPUT order
    (position t of the returned list always corresponds to input row t,
    also when scanning in reverse), plus the final (h, c) of the scan.
    """
    n = inputs.shape[0]
    h = h0 if h0 is not None else zeros((1, cell.hidden_size))
    c = c0 if c0 is not None else zeros((1, cell.hidden_size))
    order = range(n - 1, -1, -1) if reverse else range(n)
    states: list[Tensor | None] = [None] * n
    for t in order:
        x_t = slice_axis(inputs, 0, t, t + 1)
        h, c = lstm_step(x_t, h, c, cell)
        states[t] = h
    return states, h, c  # type: ignore[return-value]
