"""Minimal differentiable numeric kernel: dense tensors, reverse-mode gradients,
an LSTM cell, the Adam optimizer, and a finite-difference verification harness."""

from qapairgen.diffkernel.tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    constant,
    default_dtype,
    dropout,
    matmul,
    mean_rows,
    mul,
    nll_loss,
    precision,
    reduce_sum,
    reshape,
    rows,
    set_default_dtype,
    sigmoid,
    slice_axis,
    softmax,
    tanh,
    transpose,
    zeros,
)
from qapairgen.diffkernel.lstm import LSTMCell, lstm_step, run_lstm
from qapairgen.diffkernel.params import ParamSet, load_pretrained_embeddings
from qapairgen.diffkernel.optim import Adam, adam_step, clip_global_norm
from qapairgen.diffkernel.gradcheck import grad_check, relative_error, standard_checks

__all__ = [
    "Adam",
    "LSTMCell",
    "ParamSet",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "clip_global_norm",
    "concat",
    "constant",
    "default_dtype",
    "dropout",
    "grad_check",
    "load_pretrained_embeddings",
    "lstm_step",
    "matmul",
    "mean_rows",
    "mul",
    "nll_loss",
    "precision",
    "reduce_sum",
    "relative_error",
    "reshape",
    "rows",
    "run_lstm",
    "set_default_dtype",
    "sigmoid",
    "slice_axis",
    "softmax",
    "standard_checks",
    "tanh",
    "transpose",
    "zeros",
]
