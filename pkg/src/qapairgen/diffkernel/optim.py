"""Adam optimizer and global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from qapairgen.diffkernel.params import ParamSet


def adam_step(
    value: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place on value/m/v; t counts from 1."""
    if t < 1:
        raise ValueError(f"adam_step needs t >= 1, got {t}")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a ParamSet; each parameter gets exactly one moment pair."""

    def __init__(
        self,
        params: ParamSet,
        lr: float = 0.002,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, self._m[name], self._v[name], self.t, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grads(self) -> None:
        self.params.zero_grads()


def clip_global_norm(params: ParamSet, max_norm: float = 5.0) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params.tensors():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params.tensors():
            if p.grad is not None:
                p.grad *= factor
    return norm
