"""Named parameter collections and pretrained embedding loading."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from qapairgen.diffkernel.tensor import Tensor, default_dtype

INIT_SCALE = 0.1  # parameters start at uniform(-0.1, 0.1)


class ParamSet:
    """Ordered map from parameter path (e.g. ``encoder.fwd.wx``) to Tensor.

    Names are unique; insertion order is the persistence order.
    """

    def __init__(self) -> None:
        self._tensors: dict[str, Tensor] = {}

    def create(self, name: str, shape, rng: np.random.Generator, scale: float = INIT_SCALE) -> Tensor:
        values = rng.uniform(-scale, scale, size=shape).astype(default_dtype())
        return self.add(name, Tensor(values, requires_grad=True))

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"parameter {name!r} registered twice")
        tensor.requires_grad = True
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return self._tensors.values()

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(values)
        extra = set(values) - set(self._tensors)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, t in self._tensors.items():
            arr = np.asarray(values[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"parameter {name!r}: shape {arr.shape} != expected {t.data.shape}")
            t.data = arr.copy()
            t.grad = None


def load_pretrained_embeddings(
    path,
    vocab,
    dim: int,
    rng: np.random.Generator,
    scale: float = INIT_SCALE,
) -> np.ndarray:
    """Build a (len(vocab), dim) matrix from a word-vector text file.

    Each line is a token followed by ``dim`` space-separated decimals.
    Tokens absent from the file stay at their random initialization.
    """
    matrix = rng.uniform(-scale, scale, size=(len(vocab), dim)).astype(default_dtype())
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected a token plus {dim} values, got {len(parts)} fields"
                )
            token = parts[0]
            if token in vocab:
                matrix[vocab.id(token)] = np.asarray([float(v) for v in parts[1:]], dtype=matrix.dtype)
    return matrix
