"""Versioned binary checkpoints: config fingerprint, vocabularies, and named
parameter tensors as row-major 32-bit little-endian values."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from qapairgen.corpus import Vocabulary
from qapairgen.diffkernel import ParamSet

MAGIC = b"QAPG"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, corrupt, or version-incompatible checkpoint file."""


@dataclass
class Checkpoint:
    config_text: str
    fingerprint: str
    vocabs: dict[str, Vocabulary] = field(default_factory=dict)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def create(cls, config, vocabs: dict[str, Vocabulary], params: ParamSet) -> "Checkpoint":
        text = config.to_ini()
        return cls(
            config_text=text,
            fingerprint=hashlib.sha256(text.encode("utf-8")).hexdigest(),
            vocabs=dict(vocabs),
            tensors={name: t.data.astype("<f4").copy() for name, t in params.items()},
        )

    def load_into(self, params: ParamSet) -> None:
        params.load_values(self.tensors)

    # -- binary io ----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", self.version))
            _write_bytes(fh, self.fingerprint.encode("ascii"))
            _write_bytes(fh, self.config_text.encode("utf-8"))
            fh.write(struct.pack("<I", len(self.vocabs)))
            for name, vocab in self.vocabs.items():
                _write_bytes(fh, name.encode("utf-8"))
                _write_bytes(fh, "\n".join(vocab.token_of).encode("utf-8"))
            fh.write(struct.pack("<I", len(self.tensors)))
            for name, values in self.tensors.items():
                _write_bytes(fh, name.encode("utf-8"))
                arr = np.ascontiguousarray(values, dtype="<f4")
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as err:
            raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
        view = _Reader(data, path)
        if view.take(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version = view.u32()
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
            )
        fingerprint = view.blob().decode("ascii")
        config_text = view.blob().decode("utf-8")
        actual = hashlib.sha256(config_text.encode("utf-8")).hexdigest()
        if actual != fingerprint:
            raise CheckpointError(f"{path}: config fingerprint mismatch")
        vocabs = {}
        for _ in range(view.u32()):
            name = view.blob().decode("utf-8")
            tokens = view.blob().decode("utf-8").split("\n")
            vocabs[name] = Vocabulary.from_tokens(tokens)
        tensors = {}
        for _ in range(view.u32()):
            name = view.blob().decode("utf-8")
            ndim = view.u8()
            shape = tuple(view.u32() for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = view.take(4 * count)
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if view.remaining():
            raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
        return cls(config_text=config_text, fingerprint=fingerprint, vocabs=vocabs,
                   tensors=tensors, version=version)


def _write_bytes(fh, payload: bytes) -> None:
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)


class _Reader:
    def __init__(self, data: bytes, path) -> None:
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def remaining(self) -> int:
        return len(self.data) - self.pos
