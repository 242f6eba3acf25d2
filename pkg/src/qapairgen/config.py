"""Experiment configuration: the seven system variants, model dimensions,
optimizer settings, and a canonical INI serialization used for checkpoint
fingerprints."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields
from typing import NamedTuple


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


class Variant(NamedTuple):
    features: bool  # POS/NER/dependency channels enabled
    answer_source: str | None  # None | "ne" | "sequence" | "boundary" | "gold"


VARIANTS: dict[str, Variant] = {
    "QG": Variant(False, None),
    "QG+F": Variant(True, None),
    "QG+F+NE": Variant(True, "ne"),
    "QG+GAE": Variant(False, "gold"),
    "QG+F+AES": Variant(True, "sequence"),
    "QG+F+AEB": Variant(True, "boundary"),
    "QG+F+GAE": Variant(True, "gold"),
}

MODEL_KINDS = ("qg", "ne_selector", "pointer_sequence", "pointer_boundary")

# section -> field names; fixed order keeps the canonical text stable
_SECTIONS: dict[str, tuple[str, ...]] = {
    "experiment": ("model", "variant", "seed"),
    "model": (
        "hidden_size",
        "word_dim",
        "enc_layers",
        "dec_layers",
        "pointer_hidden",
        "ne_hidden",
        "ne_scorer_hidden",
    ),
    "optimizer": (
        "lr",
        "lr_decay",
        "lr_decay_start_epoch",
        "dropout",
        "epochs",
        "batch_size",
        "grad_clip",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "stop_perplexity",
    ),
    "data": (
        "vocab_size",
        "max_src_len",
        "max_q_len",
        "beam",
        "embeddings_path",
    ),
}


@dataclass
class ExperimentConfig:
    """Desk-scale defaults; ``paper()`` mirrors the published setup."""

    model: str = "qg"
    variant: str = "QG+F+GAE"
    seed: int = 13

    hidden_size: int = 64
    word_dim: int = 32
    enc_layers: int = 1
    dec_layers: int = 1
    pointer_hidden: int = 64
    ne_hidden: int = 32
    ne_scorer_hidden: int = 32

    lr: float = 0.002
    lr_decay: float = 0.5
    lr_decay_start_epoch: int = 10
    dropout: float = 0.3
    epochs: int = 30
    batch_size: int = 8
    grad_clip: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_perplexity: float = 0.0  # 0 disables early stopping

    vocab_size: int = 45000
    max_src_len: int = 100
    max_q_len: int = 30
    beam: int = 3
    embeddings_path: str = ""

    @classmethod
    def desk(cls) -> "ExperimentConfig":
        return cls()

    @classmethod
    def paper(cls) -> "ExperimentConfig":
        """Published scale: 600 hidden units, 300-dim embeddings, 3+2 layers,
        Adam at lr 1.0 with 0.5 decay after epoch 10, dropout 0.3, 30 epochs."""
        return cls(
            hidden_size=600,
            word_dim=300,
            enc_layers=3,
            dec_layers=2,
            pointer_hidden=300,
            ne_hidden=300,
            ne_scorer_hidden=300,
            lr=1.0,
            lr_decay=0.5,
            lr_decay_start_epoch=10,
            dropout=0.3,
            epochs=30,
        )

    @property
    def variant_spec(self) -> Variant:
        return VARIANTS[self.variant]

    @property
    def features_enabled(self) -> bool:
        return self.variant_spec.features

    @property
    def answer_source(self) -> str | None:
        return self.variant_spec.answer_source

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model!r}; expected one of {MODEL_KINDS}")
        for name in ("hidden_size", "word_dim", "enc_layers", "dec_layers", "pointer_hidden",
                     "ne_hidden", "ne_scorer_hidden", "epochs", "batch_size", "max_src_len", "max_q_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0 or self.lr_decay <= 0:
            raise ConfigError("lr and lr_decay must be positive")
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must be at least 4, got {self.vocab_size}")
        if self.beam < 1:
            raise ConfigError(f"beam must be at least 1, got {self.beam}")

    def to_ini(self) -> str:
        """Canonical flat key=value text; hashing it gives the fingerprint."""
        out = io.StringIO()
        for section, names in _SECTIONS.items():
            out.write(f"[{section}]\n")
            for name in names:
                out.write(f"{name} = {getattr(self, name)}\n")
            out.write("\n")
        return out.getvalue()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as err:
            raise ConfigError(f"bad config file: {err}") from err
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                kind = types[key]
                try:
                    if kind == "int":
                        values[key] = int(raw)
                    elif kind == "float":
                        values[key] = float(raw)
                    else:
                        values[key] = raw
                except ValueError as err:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from err
        config = cls(**values)
        config.validate()
        return config

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_ini(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
