"""Offset-preserving tokenizer matching the tagged-corpus format contract:
lowercase words, punctuation as separate tokens, '|' escaped as <pipe>."""

from __future__ import annotations

import re
from dataclasses import dataclass

PIPE_ESCAPE = "<pipe>"

_TOKEN_RE = re.compile(r"<pipe>|\d+(?:[.,]\d+)*|[^\W\d_]+|'[^\W\d_]+|_+|[^\w\s]")


@dataclass(frozen=True)
class Span:
    text: str  # lowercased surface form
    start: int  # char offsets into the escaped sentence text
    end: int


def escape_pipes(text: str) -> str:
    return text.replace("|", PIPE_ESCAPE)


def token_spans(escaped: str) -> list[Span]:
    """Tokens with char offsets; ``escaped`` must already be pipe-escaped."""
    return [
        Span(text=m.group(0).lower(), start=m.start(), end=m.end())
        for m in _TOKEN_RE.finditer(escaped)
    ]
