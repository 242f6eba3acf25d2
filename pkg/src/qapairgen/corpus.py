"""SQuAD-style ingestion, tokenization, BIO answer encoding, the tagged-corpus
file format, and vocabulary construction."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

PIPE_ESCAPE = "<pipe>"
BIO_TAGS = ("B", "I", "O")


class DataError(Exception):
    """Malformed input data (bad JSON, bad tagged line, bad table)."""


class TaggedFormatError(DataError):
    """Tagged-corpus line violates the word|POS|NER|DEP|BIO format."""


@dataclass(frozen=True)
class TaggedToken:
    """One sentence token: lowercased word plus POS/NER/dependency/BIO tags."""

    word: str
    pos: str
    ner: str = "O"
    dep: str = "ROOT"
    bio: str = "O"


@dataclass(frozen=True)
class AnswerSpan:
    """1-based inclusive (start, end) token indices within a sentence."""

    start: int
    end: int

    def validate(self, length: int) -> None:
        if not (1 <= self.start <= self.end <= length):
            raise ValueError(f"span ({self.start}, {self.end}) invalid for sentence length {length}")

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass
class Example:
    """Aligned (tagged sentence, question tokens, answer span) instance."""

    sentence: list[TaggedToken]
    question: list[str]
    answer: AnswerSpan | None = None
    source_id: str = ""

    @property
    def words(self) -> list[str]:
        return [t.word for t in self.sentence]


# ---------------------------------------------------------------------------
# tokenization

# Alternation order matters: the pipe escape, then numbers (internal , and .
# kept), then letter runs, then clitics like 's, then single punctuation marks.
_TOKEN_RE = re.compile(r"<pipe>|\d+(?:[.,]\d+)*|[^\W\d_]+|'[^\W\d_]+|_+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation into separate tokens, escape '|' as <pipe>."""
    return _TOKEN_RE.findall(text.replace("|", PIPE_ESCAPE).lower())


# ---------------------------------------------------------------------------
# SQuAD ingestion


@dataclass
class SquadRecord:
    sentence: str
    question: str
    answer_text: str
    answer_offset: int  # char offset of the answer within `sentence`


@dataclass
class SquadParse:
    records: list[SquadRecord]
    skipped: Counter = field(default_factory=Counter)

    @property
    def skip_count(self) -> int:
        return sum(self.skipped.values())


_SENTENCE_BREAK = re.compile(r"[.?!]+(?=\s)")


def split_sentences(context: str) -> list[tuple[int, str]]:
    """(char offset, sentence text) segments, split after [.?!] + whitespace."""
    segments = []
    start = 0
    for m in _SENTENCE_BREAK.finditer(context):
        segments.append((start, context[start : m.end()]))
        start = m.end()
    if start < len(context):
        segments.append((start, context[start:]))
    # trim leading whitespace but keep offsets honest
    out = []
    for offset, text in segments:
        stripped = text.lstrip()
        out.append((offset + len(text) - len(stripped), stripped))
    return [(o, s) for o, s in out if s]


def parse_squad(document: str) -> SquadParse:
    """Flatten a SQuAD v1.1 JSON document into per-question sentence records.

    Each question contributes one record built from its first answer; the
    sentence is the single context sentence containing the answer offset.
    Records whose answer offset falls outside the context, or whose answer
    crosses a sentence boundary, are skipped and counted.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as err:
        raise DataError(f"malformed SQuAD JSON: {err}") from err

    parse = SquadParse(records=[])
    try:
        articles = doc["data"]
    except (TypeError, KeyError) as err:
        raise DataError("SQuAD document lacks the top-level 'data' list") from err

    for article in articles:
        for para in article.get("paragraphs", []):
            try:
                context = para["context"]
                qas = para["qas"]
            except (TypeError, KeyError) as err:
                raise DataError("paragraph lacks 'context' or 'qas'") from err
            sentences = split_sentences(context)
            for qa in qas:
                try:
                    question = qa["question"]
                    answer = qa["answers"][0]
                    text = answer["text"]
                    start = int(answer["answer_start"])
                except (TypeError, KeyError, IndexError, ValueError) as err:
                    raise DataError(f"malformed qa entry: {err}") from err
                if not (0 <= start < len(context)):
                    parse.skipped["answer_offset_out_of_range"] += 1
                    continue
                home = None
                for offset, sent in sentences:
                    if offset <= start < offset + len(sent):
                        home = (offset, sent)
                        break
                if home is None:
                    parse.skipped["answer_offset_out_of_range"] += 1
                    continue
                offset, sent = home
                if start + len(text) > offset + len(sent):
                    parse.skipped["answer_crosses_sentence"] += 1
                    continue
                parse.records.append(
                    SquadRecord(
                        sentence=sent,
                        question=question,
                        answer_text=text,
                        answer_offset=start - offset,
                    )
                )
    return parse


# ---------------------------------------------------------------------------
# answer location and BIO encoding


def locate_answer(sentence: Sequence[str], answer: Sequence[str]) -> AnswerSpan | None:
    """1-based inclusive span of the first exact contiguous match, else None."""
    n, m = len(sentence), len(answer)
    if m == 0 or m > n:
        return None
    answer = list(answer)
    for i in range(n - m + 1):
        if list(sentence[i : i + m]) == answer:
            return AnswerSpan(i + 1, i + m)
    return None


def encode_bio(length: int, span: AnswerSpan | None) -> list[str]:
    """B at span start, I through span end, O elsewhere; all O when span is None."""
    if length < 0:
        raise ValueError(f"negative sentence length {length}")
    tags = ["O"] * length
    if span is not None:
        span.validate(length)
        tags[span.start - 1] = "B"
        for i in range(span.start, span.end):
            tags[i] = "I"
    return tags


def decode_bio(tags: Sequence[str]) -> AnswerSpan | None:
    """Recover the single span marked by encode_bio; None for all-O tags."""
    start = None
    end = None
    for i, tag in enumerate(tags, start=1):
        if tag == "B":
            if start is not None:
                raise ValueError(f"second B at position {i}; tags mark more than one span")
            start = end = i
        elif tag == "I":
            if end != i - 1:
                raise ValueError(f"I at position {i} does not continue a span")
            end = i
        elif tag != "O":
            raise ValueError(f"unknown BIO tag {tag!r} at position {i}")
    if start is None:
        return None
    return AnswerSpan(start, end)


# ---------------------------------------------------------------------------
# tagged-corpus format


def parse_tagged_line(line: str, lineno: int | None = None) -> list[TaggedToken]:
    """Parse one sentence of word|POS|NER|DEP|BIO tokens."""
    where = f"line {lineno}" if lineno is not None else "line"
    tokens = []
    prev_bio = "O"
    for col, chunk in enumerate(line.split(), start=1):
        parts = chunk.split("|")
        if len(parts) != 5:
            raise TaggedFormatError(
                f"{where}, field {col}: expected 5 '|'-separated parts, got {len(parts)}"
            )
        word, pos, ner, dep, bio = parts
        if not word:
            raise TaggedFormatError(f"{where}, field {col}: empty word")
        if bio not in BIO_TAGS:
            raise TaggedFormatError(f"{where}, field {col}: BIO tag {bio!r} not in {{B, I, O}}")
        if bio == "I" and prev_bio not in ("B", "I"):
            raise TaggedFormatError(f"{where}, field {col}: I tag without a preceding B or I")
        prev_bio = bio
        tokens.append(TaggedToken(word, pos, ner, dep, bio))
    return tokens


def format_tagged_line(tokens: Sequence[TaggedToken]) -> str:
    chunks = []
    for i, t in enumerate(tokens, start=1):
        for name, value in (("word", t.word), ("pos", t.pos), ("ner", t.ner), ("dep", t.dep), ("bio", t.bio)):
            if "|" in value or any(ch.isspace() for ch in value):
                raise ValueError(f"token {i}: {name} field {value!r} contains '|' or whitespace")
        if not t.word:
            raise ValueError(f"token {i}: empty word")
        chunks.append(f"{t.word}|{t.pos}|{t.ner}|{t.dep}|{t.bio}")
    return " ".join(chunks)


def format_span(span: AnswerSpan | None) -> str:
    return "-" if span is None else f"{span.start}-{span.end}"


def parse_span(text: str, where: str = "span") -> AnswerSpan | None:
    if text == "-":
        return None
    m = re.fullmatch(r"(\d+)-(\d+)", text)
    if not m:
        raise DataError(f"{where}: answer span must be 'start-end' or '-', got {text!r}")
    span = AnswerSpan(int(m.group(1)), int(m.group(2)))
    if span.start < 1 or span.end < span.start:
        raise DataError(f"{where}: bad span ordering {text!r}")
    return span


def format_example_line(example: Example) -> str:
    sentence = format_tagged_line(example.sentence)
    question = " ".join(example.question)
    return f"{sentence}\t{question}\t{format_span(example.answer)}"


def parse_example_line(line: str, lineno: int | None = None) -> Example:
    where = f"line {lineno}" if lineno is not None else "line"
    fields = line.split("\t")
    if len(fields) != 3:
        raise DataError(f"{where}: expected 3 tab-separated columns, got {len(fields)}")
    sentence = parse_tagged_line(fields[0], lineno)
    if not sentence:
        raise DataError(f"{where}: empty sentence column")
    question = fields[1].split() if fields[1] else []
    span = parse_span(fields[2], where)
    if span is not None:
        span.validate(len(sentence))
        expected = encode_bio(len(sentence), span)
        actual = [t.bio for t in sentence]
        if actual != expected:
            raise DataError(f"{where}: BIO tags do not match the answer span {fields[2]}")
    return Example(sentence=sentence, question=question, answer=span)


def read_examples(path) -> list[Example]:
    """Read a tagged corpus file; blank lines and '#' comment lines are skipped."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            examples.append(parse_example_line(line, lineno))
    return examples


def write_examples(path, examples: Iterable[Example], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for ex in examples:
            fh.write(format_example_line(ex) + "\n")


# ---------------------------------------------------------------------------
# vocabularies


class Vocabulary:
    """token<->id bijection with reserved PAD/UNK/BOS/EOS ids 0..3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.token_of: list[str] = list(SPECIALS)
        self.id_of: dict[str, int] = {t: i for i, t in enumerate(self.token_of)}
        for token in tokens:
            self._append(token)

    def _append(self, token: str) -> None:
        if token in self.id_of:
            raise ValueError(f"duplicate vocabulary token {token!r}")
        self.id_of[token] = len(self.token_of)
        self.token_of.append(token)

    def id(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.token_of[idx]

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def __len__(self) -> int:
        return len(self.token_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.token_of:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        if tokens[:4] != list(SPECIALS):
            raise DataError(f"{path}: first four vocabulary lines must be {SPECIALS}")
        return cls(tokens[4:])

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        """Rebuild from a full token list that already starts with the specials."""
        if list(tokens[:4]) != list(SPECIALS):
            raise DataError(f"vocabulary token list must start with {SPECIALS}")
        return cls(tokens[4:])


def build_vocab(streams: Iterable[Iterable[str]], max_size: int | None = None) -> Vocabulary:
    """Frequency-ordered vocabulary, ties broken lexicographically.

    ``max_size`` caps the total size including the 4 specials; None leaves the
    vocabulary uncapped (used for the small feature-tag vocabularies).
    """
    if max_size is not None and max_size < 4:
        raise ValueError(f"max_size must be at least 4, got {max_size}")
    counts: Counter[str] = Counter()
    for stream in streams:
        counts.update(stream)
    for special in SPECIALS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_size is not None:
        ranked = ranked[: max_size - 4]
    return Vocabulary(token for token, _ in ranked)
