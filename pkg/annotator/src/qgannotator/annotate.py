"""Core annotation flow: toolkit labels reconciled onto the tagged-corpus
tokenization, one output line per input sentence."""

from __future__ import annotations

from dataclasses import dataclass, field

from qgannotator.tokenizer import escape_pipes, token_spans
from qgannotator.toolkits import LabeledToken

_DEFAULT_POS = "X"
_DEFAULT_NER = "O"
_DEFAULT_DEP = "dep"


@dataclass
class AnnotationRecord:
    """One sentence: corpus-format tokens plus labels carried over from the
    toolkit's own tokenization via character-offset alignment."""

    text: str
    tokens: list[str]
    pos: list[str]
    ner: list[str]
    dep: list[str]
    alignment: list[int | None]  # corpus token index -> toolkit token index
    flagged: bool = False
    note: str = ""

    def tagged_line(self) -> str:
        chunks = [
            f"{w}|{p}|{n}|{d}|O"
            for w, p, n, d in zip(self.tokens, self.pos, self.ner, self.dep)
        ]
        return " ".join(chunks) + "\t\t-"


@dataclass
class AnnotationSummary:
    sentences: int = 0
    flagged: int = 0
    failures: list[str] = field(default_factory=list)


def _align(spans, labeled: list[LabeledToken]) -> list[int | None]:
    """Map each corpus token to the toolkit token covering its start offset."""
    mapping: list[int | None] = []
    j = 0
    for span in spans:
        while j < len(labeled) and labeled[j].end <= span.start:
            j += 1
        if j < len(labeled) and labeled[j].start <= span.start < labeled[j].end:
            mapping.append(j)
        else:
            mapping.append(None)
    return mapping


def _single_root(dep: list[str]) -> list[str]:
    # the dependency column carries exactly one ROOT per sentence
    if not dep:
        return dep
    roots = [i for i, label in enumerate(dep) if label == "ROOT"]
    if not roots:
        dep[0] = "ROOT"
    else:
        for extra in roots[1:]:
            dep[extra] = _DEFAULT_DEP
    return dep


def annotate_sentence(text: str, toolkit) -> AnnotationRecord:
    escaped = escape_pipes(text)
    spans = token_spans(escaped)
    labeled = toolkit.annotate_sentence(text)
    alignment = _align(spans, labeled)
    pos, ner, dep = [], [], []
    misses = 0
    for index in alignment:
        if index is None:
            misses += 1
            pos.append(_DEFAULT_POS)
            ner.append(_DEFAULT_NER)
            dep.append(_DEFAULT_DEP)
        else:
            token = labeled[index]
            pos.append(token.pos)
            ner.append(token.ner)
            dep.append(token.dep)
    record = AnnotationRecord(
        text=text,
        tokens=[s.text for s in spans],
        pos=pos,
        ner=ner,
        dep=_single_root(dep),
        alignment=alignment,
    )
    if misses:
        record.flagged = True
        record.note = f"{misses} of {len(spans)} tokens had no toolkit label"
    return record


def annotate_file(in_path, out_path, toolkit, report_path=None) -> AnnotationSummary:
    """Annotate one sentence per input line into tagged-corpus lines.

    The output starts with a '# annotator: <name> <version>' comment; lines
    that could not be fully reconciled keep default labels and are listed in
    the sidecar report.
    """
    summary = AnnotationSummary()
    with open(in_path, encoding="utf-8") as src, open(out_path, "w", encoding="utf-8") as dst:
        dst.write(f"# annotator: {toolkit.name} {toolkit.version}\n")
        for lineno, raw in enumerate(src, start=1):
            sentence = raw.rstrip("\n").strip()
            if not sentence:
                continue
            record = annotate_sentence(sentence, toolkit)
            if not record.tokens:
                summary.flagged += 1
                summary.failures.append(f"line {lineno}: no tokens")
                continue
            dst.write(record.tagged_line() + "\n")
            summary.sentences += 1
            if record.flagged:
                summary.flagged += 1
                summary.failures.append(f"line {lineno}: {record.note}")
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as rep:
            for failure in summary.failures:
                rep.write(failure + "\n")
    return summary
