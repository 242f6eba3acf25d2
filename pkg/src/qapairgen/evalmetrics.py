"""Automatic evaluation metrics (BLEU-1..4, ROUGE-L, METEOR-lite, perplexity)
and human-evaluation aggregation. Corpus scores are scaled to 0-100."""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from qapairgen.corpus import DataError

TokenSeq = Sequence[str]

ROUGE_BETA = 1.2
METEOR_VARIANT = "meteor-lite"  # exact(+stem) matching only; no synonym tables
_CHUNK_SEARCH_CAP = 50_000  # alignment combinations before the monotone fallback


# ---------------------------------------------------------------------------
# BLEU


def _ngram_counts(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, refs: Sequence[TokenSeq]) -> int:
    # closest reference length; ties broken toward the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu(
    candidates: Sequence[TokenSeq],
    references: Sequence[Sequence[TokenSeq]],
    max_n: int = 4,
    smooth: bool = False,
) -> dict[int, float]:
    """Corpus BLEU-1..max_n with clipped modified precision and brevity penalty.

    ``references[i]`` is the list of references for ``candidates[i]``. With
    ``smooth`` set, n>1 precisions get add-one smoothing (for sentence-level
    use). Returns cumulative scores scaled to 0-100, keyed by n.
    """
    if len(candidates) == 0:
        raise DataError("BLEU of an empty corpus")
    if len(candidates) != len(references):
        raise DataError(
            f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}"
        )
    matched = [0] * (max_n + 1)
    total = [0] * (max_n + 1)
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise DataError("candidate with no references")
        cand_len += len(cand)
        ref_len += _closest_ref_length(len(cand), refs)
        for n in range(1, max_n + 1):
            counts = _ngram_counts(cand, n)
            if not counts:
                continue
            clip = Counter()
            for ref in refs:
                ref_counts = _ngram_counts(ref, n)
                for gram in counts:
                    clip[gram] = max(clip[gram], ref_counts.get(gram, 0))
            matched[n] += sum(min(c, clip[g]) for g, c in counts.items())
            total[n] += sum(counts.values())

    if cand_len == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)

    precisions = []
    for n in range(1, max_n + 1):
        if total[n] == 0:
            precisions.append(0.0)
        elif smooth and n > 1:
            precisions.append((matched[n] + 1.0) / (total[n] + 1.0))
        else:
            precisions.append(matched[n] / total[n])

    scores = {}
    for n in range(1, max_n + 1):
        ps = precisions[:n]
        if any(p == 0.0 for p in ps):
            scores[n] = 0.0
        else:
            scores[n] = bp * math.exp(sum(math.log(p) for p in ps) / n) * 100.0
    return scores


def sentence_bleu(candidate: TokenSeq, references: Sequence[TokenSeq], max_n: int = 4) -> dict[int, float]:
    """Smoothed single-sentence BLEU; empty candidates score 0."""
    if len(candidate) == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    return bleu([candidate], [references], max_n=max_n, smooth=True)


# ---------------------------------------------------------------------------
# ROUGE-L


def _lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    # bottom-up DP, two rows
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: TokenSeq, reference: TokenSeq, beta: float = ROUGE_BETA) -> float:
    """LCS-based F score (0-100) with recall-weighted beta."""
    if len(reference) == 0:
        raise DataError("ROUGE-L against an empty reference")
    if len(candidate) == 0:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    b2 = beta * beta
    return (1 + b2) * precision * recall / (recall + b2 * precision) * 100.0


# ---------------------------------------------------------------------------
# METEOR-lite


_STEM_SUFFIXES = ("ing", "edly", "ed", "es", "s", "ly")


def _stem(token: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def _chunk_count(pairs: Sequence[tuple[int, int]]) -> int:
    ordered = sorted(pairs)
    chunks = 0
    prev = None
    for c, r in ordered:
        if prev is None or c != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (c, r)
    return chunks


def _min_chunks(cand: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """(matches, minimal chunk count) over all maximum exact-match alignments.

    Exhausts per-token-type assignment choices while the combination count
    stays under a cap, then falls back to the monotone per-type assignment.
    """
    cand_positions: dict[str, list[int]] = {}
    ref_positions: dict[str, list[int]] = {}
    for i, t in enumerate(cand):
        cand_positions.setdefault(t, []).append(i)
    for j, t in enumerate(ref):
        ref_positions.setdefault(t, []).append(j)

    shared = sorted(set(cand_positions) & set(ref_positions))
    matches = sum(min(len(cand_positions[t]), len(ref_positions[t])) for t in shared)
    if matches == 0:
        return 0, 0

    per_type_options: list[list[tuple[tuple[int, int], ...]]] = []
    combinations = 1
    for t in shared:
        cp, rp = cand_positions[t], ref_positions[t]
        k = min(len(cp), len(rp))
        options = [
            tuple(zip(chosen_c, perm_r))
            for chosen_c in itertools.combinations(cp, k)
            for chosen_r in itertools.combinations(rp, k)
            for perm_r in itertools.permutations(chosen_r)
        ]
        per_type_options.append(options)
        combinations *= len(options)
        if combinations > _CHUNK_SEARCH_CAP:
            break

    if combinations <= _CHUNK_SEARCH_CAP:
        best = min(
            _chunk_count([p for group in chosen for p in group])
            for chosen in itertools.product(*per_type_options)
        )
        return matches, best

    # fallback: i-th occurrence aligns to i-th occurrence
    pairs = []
    for t in shared:
        k = min(len(cand_positions[t]), len(ref_positions[t]))
        pairs.extend(zip(cand_positions[t][:k], ref_positions[t][:k]))
    return matches, _chunk_count(pairs)


def meteor_lite(candidate: TokenSeq, reference: TokenSeq, stem: bool = False) -> float:
    """Unigram exact-match METEOR with harmonic F-mean and chunk penalty (0-100)."""
    if len(reference) == 0:
        raise DataError("METEOR against an empty reference")
    if len(candidate) == 0:
        return 0.0
    cand = [_stem(t) for t in candidate] if stem else list(candidate)
    ref = [_stem(t) for t in reference] if stem else list(reference)
    matches, chunks = _min_chunks(cand, ref)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty) * 100.0


# ---------------------------------------------------------------------------
# perplexity


def perplexity(model, dataset: Sequence) -> float:
    """exp(mean per-token NLL) under ``model.sequence_nll``; EOS counted, PAD not."""
    if len(dataset) == 0:
        raise DataError("perplexity of an empty dataset")
    total = 0.0
    count = 0
    for example in dataset:
        nll, n = model.sequence_nll(example)
        total += float(nll)
        count += int(n)
    if count == 0:
        raise DataError("perplexity over zero tokens")
    return math.exp(total / count)


# ---------------------------------------------------------------------------
# human evaluation


def human_eval_aggregate(
    judgements: Iterable[tuple[str, str, str, int]],
) -> dict[str, float]:
    """Per-criterion mean over raters of each rater's percentage of yes votes.

    ``judgements`` rows are (rater, question_id, criterion, 0-or-1); every
    rater must cover every (question, criterion) cell exactly once.
    """
    table: dict[tuple[str, str, str], int] = {}
    raters: set[str] = set()
    questions: set[str] = set()
    criteria: set[str] = set()
    for rater, question, criterion, value in judgements:
        if value not in (0, 1):
            raise DataError(f"judgement value must be 0 or 1, got {value!r}")
        key = (rater, question, criterion)
        if key in table:
            raise DataError(f"duplicate judgement for {key}")
        table[key] = value
        raters.add(rater)
        questions.add(question)
        criteria.add(criterion)
    if not table:
        raise DataError("no judgements provided")

    missing = [
        (r, q, c)
        for r in sorted(raters)
        for q in sorted(questions)
        for c in sorted(criteria)
        if (r, q, c) not in table
    ]
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        more = "" if len(missing) <= 10 else f" (and {len(missing) - 10} more)"
        raise DataError(f"missing judgement cells: {shown}{more}")

    result = {}
    for criterion in sorted(criteria):
        rater_percentages = [
            100.0 * sum(table[(r, q, criterion)] for q in questions) / len(questions)
            for r in sorted(raters)
        ]
        result[criterion] = sum(rater_percentages) / len(rater_percentages)
    return result


def read_human_eval_table(path) -> list[tuple[str, str, str, int]]:
    """Read 'rater,question_id,criterion,{0|1}' rows (',' or TAB separated)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                value = int(parts[3])
            except ValueError as err:
                raise DataError(f"{path}:{lineno}: judgement must be 0 or 1") from err
            rows.append((parts[0].strip(), parts[1].strip(), parts[2].strip(), value))
    return rows


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    scores: dict[str, float]
    sentences: int
    candidate_tokens: int
    reference_tokens: int
    config: dict[str, object] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "scores": {k: round(v, 6) for k, v in self.scores.items()},
            "counts": {
                "sentences": self.sentences,
                "candidate_tokens": self.candidate_tokens,
                "reference_tokens": self.reference_tokens,
            },
            "config": self.config,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = [f"sentences: {self.sentences}"]
        lines += [f"{name:10s} {value:7.2f}" for name, value in self.scores.items()]
        flags = ", ".join(f"{k}={v}" for k, v in sorted(self.config.items()))
        if flags:
            lines.append(f"config: {flags}")
        return "\n".join(lines)


def compute_report(
    candidates: Sequence[TokenSeq],
    references: Sequence[Sequence[TokenSeq]],
    smooth: bool = False,
    stem: bool = False,
) -> MetricReport:
    """BLEU-1..4 plus mean ROUGE-L and METEOR-lite over a corpus."""
    if len(candidates) != len(references):
        raise DataError("candidate/reference count mismatch")
    bleu_scores = bleu(candidates, references, max_n=4, smooth=smooth)
    rouge_scores = []
    meteor_scores = []
    for cand, refs in zip(candidates, references):
        rouge_scores.append(max(rouge_l(cand, ref) for ref in refs))
        meteor_scores.append(max(meteor_lite(cand, ref, stem=stem) for ref in refs))
    scores = {f"BLEU-{n}": bleu_scores[n] for n in range(1, 5)}
    scores["ROUGE-L"] = sum(rouge_scores) / len(rouge_scores)
    scores["METEOR"] = sum(meteor_scores) / len(meteor_scores)
    return MetricReport(
        scores=scores,
        sentences=len(candidates),
        candidate_tokens=sum(len(c) for c in candidates),
        reference_tokens=sum(len(r[0]) for r in references),
        config={"bleu_smoothing": smooth, "meteor_stemming": stem, "rouge_beta": ROUGE_BETA, "meteor_variant": METEOR_VARIANT},
    )
