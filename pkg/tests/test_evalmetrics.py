"""Metric oracles: BLEU hand computations, brute-force LCS and alignment
oracles for ROUGE-L and METEOR-lite, and human-evaluation aggregation."""

import math
import sys
from functools import lru_cache

import numpy as np
import pytest

from qapairgen.corpus import DataError
from qapairgen.evalmetrics import (
    MetricReport,
    bleu,
    compute_report,
    human_eval_aggregate,
    meteor_lite,
    perplexity,
    rouge_l,
    sentence_bleu,
)

# frozen oracle values, computed from the stated formulas
ROUGE_ABCD_CASE = 100.0 * (2.44 * 0.75 * 1.0) / (1.0 + 1.44 * 0.75)  # 87.980769...
METEOR_IDENTICAL_3 = 100.0 * 1.0 * (1.0 - 0.5 * (1.0 / 3.0) ** 3)  # 98.148148...


def lcs_oracle(a, b):
    """Independent top-down memoized LCS, distinct from the production DP."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(10_000)
    try:
        return rec(len(a), len(b))
    finally:
        sys.setrecursionlimit(old_limit)


def meteor_alignment_oracle(cand, ref):
    """Exhaustive per-position alignment search: (matches, min chunks).

    Enumerates every injective candidate->reference assignment over equal
    tokens, keeps the maximum-cardinality ones, and minimizes chunk count.
    Only tractable for short sentences.
    """
    best = {"matches": 0, "chunks": 0}

    def chunks_of(pairs):
        ordered = sorted(pairs)
        count = 0
        prev = None
        for c, r in ordered:
            if prev is None or (c, r) != (prev[0] + 1, prev[1] + 1):
                count += 1
            prev = (c, r)
        return count

    def rec(i, used, pairs):
        if i == len(cand):
            m = len(pairs)
            if m > best["matches"] or (m == best["matches"] and (m == 0 or chunks_of(pairs) < best["chunks"])):
                best["matches"] = m
                best["chunks"] = chunks_of(pairs) if pairs else 0
            return
        rec(i + 1, used, pairs)  # leave cand[i] unaligned
        for j, tok in enumerate(ref):
            if j not in used and tok == cand[i]:
                rec(i + 1, used | {j}, pairs + [(i, j)])

    rec(0, frozenset(), [])
    return best["matches"], best["chunks"]


def meteor_oracle_score(cand, ref):
    matches, chunks = meteor_alignment_oracle(list(cand), list(ref))
    if matches == 0:
        return 0.0
    p = matches / len(cand)
    r = matches / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1 - 0.5 * (chunks / matches) ** 3) * 100.0


class TestBleu:
    def test_identical_corpus_scores_100(self):
        sents = [["the", "cat", "sat", "on", "the", "mat"], ["a", "b", "c", "d", "e"]]
        scores = bleu(sents, [[s] for s in sents])
        for n in range(1, 5):
            assert scores[n] == pytest.approx(100.0, abs=1e-6)

    def test_clipped_precision_hand_case(self):
        # candidate "the the the the" vs reference "the cat":
        # clipped unigram precision 1/4, c=4 > r=2 so BP=1, BLEU-1 = 25.0
        scores = bleu([["the", "the", "the", "the"]], [[["the", "cat"]]])
        assert scores[1] == pytest.approx(25.0, abs=1e-6)

    def test_disjoint_vocabulary_scores_zero(self):
        scores = bleu([["x", "y"]], [[["a", "b"]]])
        assert all(v == 0.0 for v in scores.values())

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            bleu([], [])

    def test_empty_candidate_scores_zero_under_smoothing(self):
        assert sentence_bleu([], [["a", "b"]]) == {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}

    def test_brevity_penalty(self):
        # candidate shorter than reference: BP = exp(1 - r/c) = exp(1 - 4/2)
        scores = bleu([["a", "b"]], [[["a", "b", "c", "d"]]])
        assert scores[1] == pytest.approx(100.0 * math.exp(-1.0), rel=1e-9)

    def test_corpus_permutation_invariance(self):
        cands = [["a", "b", "c"], ["d", "e"], ["a", "a", "x"]]
        refs = [[["a", "b", "z"]], [["d", "e", "f"]], [["a", "x", "x"]]]
        forward = bleu(cands, refs)
        backward = bleu(cands[::-1], refs[::-1])
        assert forward == backward

    def test_adding_perfect_pair_never_lowers_bleu1(self):
        cands = [["a", "b"], ["q", "r", "s"]]
        refs = [[["a", "z"]], [["q", "r", "t"]]]
        base = bleu(cands, refs)[1]
        extended = bleu(cands + [["m", "n", "o"]], refs + [[["m", "n", "o"]]])[1]
        assert extended >= base


class TestRougeL:
    def test_identical(self):
        assert rouge_l(["a", "b", "c"], ["a", "b", "c"]) == pytest.approx(100.0)

    def test_disjoint(self):
        assert rouge_l(["a"], ["b"]) == 0.0

    def test_hand_case(self):
        assert rouge_l(["a", "b", "c", "d"], ["a", "c", "d"]) == pytest.approx(ROUGE_ABCD_CASE, abs=1e-9)
        assert rouge_l(["a", "b", "c", "d"], ["a", "c", "d"]) == pytest.approx(87.98, abs=0.005)

    def test_empty_reference_rejected(self):
        with pytest.raises(DataError):
            rouge_l(["a"], [])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        vocab = list("abcdef")
        for _ in range(300):
            cand = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 21))]
            ref = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 21))]
            lcs = lcs_oracle(cand, ref)
            if lcs == 0:
                assert rouge_l(cand, ref) == 0.0
                continue
            p = lcs / len(cand)
            r = lcs / len(ref)
            expected = (1 + 1.44) * p * r / (r + 1.44 * p) * 100.0
            assert rouge_l(cand, ref) == pytest.approx(expected, abs=1e-12)


class TestMeteorLite:
    def test_identical_three_tokens(self):
        score = meteor_lite(["a", "b", "c"], ["a", "b", "c"])
        assert score == pytest.approx(METEOR_IDENTICAL_3, abs=1e-9)
        assert score == pytest.approx(98.15, abs=0.005)

    def test_zero_matches(self):
        assert meteor_lite(["x"], ["y"]) == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(DataError):
            meteor_lite(["a"], [])

    def test_stemming_flag(self):
        assert meteor_lite(["walking"], ["walked"]) == 0.0
        assert meteor_lite(["walking"], ["walked"], stem=True) > 0.0

    def test_fewest_chunks_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(7)
        vocab = list("abcd")
        for _ in range(200):
            cand = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 9))]
            ref = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 9))]
            assert meteor_lite(cand, ref) == pytest.approx(meteor_oracle_score(cand, ref), abs=1e-9)

    def test_duplicate_token_alignment_prefers_contiguous(self):
        # "b a" inside the candidate can align contiguously; fewest-chunks must find it
        cand = ["a", "b", "a"]
        ref = ["b", "a"]
        assert meteor_lite(cand, ref) == pytest.approx(meteor_oracle_score(cand, ref), abs=1e-12)


class _UniformScorer:
    def __init__(self, vocab_size):
        self.vocab_size = vocab_size

    def sequence_nll(self, example):
        n = len(example)
        return n * math.log(self.vocab_size), n


class _PerfectScorer:
    def sequence_nll(self, example):
        return 0.0, len(example)


class TestPerplexity:
    def test_uniform_model_gives_vocab_size(self):
        model = _UniformScorer(vocab_size=37)
        assert perplexity(model, [["a"] * 5, ["b"] * 3]) == pytest.approx(37.0, rel=1e-9)

    def test_perfect_model_gives_one(self):
        assert perplexity(_PerfectScorer(), [["a", "b"]]) == pytest.approx(1.0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            perplexity(_UniformScorer(2), [])


class TestHumanEval:
    def _table(self, totals, questions=100, criterion="syntax"):
        rows = []
        for rater, yes_count in enumerate(totals):
            for q in range(questions):
                rows.append((f"r{rater}", f"q{q}", criterion, 1 if q < yes_count else 0))
        return rows

    def test_paper_averaging_example(self):
        result = human_eval_aggregate(self._table((80, 79, 73)))
        assert round(result["syntax"], 2) == 77.33

    def test_all_yes(self):
        result = human_eval_aggregate(self._table((10, 10), questions=10))
        assert result["syntax"] == 100.0

    def test_single_rater_unchanged(self):
        result = human_eval_aggregate(self._table((7,), questions=10))
        assert result["syntax"] == pytest.approx(70.0)

    def test_missing_cells_listed(self):
        rows = self._table((3, 2), questions=3)
        del rows[-1]  # drops (r1, q2) while q2 stays observed via r0
        with pytest.raises(DataError, match=r"missing judgement cells.*r1.*q2"):
            human_eval_aggregate(rows)

    def test_non_binary_rejected(self):
        with pytest.raises(DataError):
            human_eval_aggregate([("r", "q", "c", 2)])


class TestReports:
    def test_scores_in_range_and_deterministic(self):
        cands = [["the", "cat", "sat"], ["a", "b", "c", "d"]]
        refs = [[["the", "cat", "sat"]], [["a", "b", "x", "d"]]]
        report = compute_report(cands, refs)
        assert all(0.0 <= v <= 100.0 for v in report.scores.values())
        assert report.to_json() == compute_report(cands, refs).to_json()

    def test_identical_corpus_perfect_scores(self):
        sents = [["w", "x", "y", "z", "q"]]
        report = compute_report(sents, [[s] for s in sents])
        for name in ("BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L"):
            assert report.scores[name] == pytest.approx(100.0, abs=1e-6)

    def test_text_rendering(self):
        report = MetricReport(scores={"BLEU-1": 50.0}, sentences=2, candidate_tokens=5, reference_tokens=6)
        text = report.to_text()
        assert "BLEU-1" in text and "sentences: 2" in text
