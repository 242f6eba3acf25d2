"""Stage 1: pivotal answer selection.

Two model families over a sentence: an entity scorer (unidirectional LSTM
encoder + perceptron, softmax across candidate entity spans) and pointer
networks that emit token positions directly, either as a free position
sequence or as a (start, end) boundary pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from qapairgen.corpus import AnswerSpan, TaggedToken
from qapairgen.diffkernel import (
    Adam,
    LSTMCell,
    ParamSet,
    Tensor,
    add,
    clip_global_norm,
    concat,
    constant,
    lstm_step,
    matmul,
    mean_rows,
    nll_loss,
    rows,
    run_lstm,
    slice_axis,
    softmax,
    tanh,
    transpose,
    zeros,
)

log = logging.getLogger(__name__)

SEQUENCE_STEP_CAP = 10  # hard stop so untrained models terminate
_MASK_VALUE = -1e9  # large negative logit; softmax maps it to exactly 0


class NoCandidatesError(Exception):
    """Sentence has no named entities; caller falls back to a pointer model."""


@dataclass
class EncoderStates:
    """Per-token encoder activations plus the final state.

    ``augmented()`` appends one all-zero position that serves as the
    pointer networks' end-of-output token.
    """

    states: Tensor  # (n, d)
    final: Tensor  # (1, d)

    def __len__(self) -> int:
        return self.states.shape[0]

    def augmented(self) -> Tensor:
        return concat([self.states, zeros((1, self.states.shape[1]))], axis=0)


def candidate_entities(sentence: Sequence[TaggedToken]) -> list[AnswerSpan]:
    """Maximal runs of identical non-O NER tags, in sentence order, 1-based."""
    spans = []
    start = None
    prev = "O"
    for i, token in enumerate(sentence, start=1):
        tag = token.ner
        if tag != prev:
            if prev != "O":
                spans.append(AnswerSpan(start, i - 1))
            start = i if tag != "O" else None
        prev = tag
    if prev != "O":
        spans.append(AnswerSpan(start, len(sentence)))
    return spans


# ---------------------------------------------------------------------------
# pointer networks


@dataclass
class PointerExample:
    word_ids: list[int]
    span: AnswerSpan | None = None
    marker: list[float] | None = None  # optional per-token feature channel


class PointerNetwork:
    """LSTM encoder + attention-scored pointer decoder over input positions."""

    def __init__(
        self,
        vocab_size: int,
        word_dim: int = 32,
        hidden: int = 64,
        attn_dim: int | None = None,
        marker_channels: int = 0,
        rng: np.random.Generator | None = None,
    ) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.word_dim = word_dim
        self.hidden = hidden
        self.attn_dim = attn_dim if attn_dim is not None else hidden
        self.marker_channels = marker_channels
        p = ParamSet()
        self.params = p
        self.embedding = p.create("embedding", (vocab_size, word_dim), rng)
        enc_in = word_dim + marker_channels
        self.encoder = LSTMCell(
            p.create("encoder.wx", (enc_in, 4 * hidden), rng),
            p.create("encoder.wh", (hidden, 4 * hidden), rng),
            p.create("encoder.b", (4 * hidden,), rng),
        )
        self.we = p.create("attn.we", (hidden, self.attn_dim), rng)
        self.wd = p.create("attn.wd", (hidden, self.attn_dim), rng)
        self.v = p.create("attn.v", (self.attn_dim, 1), rng)
        self.decoder = LSTMCell(
            p.create("decoder.wx", (hidden + hidden, 4 * hidden), rng),
            p.create("decoder.wh", (hidden, 4 * hidden), rng),
            p.create("decoder.b", (4 * hidden,), rng),
        )

    def embed(self, example: PointerExample) -> Tensor:
        vectors = rows(self.embedding, example.word_ids)
        if self.marker_channels:
            marker = example.marker
            if marker is None:
                marker = [0.0] * len(example.word_ids)
            column = constant(np.asarray(marker, dtype=float).reshape(-1, self.marker_channels))
            vectors = concat([vectors, column], axis=1)
        return vectors

    def encode(self, example: PointerExample) -> EncoderStates:
        states, h, _ = run_lstm(self.embed(example), self.encoder)
        return EncoderStates(states=concat(states, axis=0), final=h)

    def zero_state(self) -> tuple[Tensor, Tensor]:
        return zeros((1, self.hidden)), zeros((1, self.hidden))


def pn_scores(augmented: Tensor, decoder_state: Tensor, we: Tensor, wd: Tensor, v: Tensor) -> Tensor:
    """One logit per input position plus the end position, shape (n+1, 1)."""
    return matmul(tanh(add(matmul(augmented, we), matmul(decoder_state, wd))), v)


ScoreFn = Callable[[Tensor, Tensor, int], Tensor]


def _advance(model: PointerNetwork, augmented: Tensor, scores: Tensor, h: Tensor, c: Tensor):
    # recurrence input is <softmax(scores) . augmented ; previous state>
    read = matmul(transpose(softmax(scores, axis=0)), augmented)
    return lstm_step(concat([read, h], axis=1), h, c, model.decoder)


def sequence_pointer_decode(
    enc: EncoderStates,
    model: PointerNetwork,
    max_steps: int = SEQUENCE_STEP_CAP,
    score_fn: ScoreFn | None = None,
) -> list[int]:
    """Greedy position decoding, 1-based indices, stopping at the end position."""
    augmented = enc.augmented()
    n = len(enc)
    h, c = model.zero_state()
    emitted: list[int] = []
    for step in range(max_steps):
        scores = (
            score_fn(augmented, h, step)
            if score_fn is not None
            else pn_scores(augmented, h, model.we, model.wd, model.v)
        )
        choice = int(np.argmax(scores.data))  # ties resolve to the lowest index
        if choice == n:
            break
        emitted.append(choice + 1)
        h, c = _advance(model, augmented, scores, h, c)
    return emitted


def boundary_pointer_decode(
    enc: EncoderStates,
    model: PointerNetwork,
    score_fn: ScoreFn | None = None,
) -> AnswerSpan:
    """Two decode steps; masking guarantees 1 <= start <= end <= n."""
    augmented = enc.augmented()
    n = len(enc)
    h, c = model.zero_state()

    def scored(step, banned):
        raw = (
            score_fn(augmented, h, step)
            if score_fn is not None
            else pn_scores(augmented, h, model.we, model.wd, model.v)
        )
        mask = np.zeros((n + 1, 1))
        mask[banned] = _MASK_VALUE
        return add(raw, constant(mask))

    first = scored(0, [n])  # the end position is never a token index
    start = int(np.argmax(first.data))
    h, c = _advance(model, augmented, first, h, c)
    second = scored(1, list(range(start)) + [n])  # end must not precede start
    end = int(np.argmax(second.data))
    return AnswerSpan(start + 1, end + 1)


def pointer_train_loss(
    model: PointerNetwork,
    batch: Sequence[PointerExample],
    mode: str,
    score_fn: ScoreFn | None = None,
) -> Tensor:
    """Teacher-forced sum of per-step NLL over the batch.

    Boundary targets are (start, end); sequence targets are the gold span's
    positions followed by the end position.
    """
    if mode not in ("sequence", "boundary"):
        raise ValueError(f"mode must be 'sequence' or 'boundary', got {mode!r}")
    total: Tensor | None = None
    for example in batch:
        if example.span is None:
            raise ValueError("pointer training requires gold spans")
        n = len(example.word_ids)
        example.span.validate(n)
        enc = model.encode(example)
        augmented = enc.augmented()
        if mode == "boundary":
            targets = [example.span.start - 1, example.span.end - 1]
        else:
            targets = list(range(example.span.start - 1, example.span.end)) + [n]
        h, c = model.zero_state()
        loss: Tensor | None = None
        for step, target in enumerate(targets):
            scores = (
                score_fn(augmented, h, step)
                if score_fn is not None
                else pn_scores(augmented, h, model.we, model.wd, model.v)
            )
            step_loss = nll_loss(transpose(scores), [target], average=False)
            loss = step_loss if loss is None else add(loss, step_loss)
            h, c = _advance(model, augmented, scores, h, c)
        total = loss if total is None else add(total, loss)
    assert total is not None
    return total


def pointer_distribution(model: PointerNetwork, enc: EncoderStates, decoder_state: Tensor) -> np.ndarray:
    """Normalized pointer distribution at one step (inference helper)."""
    scores = pn_scores(enc.augmented(), decoder_state, model.we, model.wd, model.v)
    return softmax(scores, axis=0).data.reshape(-1)


def train_pointer(
    model: PointerNetwork,
    examples: Sequence[PointerExample],
    mode: str,
    epochs: int = 3,
    lr: float = 0.002,
    batch_size: int = 8,
    grad_clip: float = 5.0,
    rng: np.random.Generator | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> None:
    """Adam training loop; shuffles each epoch, clips by global norm."""
    rng = rng if rng is not None else np.random.default_rng(0)
    optimizer = Adam(model.params, lr=lr)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        steps = 0
        for lo in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[lo : lo + batch_size]]
            model.params.zero_grads()
            loss = pointer_train_loss(model, batch, mode) / len(batch)
            loss.backward()
            clip_global_norm(model.params, grad_clip)
            optimizer.step()
            epoch_loss += loss.item()
            steps += 1
        if progress is not None:
            progress(epoch, epoch_loss / max(steps, 1))


# ---------------------------------------------------------------------------
# named-entity selection


@dataclass
class NEExample:
    word_ids: list[int]
    candidates: list[AnswerSpan]
    gold_index: int | None = None


class NESelector:
    """Two-layer unidirectional LSTM encoder + perceptron over candidate spans.

    Each candidate is scored from <final state ; mean of all states ; mean of
    the states inside the span> and normalized with a softmax across the
    sentence's candidates.
    """

    def __init__(
        self,
        vocab_size: int,
        word_dim: int = 16,
        hidden: int = 32,
        scorer_hidden: int = 32,
        rng: np.random.Generator | None = None,
    ) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.hidden = hidden
        p = ParamSet()
        self.params = p
        self.embedding = p.create("embedding", (vocab_size, word_dim), rng)
        self.layer0 = LSTMCell(
            p.create("encoder.0.wx", (word_dim, 4 * hidden), rng),
            p.create("encoder.0.wh", (hidden, 4 * hidden), rng),
            p.create("encoder.0.b", (4 * hidden,), rng),
        )
        self.layer1 = LSTMCell(
            p.create("encoder.1.wx", (hidden, 4 * hidden), rng),
            p.create("encoder.1.wh", (hidden, 4 * hidden), rng),
            p.create("encoder.1.b", (4 * hidden,), rng),
        )
        self.w1 = p.create("scorer.w1", (3 * hidden, scorer_hidden), rng)
        self.b1 = p.create("scorer.b1", (scorer_hidden,), rng)
        self.w2 = p.create("scorer.w2", (scorer_hidden, 1), rng)
        self.b2 = p.create("scorer.b2", (1,), rng)

    def encode(self, word_ids: Sequence[int]) -> EncoderStates:
        embedded = rows(self.embedding, list(word_ids))
        states0, _, _ = run_lstm(embedded, self.layer0)
        states1, h1, _ = run_lstm(concat(states0, axis=0), self.layer1)
        return EncoderStates(states=concat(states1, axis=0), final=h1)

    def candidate_logits(self, word_ids: Sequence[int], candidates: Sequence[AnswerSpan]) -> Tensor:
        """(k, 1) perceptron scores, one per candidate span."""
        if not candidates:
            raise NoCandidatesError("sentence has no candidate entities")
        enc = self.encode(word_ids)
        sentence_mean = mean_rows(enc.states)
        reps = []
        for span in candidates:
            span.validate(len(enc))
            span_mean = mean_rows(slice_axis(enc.states, 0, span.start - 1, span.end))
            reps.append(concat([enc.final, sentence_mean, span_mean], axis=1))
        representation = concat(reps, axis=0)  # (k, 3*hidden)
        hidden = tanh(add(matmul(representation, self.w1), self.b1))
        return add(matmul(hidden, self.w2), self.b2)


def ne_select(
    word_ids: Sequence[int],
    candidates: Sequence[AnswerSpan],
    model: NESelector,
) -> np.ndarray:
    """Probability per candidate (softmax across candidates, sums to 1)."""
    logits = model.candidate_logits(word_ids, candidates)
    return softmax(transpose(logits), axis=1).data.reshape(-1)


def ne_train_loss(model: NESelector, example: NEExample) -> Tensor:
    if example.gold_index is None:
        raise ValueError("NE training requires a gold candidate index")
    logits = model.candidate_logits(example.word_ids, example.candidates)
    return nll_loss(transpose(logits), [example.gold_index], average=False)


def train_ne_selector(
    model: NESelector,
    examples: Sequence[NEExample],
    epochs: int = 20,
    lr: float = 0.002,
    batch_size: int = 8,
    grad_clip: float = 5.0,
    rng: np.random.Generator | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> None:
    rng = rng if rng is not None else np.random.default_rng(0)
    optimizer = Adam(model.params, lr=lr)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        steps = 0
        for lo in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[lo : lo + batch_size]]
            model.params.zero_grads()
            loss: Tensor | None = None
            for ex in batch:
                item = ne_train_loss(model, ex)
                loss = item if loss is None else add(loss, item)
            loss = loss / len(batch)
            loss.backward()
            clip_global_norm(model.params, grad_clip)
            optimizer.step()
            epoch_loss += loss.item()
            steps += 1
        if progress is not None:
            progress(epoch, epoch_loss / max(steps, 1))


def ne_accuracy(model: NESelector, examples: Sequence[NEExample]) -> float:
    hits = 0
    for ex in examples:
        probs = ne_select(ex.word_ids, ex.candidates, model)
        if int(np.argmax(probs)) == ex.gold_index:
            hits += 1
    return hits / len(examples)


# ---------------------------------------------------------------------------
# gradient-check entries for the composed pointer loss


def gradcheck_entries():
    """Composed pointer losses as (name, fn, shapes) grad-check entries."""

    def build(mode):
        def fn(emb, ewx, ewh, eb, we, wd, v, dwx, dwh, db):
            model = PointerNetwork.__new__(PointerNetwork)
            model.vocab_size = emb.shape[0]
            model.word_dim = emb.shape[1]
            model.hidden = ewh.shape[0]
            model.attn_dim = we.shape[1]
            model.marker_channels = 0
            model.params = ParamSet()
            model.embedding = emb
            model.encoder = LSTMCell(ewx, ewh, eb)
            model.we, model.wd, model.v = we, wd, v
            model.decoder = LSTMCell(dwx, dwh, db)
            example = PointerExample(word_ids=[1, 3, 0, 2], span=AnswerSpan(2, 3))
            return pointer_train_loss(model, [example], mode)

        hidden, word_dim, attn = 3, 2, 3
        shapes = [
            (5, word_dim),
            (word_dim, 4 * hidden),
            (hidden, 4 * hidden),
            (4 * hidden,),
            (hidden, attn),
            (hidden, attn),
            (attn, 1),
            (2 * hidden, 4 * hidden),
            (hidden, 4 * hidden),
            (4 * hidden,),
        ]
        return fn, shapes

    seq_fn, seq_shapes = build("sequence")
    bnd_fn, bnd_shapes = build("boundary")
    return [
        ("pointer_loss_sequence", seq_fn, seq_shapes),
        ("pointer_loss_boundary", bnd_fn, bnd_shapes),
    ]
