"""Stage 2: question generation.

Feature-augmented bidirectional LSTM encoder, dot-product global attention,
an LSTM decoder with the combined [state; context] output layer, teacher-forced
training with validation-perplexity checkpoint selection, and greedy/beam
question decoding.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qapairgen.answersel import EncoderStates
from qapairgen.config import ExperimentConfig
from qapairgen.corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    Example,
    TaggedToken,
    Vocabulary,
)
from qapairgen.diffkernel import (
    Adam,
    LSTMCell,
    ParamSet,
    Tensor,
    add,
    clip_global_norm,
    concat,
    constant,
    dropout,
    lstm_step,
    matmul,
    nll_loss,
    rows,
    run_lstm,
    slice_axis,
    softmax,
    tanh,
    transpose,
)

log = logging.getLogger(__name__)

_MASK_VALUE = -1e9
_BIO_COLUMNS = {"B": 0, "I": 1, "O": 2}

FEATURE_CHANNELS = ("pos", "ner", "dep")


class TrainingDiverged(Exception):
    """Loss went non-finite; training aborted."""


@dataclass(frozen=True)
class FeatureEmbeddingSpec:
    """Input layout: word embedding then one-hot POS/NER/DEP/BIO blocks."""

    word_dim: int
    pos_width: int = 0
    ner_width: int = 0
    dep_width: int = 0
    bio_width: int = 0  # exactly 3 when the answer-encoding channel is on

    @property
    def total_width(self) -> int:
        return self.word_dim + self.pos_width + self.ner_width + self.dep_width + self.bio_width

    @classmethod
    def for_variant(cls, variant_spec, word_dim: int, vocabs: dict[str, Vocabulary]) -> "FeatureEmbeddingSpec":
        if variant_spec.features:
            widths = {ch: len(vocabs[ch]) for ch in FEATURE_CHANNELS}
        else:
            widths = {ch: 0 for ch in FEATURE_CHANNELS}
        bio = 3 if variant_spec.answer_source is not None else 0
        return cls(word_dim, widths["pos"], widths["ner"], widths["dep"], bio)


def embed_with_features(
    tokens: Sequence[TaggedToken],
    spec: FeatureEmbeddingSpec,
    vocabs: dict[str, Vocabulary],
    word_matrix: Tensor,
    report: Counter | None = None,
) -> Tensor:
    """Per-token input vectors: word embedding ++ one-hot feature blocks.

    Unknown feature tags land in the reserved unknown column (the UNK id) and
    are counted in ``report`` when given.
    """
    n = len(tokens)
    word_ids = [vocabs["word"].id(t.word) for t in tokens]
    blocks = [rows(word_matrix, word_ids)]
    for channel, width in (
        ("pos", spec.pos_width),
        ("ner", spec.ner_width),
        ("dep", spec.dep_width),
    ):
        if width == 0:
            continue
        onehot = np.zeros((n, width))
        vocab = vocabs[channel]
        for i, token in enumerate(tokens):
            tag = getattr(token, channel)
            if report is not None and tag not in vocab:
                report[f"{channel}:{tag}"] += 1
            onehot[i, vocab.id(tag)] = 1.0
        blocks.append(constant(onehot))
    if spec.bio_width:
        onehot = np.zeros((n, spec.bio_width))
        for i, token in enumerate(tokens):
            onehot[i, _BIO_COLUMNS[token.bio]] = 1.0
        blocks.append(constant(onehot))
    return concat(blocks, axis=1) if len(blocks) > 1 else blocks[0]


@dataclass
class AttentionResult:
    alignment: Tensor  # (n, 1), non-negative, sums to 1
    context: Tensor  # (1, d) alignment-weighted sum of encoder states


def attend(decoder_state: Tensor, enc: EncoderStates) -> AttentionResult:
    """Dot-score alignment over all encoder states plus the context vector."""
    if decoder_state.shape[1] != enc.states.shape[1]:
        raise ValueError(
            f"attention width mismatch: decoder {decoder_state.shape[1]} vs encoder {enc.states.shape[1]}"
        )
    scores = matmul(enc.states, transpose(decoder_state))  # (n, 1)
    alignment = softmax(scores, axis=0)
    context = matmul(transpose(alignment), enc.states)  # (1, d)
    return AttentionResult(alignment=alignment, context=context)


@dataclass
class Hypothesis:
    token_ids: list[int]
    log_prob: float  # non-increasing as tokens are appended
    state: list[tuple[Tensor, Tensor]]
    finished: bool = False

    def score(self) -> float:
        return self.log_prob / max(len(self.token_ids), 1)


class QGModel:
    """Encoder/decoder question generator over tagged sentences.

    All parameters live in a ParamSet and are fetched by name, so checkpoint
    loading and the gradient-check harness can swap tensors freely.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        vocabs: dict[str, Vocabulary],
        rng: np.random.Generator | None = None,
        pretrained_words: np.ndarray | None = None,
    ) -> None:
        cfg.validate()
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.vocabs = vocabs
        self.spec = FeatureEmbeddingSpec.for_variant(cfg.variant_spec, cfg.word_dim, vocabs)
        self.word_vocab = vocabs["word"]
        vocab_size = len(self.word_vocab)
        hidden = cfg.hidden_size

        p = ParamSet()
        self.params = p
        p.create("encoder.embedding", (vocab_size, cfg.word_dim), rng)
        in_width = self.spec.total_width
        for layer in range(cfg.enc_layers):
            for direction in ("fwd", "bwd"):
                p.create(f"encoder.{layer}.{direction}.wx", (in_width, 4 * hidden), rng)
                p.create(f"encoder.{layer}.{direction}.wh", (hidden, 4 * hidden), rng)
                p.create(f"encoder.{layer}.{direction}.b", (4 * hidden,), rng)
            in_width = 2 * hidden
        p.create("encoder.proj.w", (2 * hidden, hidden), rng)
        p.create("encoder.proj.b", (hidden,), rng)
        for layer in range(cfg.dec_layers):
            p.create(f"bridge.{layer}.wh", (2 * hidden, hidden), rng)
            p.create(f"bridge.{layer}.bh", (hidden,), rng)
            p.create(f"bridge.{layer}.wc", (2 * hidden, hidden), rng)
            p.create(f"bridge.{layer}.bc", (hidden,), rng)
        p.create("decoder.embedding", (vocab_size, cfg.word_dim), rng)
        in_width = cfg.word_dim
        for layer in range(cfg.dec_layers):
            p.create(f"decoder.{layer}.wx", (in_width, 4 * hidden), rng)
            p.create(f"decoder.{layer}.wh", (hidden, 4 * hidden), rng)
            p.create(f"decoder.{layer}.b", (4 * hidden,), rng)
            in_width = hidden
        p.create("output.wr", (2 * hidden, hidden), rng)
        p.create("output.br", (hidden,), rng)
        p.create("output.ws", (hidden, vocab_size), rng)

        if pretrained_words is not None:
            for name in ("encoder.embedding", "decoder.embedding"):
                p[name].data = np.asarray(pretrained_words, dtype=p[name].data.dtype).copy()

        # PAD column never receives probability mass
        mask = np.zeros(vocab_size)
        mask[PAD_ID] = _MASK_VALUE
        self._pad_mask = mask

    def _cell(self, prefix: str) -> LSTMCell:
        return LSTMCell(self.params[f"{prefix}.wx"], self.params[f"{prefix}.wh"], self.params[f"{prefix}.b"])

    # -- encoder ------------------------------------------------------------

    def embed_source(self, tokens: Sequence[TaggedToken], report: Counter | None = None) -> Tensor:
        if not tokens:
            raise ValueError("cannot encode an empty sentence")
        return embed_with_features(tokens, self.spec, self.vocabs, self.params["encoder.embedding"], report)

    def encode(
        self,
        inputs: Tensor,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[EncoderStates, list[tuple[Tensor, Tensor]]]:
        """Bidirectional stack -> per-position projected states plus a decoder bridge."""
        n = inputs.shape[0]
        if n == 0:
            raise ValueError("cannot encode an empty sentence")
        x = inputs
        fwd_final = bwd_final = None
        for layer in range(self.cfg.enc_layers):
            fwd_states, fwd_final, _ = run_lstm(x, self._cell(f"encoder.{layer}.fwd"))
            bwd_states, bwd_final, _ = run_lstm(x, self._cell(f"encoder.{layer}.bwd"), reverse=True)
            x = concat([concat([fwd_states[t], bwd_states[t]], axis=1) for t in range(n)], axis=0)
            if train and layer < self.cfg.enc_layers - 1:
                x = dropout(x, self.cfg.dropout, rng, train=True)
        projected = tanh(add(matmul(x, self.params["encoder.proj.w"]), self.params["encoder.proj.b"]))
        states = EncoderStates(states=projected, final=slice_axis(projected, 0, n - 1, n))
        summary = concat([fwd_final, bwd_final], axis=1)
        bridge = [
            (
                tanh(add(matmul(summary, self.params[f"bridge.{layer}.wh"]), self.params[f"bridge.{layer}.bh"])),
                tanh(add(matmul(summary, self.params[f"bridge.{layer}.wc"]), self.params[f"bridge.{layer}.bc"])),
            )
            for layer in range(self.cfg.dec_layers)
        ]
        return states, bridge

    # -- attention ----------------------------------------------------------

    def attend(self, decoder_state: Tensor, enc: EncoderStates) -> AttentionResult:
        return attend(decoder_state, enc)

    # -- decoder ------------------------------------------------------------

    def _decode_logits(
        self,
        prev_id: int,
        state: list[tuple[Tensor, Tensor]],
        enc: EncoderStates,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, list[tuple[Tensor, Tensor]], AttentionResult]:
        x = rows(self.params["decoder.embedding"], [prev_id])
        new_state = []
        for layer in range(self.cfg.dec_layers):
            if train and layer > 0:
                x = dropout(x, self.cfg.dropout, rng, train=True)
            h, c = lstm_step(x, state[layer][0], state[layer][1], self._cell(f"decoder.{layer}"))
            new_state.append((h, c))
            x = h
        attention = self.attend(x, enc)
        combined = tanh(
            add(matmul(concat([x, attention.context], axis=1), self.params["output.wr"]), self.params["output.br"])
        )
        logits = add(matmul(combined, self.params["output.ws"]), constant(self._pad_mask))
        return logits, new_state, attention

    def decode_step(
        self,
        prev_id: int,
        state: list[tuple[Tensor, Tensor]],
        enc: EncoderStates,
    ) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
        """Normalized next-word distribution (eval mode)."""
        logits, new_state, _ = self._decode_logits(prev_id, state, enc)
        return softmax(logits, axis=1), new_state

    # -- losses ---------------------------------------------------------------

    def question_ids(self, example: Example) -> list[int]:
        return [self.word_vocab.id(w) for w in example.question]

    def question_loss(
        self,
        example: Example,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, int]:
        """Teacher-forced summed NLL of the gold question (EOS included)."""
        if not example.question:
            raise ValueError("cannot score an example without a question")
        enc, state = self.encode(self.embed_source(example.sentence), train, rng)
        targets = self.question_ids(example) + [EOS_ID]
        prev = BOS_ID
        logit_rows = []
        for target in targets:
            logits, state, _ = self._decode_logits(prev, state, enc, train, rng)
            logit_rows.append(logits)
            prev = target
        loss = nll_loss(concat(logit_rows, axis=0), targets, pad_id=PAD_ID, average=False)
        return loss, len(targets)

    def sequence_nll(self, example: Example) -> tuple[float, int]:
        """(summed NLL, token count) in eval mode; the perplexity scorer hook."""
        loss, count = self.question_loss(example, train=False)
        return loss.item(), count


# ---------------------------------------------------------------------------
# generation


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - math.log(np.exp(shifted).sum())


def _strip_specials(token_ids: Sequence[int]) -> list[int]:
    return [t for t in token_ids if t not in (PAD_ID, BOS_ID, EOS_ID)]


def generate(
    sentence: Sequence[TaggedToken],
    model: QGModel,
    beam_width: int | None = None,
    max_len: int | None = None,
) -> list[str]:
    """Generate a question; width 1 is greedy argmax, wider runs beam search."""
    words, _ = generate_with_score(sentence, model, beam_width, max_len)
    return words


def generate_with_score(
    sentence: Sequence[TaggedToken],
    model: QGModel,
    beam_width: int | None = None,
    max_len: int | None = None,
) -> tuple[list[str], float | None]:
    """Like ``generate`` but also returns the mean log probability per token
    (None for greedy decoding, which does not track scores)."""
    k = beam_width if beam_width is not None else model.cfg.beam
    if k < 1:
        raise ValueError(f"beam width must be at least 1, got {k}")
    cap = max_len if max_len is not None else model.cfg.max_q_len
    if k == 1:
        ids = greedy_decode(sentence, model, cap)
        score = None
    else:
        hyp = beam_decode(sentence, model, k, cap)
        ids = hyp.token_ids
        score = hyp.score()
    return [model.word_vocab.token(t) for t in _strip_specials(ids)], score


def greedy_decode(sentence: Sequence[TaggedToken], model: QGModel, max_len: int) -> list[int]:
    enc, state = model.encode(model.embed_source(sentence))
    ids: list[int] = []
    prev = BOS_ID
    for _ in range(max_len):
        logits, state, _ = model._decode_logits(prev, state, enc)
        choice = int(np.argmax(logits.data))
        if choice == EOS_ID:
            break
        ids.append(choice)
        prev = choice
    return ids


def beam_decode(sentence: Sequence[TaggedToken], model: QGModel, beam_width: int, max_len: int) -> Hypothesis:
    """Length-capped beam search; best finished hypothesis by mean log probability."""
    enc, state = model.encode(model.embed_source(sentence))
    live = [Hypothesis(token_ids=[], log_prob=0.0, state=state)]
    done: list[Hypothesis] = []
    for _ in range(max_len):
        candidates: list[tuple[float, int, Hypothesis, list]] = []
        for hyp in live:
            prev = hyp.token_ids[-1] if hyp.token_ids else BOS_ID
            logits, new_state, _ = model._decode_logits(prev, hyp.state, enc)
            log_probs = _log_softmax(logits.data.reshape(-1))
            top = np.argsort(-log_probs, kind="stable")[:beam_width]
            for token in top:
                candidates.append((hyp.log_prob + float(log_probs[token]), int(token), hyp, new_state))
        candidates.sort(key=lambda item: -item[0])  # stable: ties keep lowest token id first
        live = []
        for score, token, hyp, new_state in candidates[:beam_width]:
            extended = Hypothesis(
                token_ids=hyp.token_ids + [token],
                log_prob=score,
                state=new_state,
                finished=token == EOS_ID,
            )
            (done if extended.finished else live).append(extended)
        if not live:
            break
    pool = done if done else live
    return max(pool, key=lambda h: h.score())


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    train_ppl: float
    val_ppl: float


@dataclass
class TrainResult:
    best_epoch: int
    best_val_ppl: float
    history: list[EpochStats] = field(default_factory=list)


def train_qg(
    model: QGModel,
    train_examples: Sequence[Example],
    val_examples: Sequence[Example],
    rng: np.random.Generator,
    log_fn: Callable[[str], None] | None = None,
) -> TrainResult:
    """Teacher-forced NLL minimization with per-epoch validation perplexity.

    The learning rate is multiplied by ``lr_decay`` each epoch after
    ``lr_decay_start_epoch``; the parameters with the lowest validation
    perplexity are restored before returning.
    """
    from qapairgen.evalmetrics import perplexity

    cfg = model.cfg
    if not train_examples:
        raise ValueError("empty training corpus")
    if not val_examples:
        raise ValueError("empty validation corpus")
    optimizer = Adam(model.params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    result = TrainResult(best_epoch=0, best_val_ppl=math.inf)
    best_values = model.params.copy_values()
    for epoch in range(1, cfg.epochs + 1):
        if epoch > cfg.lr_decay_start_epoch:
            optimizer.lr *= cfg.lr_decay
        total_loss = 0.0
        total_tokens = 0
        for i in rng.permutation(len(train_examples)):
            example = train_examples[int(i)]
            model.params.zero_grads()
            loss, count = model.question_loss(example, train=True, rng=rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, example {int(i)}")
            (loss / count).backward()
            clip_global_norm(model.params, cfg.grad_clip)
            optimizer.step()
            total_loss += value
            total_tokens += count
        train_ppl = math.exp(total_loss / total_tokens)
        val_ppl = perplexity(model, val_examples)
        stats = EpochStats(epoch=epoch, lr=optimizer.lr, train_loss=total_loss / total_tokens,
                           train_ppl=train_ppl, val_ppl=val_ppl)
        result.history.append(stats)
        if log_fn is not None:
            log_fn(
                f"epoch {epoch:3d} lr {optimizer.lr:.6f} "
                f"train_ppl {train_ppl:.4f} val_ppl {val_ppl:.4f}"
            )
        if val_ppl < result.best_val_ppl:
            result.best_val_ppl = val_ppl
            result.best_epoch = epoch
            best_values = model.params.copy_values()
        if cfg.stop_perplexity and train_ppl < cfg.stop_perplexity:
            break
    model.params.load_values(best_values)
    return result


# ---------------------------------------------------------------------------
# gradient-check entry for the composed encoder/decoder loss


def gradcheck_entries():
    from qapairgen.corpus import AnswerSpan, build_vocab, encode_bio

    words = ["alpha", "beta", "gamma"]
    span = AnswerSpan(2, 2)
    bios = encode_bio(3, span)
    sentence = [TaggedToken(w, "NN", "O", "dep", b) for w, b in zip(words, bios)]
    example = Example(sentence=sentence, question=["beta", "alpha"], answer=span)
    vocabs = {
        "word": build_vocab([words, example.question]),
        "pos": build_vocab([["NN"]]),
        "ner": build_vocab([["O"]]),
        "dep": build_vocab([["dep"]]),
    }
    cfg = ExperimentConfig(variant="QG+F+GAE", hidden_size=3, word_dim=2, enc_layers=1, dec_layers=1, dropout=0.0)
    model = QGModel(cfg, vocabs, rng=np.random.default_rng(0))
    names = model.params.names()
    shapes = [model.params[name].shape for name in names]

    def fn(*tensors):
        for name, tensor in zip(names, tensors):
            tensor.requires_grad = True
            model.params._tensors[name] = tensor
        loss, count = model.question_loss(example)
        return loss / count

    return [("qg_encoder_decoder_loss", fn, shapes)]
