"""Command-line entry points: prepare, train, select-answer, generate,
evaluate, gradcheck. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric
failure. QAPAIRGEN_LOG controls verbosity."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from qapairgen import answersel, diffkernel, qgmodel
from qapairgen.answersel import (
    NEExample,
    NESelector,
    NoCandidatesError,
    PointerExample,
    PointerNetwork,
    boundary_pointer_decode,
    candidate_entities,
    ne_select,
    sequence_pointer_decode,
    train_ne_selector,
    train_pointer,
)
from qapairgen.checkpoint import Checkpoint, CheckpointError
from qapairgen.config import ConfigError, ExperimentConfig
from qapairgen.corpus import (
    AnswerSpan,
    DataError,
    Example,
    TaggedToken,
    Vocabulary,
    build_vocab,
    encode_bio,
    format_span,
    locate_answer,
    parse_squad,
    parse_tagged_line,
    read_examples,
    tokenize,
    write_examples,
)
from qapairgen.evalmetrics import compute_report, human_eval_aggregate, read_human_eval_table
from qapairgen.qgmodel import QGModel, TrainingDiverged, generate_with_score, train_qg

log = logging.getLogger("qapairgen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

VOCAB_CHANNELS = ("word", "pos", "ner", "dep")
SPLIT_RATIOS = {"train": 0.7, "val": 0.15, "test": 0.15}


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# prepare


def _seeded_split(count: int, seed: int) -> dict[str, list[int]]:
    order = [int(i) for i in np.random.default_rng(seed).permutation(count)]
    n_train = round(SPLIT_RATIOS["train"] * count)
    n_val = round(SPLIT_RATIOS["val"] * count)
    return {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }


def _read_annotation_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip() and not line.startswith("#")]


def cmd_prepare(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        squad_text = Path(args.squad).read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read SQuAD input {args.squad}: {err}") from err
    parse = parse_squad(squad_text)
    records = parse.records
    log.info("parsed %d records (%d skipped)", len(records), parse.skip_count)

    sentences_path = out_dir / "sentences.txt"
    with open(sentences_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.sentence.replace("\n", " ") + "\n")
    if args.sentences_only:
        print(f"wrote {len(records)} sentences to {sentences_path}")
        return EXIT_OK
    if args.annotations is None:
        raise UsageError("--annotations is required (or pass --sentences-only)")

    try:
        annotation_lines = _read_annotation_lines(args.annotations)
    except OSError as err:
        raise DataError(f"cannot read annotations {args.annotations}: {err}") from err
    if len(annotation_lines) != len(records):
        raise DataError(
            f"annotation count {len(annotation_lines)} does not match record count {len(records)}"
        )

    examples: list[Example] = []
    dropped: Counter = Counter()
    line_errors: list[str] = []
    for i, (record, line) in enumerate(zip(records, annotation_lines), start=1):
        try:
            tagged = parse_tagged_line(line, i)
        except DataError as err:
            line_errors.append(str(err))
            continue
        sentence_tokens = tokenize(record.sentence)
        if [t.word for t in tagged] != sentence_tokens:
            line_errors.append(f"line {i}: annotation tokens do not match the tokenized sentence")
            continue
        if len(sentence_tokens) > args.max_src_len:
            dropped["sentence_too_long"] += 1
            continue
        question_tokens = tokenize(record.question)
        if not question_tokens:
            dropped["empty_question"] += 1
            continue
        if len(question_tokens) > args.max_q_len:
            dropped["question_too_long"] += 1
            continue
        span = locate_answer(sentence_tokens, tokenize(record.answer_text))
        if span is None:
            dropped["answer_not_found"] += 1
            continue
        bio = encode_bio(len(tagged), span)
        sentence = [TaggedToken(t.word, t.pos, t.ner, t.dep, b) for t, b in zip(tagged, bio)]
        examples.append(Example(sentence=sentence, question=question_tokens, answer=span, source_id=f"record-{i}"))

    if line_errors:
        errors_path = out_dir / "prepare_errors.txt"
        errors_path.write_text("\n".join(line_errors) + "\n", encoding="utf-8")
        if len(line_errors) > 0.01 * len(records):
            raise DataError(
                f"{len(line_errors)} of {len(records)} annotation lines failed "
                f"(> 1%); details in {errors_path}"
            )

    if not examples:
        raise DataError("no usable examples after alignment and filtering")

    splits = _seeded_split(len(examples), args.seed)
    for name, indices in splits.items():
        write_examples(out_dir / f"{name}.txt", [examples[i] for i in indices])

    train_examples = [examples[i] for i in splits["train"]]
    vocabs = {
        "word": build_vocab(
            [[t.word for t in ex.sentence] for ex in train_examples]
            + [ex.question for ex in train_examples],
            max_size=args.vocab_size,
        ),
        "pos": build_vocab([[t.pos for t in ex.sentence] for ex in train_examples]),
        "ner": build_vocab([[t.ner for t in ex.sentence] for ex in train_examples]),
        "dep": build_vocab([[t.dep for t in ex.sentence] for ex in train_examples]),
    }
    for channel, vocab in vocabs.items():
        vocab.save(out_dir / f"vocab.{channel}.txt")

    report = {
        "records": len(records),
        "examples": len(examples),
        "squad_skips": dict(sorted(parse.skipped.items())),
        "dropped": dict(sorted(dropped.items())),
        "line_errors": len(line_errors),
        "splits": {name: len(indices) for name, indices in splits.items()},
        "seed": args.seed,
    }
    (out_dir / "skip_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# training


def _load_vocabs(data_dir: Path) -> dict[str, Vocabulary]:
    vocabs = {}
    for channel in VOCAB_CHANNELS:
        path = data_dir / f"vocab.{channel}.txt"
        if not path.exists():
            raise DataError(f"missing vocabulary file {path}")
        vocabs[channel] = Vocabulary.load(path)
    return vocabs


def _qg_checkpoint(cfg: ExperimentConfig, vocabs, params) -> Checkpoint:
    return Checkpoint.create(cfg, vocabs, params)


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.desk()
    if args.variant:
        cfg.variant = args.variant
    if args.model:
        cfg.model = args.model
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
    cfg.validate()

    data_dir = Path(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocabs = _load_vocabs(data_dir)
    train_examples = read_examples(data_dir / "train.txt")
    val_examples = read_examples(data_dir / "val.txt")
    if not train_examples:
        raise DataError(f"empty training corpus in {data_dir}")
    rng = np.random.default_rng(cfg.seed)

    log_path = out_dir / "train.log"
    checkpoint_path = out_dir / "checkpoint.qapg"
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def emit(line: str) -> None:
            log_fh.write(line + "\n")
            log.info("%s", line)

        if cfg.model == "qg":
            if cfg.answer_source is not None and not any(ex.answer for ex in train_examples):
                raise DataError(
                    f"variant {cfg.variant} needs an answer column, but no training example has one"
                )
            pretrained = None
            if cfg.embeddings_path:
                pretrained = diffkernel.load_pretrained_embeddings(
                    cfg.embeddings_path, vocabs["word"], cfg.word_dim, rng
                )
            model = QGModel(cfg, vocabs, rng=rng, pretrained_words=pretrained)
            result = train_qg(model, train_examples, val_examples, rng=rng, log_fn=emit)
            emit(f"best epoch {result.best_epoch} val_ppl {result.best_val_ppl:.4f}")
            checkpoint = _qg_checkpoint(cfg, vocabs, model.params)
            history = [vars(s) for s in result.history]
        elif cfg.model in ("pointer_sequence", "pointer_boundary"):
            mode = "sequence" if cfg.model == "pointer_sequence" else "boundary"
            pointer_examples = []
            spanless = 0
            for ex in train_examples:
                if ex.answer is None:
                    spanless += 1
                    continue
                pointer_examples.append(
                    PointerExample(word_ids=vocabs["word"].ids(ex.words), span=ex.answer)
                )
            if not pointer_examples:
                raise DataError("pointer training requires gold answer spans")
            if spanless:
                emit(f"skipped {spanless} examples without gold spans")
            model = PointerNetwork(
                vocab_size=len(vocabs["word"]),
                word_dim=cfg.word_dim,
                hidden=cfg.pointer_hidden,
                rng=rng,
            )
            train_pointer(
                model, pointer_examples, mode,
                epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
                grad_clip=cfg.grad_clip, rng=rng,
                progress=lambda epoch, loss: emit(f"epoch {epoch:3d} loss {loss:.4f}"),
            )
            checkpoint = Checkpoint.create(cfg, {"word": vocabs["word"]}, model.params)
            history = []
        else:  # ne_selector
            ne_examples = []
            unmatched = 0
            for ex in train_examples:
                candidates = candidate_entities(ex.sentence)
                gold = next((i for i, c in enumerate(candidates) if c == ex.answer), None)
                if gold is None:
                    unmatched += 1
                    continue
                ne_examples.append(
                    NEExample(word_ids=vocabs["word"].ids(ex.words), candidates=candidates, gold_index=gold)
                )
            if not ne_examples:
                raise DataError("no training example has a gold answer matching a candidate entity")
            if unmatched:
                emit(f"skipped {unmatched} examples whose answer is not a candidate entity")
            model = NESelector(
                vocab_size=len(vocabs["word"]),
                word_dim=cfg.word_dim,
                hidden=cfg.ne_hidden,
                scorer_hidden=cfg.ne_scorer_hidden,
                rng=rng,
            )
            train_ne_selector(
                model, ne_examples,
                epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
                grad_clip=cfg.grad_clip, rng=rng,
                progress=lambda epoch, loss: emit(f"epoch {epoch:3d} loss {loss:.4f}"),
            )
            checkpoint = Checkpoint.create(cfg, {"word": vocabs["word"]}, model.params)
            history = []

    checkpoint.save(checkpoint_path)
    (out_dir / "history.json").write_text(json.dumps(history, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"checkpoint written to {checkpoint_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# model reconstruction from checkpoints


def load_model(checkpoint: Checkpoint):
    """Rebuild the trained model named by the checkpoint's config."""
    cfg = ExperimentConfig.from_ini(checkpoint.config_text)
    rng = np.random.default_rng(cfg.seed)
    if cfg.model == "qg":
        model = QGModel(cfg, checkpoint.vocabs, rng=rng)
    elif cfg.model in ("pointer_sequence", "pointer_boundary"):
        model = PointerNetwork(
            vocab_size=len(checkpoint.vocabs["word"]),
            word_dim=cfg.word_dim,
            hidden=cfg.pointer_hidden,
            rng=rng,
        )
    else:
        model = NESelector(
            vocab_size=len(checkpoint.vocabs["word"]),
            word_dim=cfg.word_dim,
            hidden=cfg.ne_hidden,
            scorer_hidden=cfg.ne_scorer_hidden,
            rng=rng,
        )
    checkpoint.load_into(model.params)
    return cfg, model


# ---------------------------------------------------------------------------
# select-answer


def cmd_select_answer(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    cfg, model = load_model(checkpoint)
    if cfg.model == "qg":
        raise UsageError("select-answer needs a pointer or NE-selector checkpoint, got a QG model")
    fallback = None
    if args.fallback_checkpoint:
        fb_cfg, fb_model = load_model(Checkpoint.load(args.fallback_checkpoint))
        if fb_cfg.model != "pointer_boundary":
            raise UsageError("--fallback-checkpoint must hold a boundary pointer model")
        fallback = fb_model

    examples = read_examples(args.input)
    vocab = checkpoint.vocabs["word"]
    counts: Counter = Counter()
    predicted: list[Example] = []
    for i, example in enumerate(examples, start=1):
        span: AnswerSpan | None = None
        if cfg.model in ("pointer_sequence", "pointer_boundary"):
            enc = model.encode(PointerExample(word_ids=vocab.ids(example.words)))
            if cfg.model == "pointer_boundary":
                span = boundary_pointer_decode(enc, model)
            else:
                indices = sequence_pointer_decode(enc, model)
                if indices:
                    # envelope of the pointed positions; BIO needs one span
                    span = AnswerSpan(min(indices), max(indices))
                else:
                    counts["empty_sequence_output"] += 1
        else:  # ne_selector
            candidates = candidate_entities(example.sentence)
            try:
                probs = ne_select(vocab.ids(example.words), candidates, model)
                span = candidates[int(np.argmax(probs))]
            except NoCandidatesError:
                if fallback is not None:
                    enc = fallback.encode(PointerExample(word_ids=vocab.ids(example.words)))
                    span = boundary_pointer_decode(enc, fallback)
                    counts["pointer_fallback"] += 1
                else:
                    counts["no_candidates"] += 1
                    log.warning("line %d: no candidate entities and no fallback model", i)
        bio = encode_bio(len(example.sentence), span)
        sentence = [TaggedToken(t.word, t.pos, t.ner, t.dep, b) for t, b in zip(example.sentence, bio)]
        predicted.append(Example(sentence=sentence, question=example.question, answer=span))
        if span is not None:
            counts["predicted"] += 1

    write_examples(args.out, predicted)
    print(json.dumps({"sentences": len(examples), **{k: counts[k] for k in sorted(counts)}}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    cfg, model = load_model(checkpoint)
    if cfg.model != "qg":
        raise UsageError(f"generate needs a QG checkpoint, got model kind {cfg.model!r}")
    beam = args.beam if args.beam is not None else cfg.beam
    examples = read_examples(args.input)
    out_path = Path(args.out)
    meta_path = Path(args.meta) if args.meta else out_path.with_suffix(out_path.suffix + ".meta.jsonl")
    with open(out_path, "w", encoding="utf-8") as out_fh, open(meta_path, "w", encoding="utf-8") as meta_fh:
        for i, example in enumerate(examples, start=1):
            words, score = generate_with_score(example.sentence, model, beam_width=beam)
            out_fh.write(" ".join(words) + "\n")
            record = {
                "line": i,
                "span": format_span(example.answer),
                "beam": beam,
                "score": None if score is None else round(score, 6),
            }
            meta_fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"wrote {len(examples)} questions to {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _read_token_lines(path) -> list[list[str]]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.split() for line in fh.read().splitlines()]
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err


def cmd_evaluate(args) -> int:
    if args.human:
        result = human_eval_aggregate(read_human_eval_table(args.human))
        text = json.dumps({k: round(v, 2) for k, v in result.items()}, indent=2, sort_keys=True)
        print(text)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        return EXIT_OK
    if not args.candidates or not args.references:
        raise UsageError("evaluate needs --candidates and --references (or --human)")
    candidates = _read_token_lines(args.candidates)
    references = _read_token_lines(args.references)
    if len(candidates) != len(references):
        raise DataError(
            f"candidate lines ({len(candidates)}) != reference lines ({len(references)})"
        )
    report = compute_report(candidates, [[r] for r in references], smooth=args.smooth, stem=args.stem)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def all_gradcheck_entries():
    return diffkernel.standard_checks() + answersel.gradcheck_entries() + qgmodel.gradcheck_entries()


def cmd_gradcheck(args) -> int:
    failures = 0
    for name, fn, shapes in all_gradcheck_entries():
        worst = max(diffkernel.grad_check(fn, shapes, seed=seed) for seed in range(args.seeds))
        status = "PASS" if worst < args.tolerance else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"{name:28s} {worst:12.3e}  {status}")
    if failures:
        raise NumericError(f"{failures} gradient checks failed at tolerance {args.tolerance}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qapairgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="turn SQuAD JSON + annotations into a tagged corpus")
    p.add_argument("--squad", required=True)
    p.add_argument("--annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--vocab-size", type=int, default=45000)
    p.add_argument("--max-src-len", type=int, default=100)
    p.add_argument("--max-q-len", type=int, default=30)
    p.add_argument("--sentences-only", action="store_true",
                   help="only extract raw sentences (annotator input) and stop")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the model kind named in the config")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="directory produced by prepare")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant")
    p.add_argument("--model")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-answer", help="predict pivotal answer spans")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fallback-checkpoint")
    p.set_defaults(func=cmd_select_answer)

    p = sub.add_parser("generate", help="generate questions for tagged sentences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=None, help="beam width (default from config, 3)")
    p.add_argument("--meta", help="sidecar JSONL path (default <out>.meta.jsonl)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score candidates against references")
    p.add_argument("--candidates")
    p.add_argument("--references")
    p.add_argument("--human", help="rater,question,criterion,{0|1} table instead")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--stem", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check every registered op")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("QAPAIRGEN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NumericError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
