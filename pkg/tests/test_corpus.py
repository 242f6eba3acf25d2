"""Corpus operations: tokenization, SQuAD ingestion, BIO encoding, the tagged
format round trip, and vocabulary construction."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qapairgen import corpus
from qapairgen.corpus import (
    AnswerSpan,
    DataError,
    Example,
    TaggedFormatError,
    TaggedToken,
    Vocabulary,
    build_vocab,
    decode_bio,
    encode_bio,
    format_example_line,
    format_tagged_line,
    locate_answer,
    parse_example_line,
    parse_squad,
    parse_tagged_line,
    tokenize,
)

# Worked example sentence used throughout the suite; spans measured 1-based.
PIVOT_SENTENCE = (
    "other past residents include composer journalist and newspaper editor "
    "william henry wills , ron goodwin , and journalist angela rippon and "
    "comedian dawn french"
)


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Ron Goodwin, and Dawn French") == ["ron", "goodwin", ",", "and", "dawn", "french"]

    def test_empty(self):
        assert tokenize("") == []

    def test_pipe_escape(self):
        assert tokenize("A|B") == ["a", "<pipe>", "b"]

    def test_lowercase_and_whitespace_collapse(self):
        assert tokenize("  The   CAT  ") == ["the", "cat"]

    def test_numbers_keep_internal_separators(self):
        assert tokenize("90,000 hotel rooms in 2014.") == ["90,000", "hotel", "rooms", "in", "2014", "."]

    def test_clitics(self):
        assert tokenize("mcdonald 's owner") == ["mcdonald", "'s", "owner"]
        assert tokenize("McDonald's owner") == ["mcdonald", "'s", "owner"]


def _squad_doc(paragraphs):
    return json.dumps({"data": [{"title": "t", "paragraphs": paragraphs}]})


class TestParseSquad:
    def test_minimal_document(self):
        doc = _squad_doc(
            [
                {
                    "context": "Paris is the capital of France.",
                    "qas": [
                        {
                            "question": "What is the capital of France?",
                            "answers": [{"text": "Paris", "answer_start": 0}],
                        }
                    ],
                }
            ]
        )
        parse = parse_squad(doc)
        assert len(parse.records) == 1
        assert parse.skip_count == 0
        rec = parse.records[0]
        assert rec.sentence == "Paris is the capital of France."
        assert rec.answer_text == "Paris"
        assert rec.answer_offset == 0

    def test_answer_start_past_context_is_skipped(self):
        doc = _squad_doc(
            [
                {
                    "context": "Short context.",
                    "qas": [
                        {"question": "q?", "answers": [{"text": "x", "answer_start": 500}]}
                    ],
                }
            ]
        )
        parse = parse_squad(doc)
        assert parse.records == []
        assert parse.skip_count == 1

    def test_two_questions_share_sentence(self):
        # hand-built fixture: both answers live in the second sentence
        context = "The town is small. Composer Ron Goodwin lived here in 1950."
        offset = context.index("Ron")
        doc = _squad_doc(
            [
                {
                    "context": context,
                    "qas": [
                        {"question": "who?", "answers": [{"text": "Ron Goodwin", "answer_start": offset}]},
                        {"question": "when?", "answers": [{"text": "1950", "answer_start": context.index("1950")}]},
                    ],
                }
            ]
        )
        parse = parse_squad(doc)
        assert len(parse.records) == 2
        assert parse.records[0].sentence == parse.records[1].sentence
        assert parse.records[0].sentence.startswith("Composer")

    def test_malformed_json_reports_location(self):
        with pytest.raises(DataError, match=r"line 1"):
            parse_squad("{not json")

    def test_answer_offset_maps_into_sentence(self):
        context = "First part here. Ron Goodwin was a composer."
        offset = context.index("Goodwin")
        doc = _squad_doc(
            [{"context": context, "qas": [{"question": "q", "answers": [{"text": "Goodwin", "answer_start": offset}]}]}]
        )
        rec = parse_squad(doc).records[0]
        assert rec.sentence[rec.answer_offset : rec.answer_offset + len("Goodwin")] == "Goodwin"


class TestLocateAnswer:
    def test_pivot_sentence_boundary_span(self):
        sentence = tokenize(PIVOT_SENTENCE)
        span = locate_answer(sentence, ["william", "henry", "wills"])
        assert span == AnswerSpan(10, 12)

    def test_whole_sentence(self):
        s = ["a", "b", "c"]
        assert locate_answer(s, s) == AnswerSpan(1, 3)

    def test_absent(self):
        assert locate_answer(["a", "b"], ["z"]) is None

    def test_first_match_wins(self):
        assert locate_answer(["x", "a", "b", "a", "b"], ["a", "b"]) == AnswerSpan(2, 3)

    @given(
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=12),
        st.data(),
    )
    def test_match_slice_equals_answer(self, sentence, data):
        i = data.draw(st.integers(1, len(sentence)))
        j = data.draw(st.integers(i, len(sentence)))
        answer = sentence[i - 1 : j]
        span = locate_answer(sentence, answer)
        assert span is not None
        assert sentence[span.start - 1 : span.end] == answer


class TestEncodeBio:
    def test_interior_span(self):
        assert encode_bio(5, AnswerSpan(2, 3)) == ["O", "B", "I", "O", "O"]

    def test_no_span(self):
        assert encode_bio(3, None) == ["O", "O", "O"]

    def test_length_one(self):
        assert encode_bio(1, AnswerSpan(1, 1)) == ["B"]

    def test_invalid_span_rejected(self):
        with pytest.raises(ValueError):
            encode_bio(3, AnswerSpan(2, 4))

    def test_round_trip_all_lengths(self):
        for length in range(1, 51):
            assert decode_bio(encode_bio(length, None)) is None
            for start in range(1, length + 1):
                for end in range(start, length + 1):
                    span = AnswerSpan(start, end)
                    assert decode_bio(encode_bio(length, span)) == span


_tag = st.text(alphabet="ABCDEFGHJKLMNPQRSTUVWXYZ$", min_size=1, max_size=4)
_word = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Nd"), max_codepoint=0x24F),
    min_size=1,
    max_size=8,
)


class TestTaggedFormat:
    def test_single_token(self):
        (token,) = parse_tagged_line("william|NNP|PERSON|compound|B")
        assert token == TaggedToken("william", "NNP", "PERSON", "compound", "B")

    def test_wrong_arity_names_line_and_field(self):
        with pytest.raises(TaggedFormatError, match=r"line 7, field 1"):
            parse_tagged_line("word|NN|O|nsubj", lineno=7)

    def test_arity_error_in_later_field(self):
        with pytest.raises(TaggedFormatError, match=r"field 2"):
            parse_tagged_line("a|X|O|dep|O b|X|O|dep")

    def test_stray_i_rejected(self):
        with pytest.raises(TaggedFormatError, match="I tag"):
            parse_tagged_line("a|X|O|dep|I")

    @settings(max_examples=100)
    @given(st.data())
    def test_round_trip(self, data):
        words = data.draw(st.lists(_word, min_size=1, max_size=8))
        tokens = []
        prev = "O"
        for w in words:
            bio = data.draw(st.sampled_from("BIO"))
            if bio == "I" and prev == "O":
                bio = "B"  # keep the I-continuity invariant
            prev = bio
            tokens.append(TaggedToken(w, data.draw(_tag), data.draw(_tag), data.draw(_tag), bio))
        assert parse_tagged_line(format_tagged_line(tokens)) == tokens


class TestExampleLines:
    def _example(self):
        sentence = parse_tagged_line("ron|NNP|PERSON|nsubj|B goodwin|NNP|PERSON|flat|I was|VBD|O|ROOT|O here|RB|O|advmod|O")
        return Example(sentence=sentence, question=["who", "was", "here", "?"], answer=AnswerSpan(1, 2))

    def test_round_trip(self):
        ex = self._example()
        line = format_example_line(ex)
        back = parse_example_line(line)
        assert back.sentence == ex.sentence
        assert back.question == ex.question
        assert back.answer == ex.answer

    def test_no_answer_column(self):
        ex = self._example()
        ex.answer = None
        ex.sentence = [TaggedToken(t.word, t.pos, t.ner, t.dep, "O") for t in ex.sentence]
        back = parse_example_line(format_example_line(ex))
        assert back.answer is None

    def test_span_bio_consistency_enforced(self):
        line = "a|X|O|dep|O b|X|O|dep|O\tq\t1-1"
        with pytest.raises(DataError, match="BIO"):
            parse_example_line(line)

    def test_read_skips_comments(self, tmp_path):
        path = tmp_path / "corpus.txt"
        ex = self._example()
        path.write_text("# annotator: test 1.0\n" + format_example_line(ex) + "\n", encoding="utf-8")
        assert len(corpus.read_examples(path)) == 1


class TestVocabulary:
    def test_frequency_order(self):
        v = build_vocab([["a", "a", "b"]], max_size=10)
        assert [v.id(t) for t in ("<pad>", "<unk>", "<s>", "</s>", "a", "b")] == [0, 1, 2, 3, 4, 5]

    def test_tie_break_lexicographic(self):
        v = build_vocab([["b", "a"]], max_size=10)
        assert v.id("a") == 4
        assert v.id("b") == 5

    def test_cap_keeps_most_frequent(self):
        # oracle: sort tokens by (-count, token), keep max_size - 4 survivors
        stream = ["a", "a", "b", "b", "c"]
        counts = {"a": 2, "b": 2, "c": 1}
        survivors = sorted(counts, key=lambda t: (-counts[t], t))[: 5 - 4]
        v = build_vocab([stream], max_size=5)
        assert len(v) == 5
        assert survivors == ["a"]
        assert "a" in v and "b" not in v and "c" not in v

    def test_unknown_maps_to_unk(self):
        v = build_vocab([["x"]], max_size=10)
        assert v.id("never-seen") == corpus.UNK_ID

    def test_token_id_round_trip(self):
        v = build_vocab([["x", "y", "z", "y"]])
        for t in ("x", "y", "z", "<pad>", "</s>"):
            assert v.token(v.id(t)) == t

    def test_save_load(self, tmp_path):
        v = build_vocab([["beta", "alpha", "beta"]])
        path = tmp_path / "vocab.txt"
        v.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[:4] == ["<pad>", "<unk>", "<s>", "</s>"]
        loaded = Vocabulary.load(path)
        assert loaded.token_of == v.token_of

    def test_max_size_must_cover_specials(self):
        with pytest.raises(ValueError):
            build_vocab([["a"]], max_size=3)
