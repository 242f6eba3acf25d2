"""Toolkit backends. A toolkit labels one sentence with per-token POS, NER,
and dependency tags; labels are passed through verbatim downstream."""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass

from qgannotator.tokenizer import Span, escape_pipes, token_spans


class ToolkitUnavailable(Exception):
    """The requested toolkit cannot run; the message carries an install hint."""


@dataclass(frozen=True)
class LabeledToken:
    text: str
    start: int
    end: int
    pos: str
    ner: str
    dep: str


# ---------------------------------------------------------------------------
# builtin rule-based toolkit (no models bundled; deterministic)

_DETERMINERS = {"the", "a", "an", "this", "that", "these", "those"}
_PREPOSITIONS = {"in", "on", "at", "of", "to", "from", "with", "by", "for", "about", "near", "during", "after", "before"}
_PRONOUNS = {"he", "she", "it", "they", "we", "i", "you", "him", "her", "them", "us", "his", "its", "their", "our"}
_CONJUNCTIONS = {"and", "or", "but", "nor"}
_BE_HAVE = {"is": "VBZ", "are": "VBP", "was": "VBD", "were": "VBD", "be": "VB",
            "been": "VBN", "has": "VBZ", "have": "VBP", "had": "VBD", "do": "VBP",
            "does": "VBZ", "did": "VBD", "will": "MD", "would": "MD", "can": "MD",
            "could": "MD", "may": "MD", "might": "MD", "should": "MD", "must": "MD"}
_COMMON_VERBS = {"lives", "live", "lived", "works", "work", "worked", "writes", "wrote",
                 "teaches", "taught", "opened", "opens", "founded", "visited", "met",
                 "built", "painted", "conducted", "moved", "plays", "played", "says", "said"}
_FIRST_NAMES = {"william", "henry", "ron", "angela", "dawn", "grace", "alice", "bob",
                "carol", "david", "erin", "frank", "irene", "jack", "karen", "leo",
                "mona", "nina", "oscar", "paula", "john", "mary", "james", "peter", "anna"}
_PLACES = {"paris", "london", "berlin", "madrid", "rome", "vienna", "oslo", "dublin",
           "lisbon", "prague", "boston", "plymouth", "york", "france", "england"}
_MONTHS = {"january", "february", "march", "april", "may", "june", "july", "august",
           "september", "october", "november", "december", "monday", "tuesday",
           "wednesday", "thursday", "friday", "saturday", "sunday"}

_VERB_TAGS = ("VB", "VBZ", "VBP", "VBD", "VBN", "VBG", "MD")


def _builtin_pos(token: Span, raw: str) -> str:
    text = token.text
    if text == PIPE_TOKEN:
        return "SYM"
    if not text[0].isalnum() and len(text) <= 2 and not text.startswith("'"):
        return text if text in {".", ",", ":", ";"} else ("." if text in {"!", "?"} else "SYM")
    if text[0].isdigit():
        return "CD"
    if text in _DETERMINERS:
        return "DT"
    if text in _PREPOSITIONS:
        return "IN"
    if text in _PRONOUNS:
        return "PRP"
    if text in _CONJUNCTIONS:
        return "CC"
    if text in _BE_HAVE:
        return _BE_HAVE[text]
    if text in _COMMON_VERBS:
        return "VBZ" if text.endswith("s") else "VBD"
    if text.startswith("'"):
        return "POS"
    if raw[token.start].isupper():
        return "NNP"
    if text.endswith("ly"):
        return "RB"
    if text.endswith("ing"):
        return "VBG"
    if text.endswith("ed"):
        return "VBD"
    if text.endswith("s") and not text.endswith("ss"):
        return "NNS"
    return "NN"


def _builtin_ner(tokens: list[Span], pos: list[str]) -> list[str]:
    tags = ["O"] * len(tokens)
    i = 0
    while i < len(tokens):
        text = tokens[i].text
        if pos[i] == "CD" and len(text) == 4 and text.isdigit():
            tags[i] = "DATE"
        elif text in _MONTHS:
            tags[i] = "DATE"
        elif pos[i] == "NNP":
            # label the whole proper-noun run with one type
            j = i
            while j < len(tokens) and pos[j] == "NNP":
                j += 1
            run = [t.text for t in tokens[i:j]]
            if any(w in _FIRST_NAMES for w in run):
                kind = "PERSON"
            elif any(w in _PLACES for w in run):
                kind = "LOCATION"
            else:
                kind = "MISC"
            for k in range(i, j):
                tags[k] = kind
            i = j
            continue
        i += 1
    return tags


def _builtin_dep(tokens: list[Span], pos: list[str]) -> list[str]:
    root = next((i for i, p in enumerate(pos) if p in _VERB_TAGS), 0)
    labels = []
    for i, p in enumerate(pos):
        if i == root:
            labels.append("ROOT")
        elif p in {".", ",", ":", ";", "SYM"}:
            labels.append("punct")
        elif p == "DT":
            labels.append("det")
        elif p == "IN":
            labels.append("case")
        elif p == "CC":
            labels.append("cc")
        elif p == "CD":
            labels.append("nummod")
        elif p == "RB":
            labels.append("advmod")
        elif p == "JJ":
            labels.append("amod")
        elif p in {"NNP", "NN", "NNS", "PRP"}:
            labels.append("nsubj" if i < root else "obl")
        elif p in _VERB_TAGS:
            labels.append("dep")
        else:
            labels.append("dep")
    return labels


PIPE_TOKEN = "<pipe>"


class BuiltinToolkit:
    """Deterministic rule-based tagger: closed-class lookup plus suffix and
    capitalization heuristics. No trained models are bundled."""

    name = "builtin"
    version = "1.0"

    def annotate_sentence(self, text: str) -> list[LabeledToken]:
        raw = escape_pipes(text)
        tokens = token_spans(raw)
        pos = [_builtin_pos(t, raw) for t in tokens]
        ner = _builtin_ner(tokens, pos)
        dep = _builtin_dep(tokens, pos)
        return [
            LabeledToken(t.text, t.start, t.end, p, n, d)
            for t, p, n, d in zip(tokens, pos, ner, dep)
        ]


# ---------------------------------------------------------------------------
# Stanford CoreNLP server adapter

_CORENLP_HINT = (
    "start a Stanford CoreNLP server (https://stanfordnlp.github.io/CoreNLP/"
    "corenlp-server.html) and pass --url or set CORENLP_URL"
)


class CoreNLPServerToolkit:
    """Adapter for a running CoreNLP HTTP server (tokenize,pos,ner,depparse)."""

    name = "corenlp"

    def __init__(self, url: str | None = None, timeout: float = 30.0) -> None:
        self.url = url or os.environ.get("CORENLP_URL")
        self.timeout = timeout
        self.version = "server"
        if not self.url:
            raise ToolkitUnavailable(f"no CoreNLP server configured; {_CORENLP_HINT}")

    def annotate_sentence(self, text: str) -> list[LabeledToken]:
        properties = json.dumps(
            {"annotators": "tokenize,ssplit,pos,ner,depparse", "outputFormat": "json",
             "ssplit.isOneSentence": "true"}
        )
        request = urllib.request.Request(
            f"{self.url}/?properties={urllib.parse.quote(properties)}",
            data=escape_pipes(text).encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as err:
            raise ToolkitUnavailable(f"CoreNLP server at {self.url} not reachable ({err}); {_CORENLP_HINT}") from err
        sentences = payload.get("sentences", [])
        if not sentences:
            return []
        sentence = sentences[0]
        dep_of = {}
        for edge in sentence.get("basicDependencies", []):
            dep_of[edge["dependent"] - 1] = edge["dep"]
        out = []
        for i, token in enumerate(sentence["tokens"]):
            out.append(
                LabeledToken(
                    text=token["word"].lower(),
                    start=token["characterOffsetBegin"],
                    end=token["characterOffsetEnd"],
                    pos=token["pos"],
                    ner=token.get("ner", "O"),
                    dep=dep_of.get(i, "dep"),
                )
            )
        return out


TOOLKITS = {
    "builtin": BuiltinToolkit,
    "corenlp": CoreNLPServerToolkit,
}


def make_toolkit(name: str, url: str | None = None):
    if name not in TOOLKITS:
        raise ToolkitUnavailable(f"unknown toolkit {name!r}; available: {sorted(TOOLKITS)}")
    if name == "corenlp":
        return CoreNLPServerToolkit(url=url)
    return TOOLKITS[name]()
