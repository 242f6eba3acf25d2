"""Annotation adapter: tags raw sentences with POS/NER/dependency labels and
emits the tagged-corpus line format (BIO column all O, answer column '-')."""

__version__ = "0.1.0"
