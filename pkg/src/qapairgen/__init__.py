"""Question/answer pair generation: answer span selection + seq2seq question generation."""

__version__ = "0.1.0"
