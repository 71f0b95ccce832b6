"""Shared text normalization for indexing, retrieval and the mock embedder.

One tokenizer is used everywhere a term set or term frequency is computed,
so keyword scores, overlap reranking and hashed mock embeddings all agree
on what a "term" is: lowercase, punctuation treated as whitespace, split
on whitespace.
"""

from __future__ import annotations

import string
from collections import Counter

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def tokenize(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def term_counts(text: str) -> Counter:
    """Term frequency map of `text` under the shared tokenizer."""
    return Counter(tokenize(text))
