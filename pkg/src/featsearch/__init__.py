"""Semantic feature search for settings catalogs.

A small bi-encoder is trained contrastively on a feature catalog and searched
by exact cosine similarity. Lexical baselines and an evaluation harness sit
alongside it for comparison.
"""

__version__ = "0.1.0"
