"""Lexical baselines: term-match full-text search and Okapi BM25.

Both index each entry's rendered path plus its hint. Neither does stemming
or synonym expansion, so they only find documents sharing a literal term
with the query.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from .catalog import FeatureCatalog, index_text
from .errors import ConfigError, ValidationError
from .index import SearchResult

_TERM_RE = re.compile(r"[^\W_]+")


def terms(text: str) -> list[str]:
    return _TERM_RE.findall(text.lower())


@dataclass(frozen=True)
class LexicalIndex:
    postings: dict[str, frozenset[str]]
    term_counts: dict[str, Counter]
    doc_lengths: dict[str, int]
    ids: tuple[str, ...]

    @property
    def n_docs(self) -> int:
        return len(self.ids)

    @property
    def avg_doc_length(self) -> float:
        return sum(self.doc_lengths.values()) / self.n_docs


def build_lexical_index(catalog: FeatureCatalog) -> LexicalIndex:
    if len(catalog) == 0:
        raise ValidationError("cannot index an empty catalog")
    counts: dict[str, Counter] = {}
    lengths: dict[str, int] = {}
    postings: dict[str, set[str]] = {}
    for e in catalog:
        toks = terms(index_text(e) + " " + (e.hint or ""))
        counts[e.id] = Counter(toks)
        lengths[e.id] = len(toks)
        for t in counts[e.id]:
            postings.setdefault(t, set()).add(e.id)
    return LexicalIndex(
        {t: frozenset(ids) for t, ids in sorted(postings.items())},
        counts,
        lengths,
        tuple(catalog.ids),
    )


def _query_terms(query: str, k: int | None) -> list[str]:
    if not query or not query.strip():
        raise ValidationError("query must be a non-empty string")
    if k is not None and k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    return terms(query)


def _rank(scores: dict[str, float], k: int | None) -> list[tuple[str, float]]:
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked if k is None else ranked[:k]


def fts_search(index: LexicalIndex, query: str, k: int | None = 5) -> SearchResult:
    """Score = number of distinct query terms the document contains; non-matching documents are dropped."""
    qterms = set(_query_terms(query, k))
    scores: Counter = Counter()
    for t in qterms:
        for fid in index.postings.get(t, ()):
            scores[fid] += 1
    return SearchResult([(fid, float(s)) for fid, s in _rank(dict(scores), k)], query)


def bm25_idf(index: LexicalIndex, term: str) -> float:
    n = len(index.postings.get(term, ()))
    return max(0.0, math.log((index.n_docs - n + 0.5) / (n + 0.5)))


def bm25_search(
    index: LexicalIndex, query: str, k: int | None = 5, k1: float = 1.2, b: float = 0.75
) -> SearchResult:
    """Okapi BM25 with a non-negative IDF. Only documents sharing a term with the query are returned."""
    qcounts = Counter(_query_terms(query, k))
    avgdl = index.avg_doc_length
    scores: dict[str, float] = {}
    # sorted terms keep float summation order independent of query word order
    for t in sorted(qcounts):
        docs = index.postings.get(t)
        if not docs:
            continue
        idf = bm25_idf(index, t)
        for fid in sorted(docs):
            tf = index.term_counts[fid][t]
            norm = k1 * (1.0 - b + b * index.doc_lengths[fid] / avgdl)
            w = idf * tf * (k1 + 1.0) / (tf + norm)
            scores[fid] = scores.get(fid, 0.0) + qcounts[t] * w
    return SearchResult(_rank(scores, k), query)
