"""Exact cosine top-K search over precomputed, unit-normalized feature embeddings."""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import FeatureCatalog, index_text
from .encoder import ModelParams
from .errors import ConfigError, FormatError, StalenessError, ValidationError
from .tokenizer import Vocab
from .trainers import embed_texts

INDEX_MAGIC = b"FSKI"
INDEX_VERSION = 1
DEFAULT_TOP_K = 5
NORM_TOL = 1e-4


def model_fingerprint(params: ModelParams, vocab: Vocab) -> bytes:
    """SHA-256 over the encoder config together with the vocabulary bytes and weights."""
    h = hashlib.sha256()
    h.update(params.config.to_json().encode("utf-8"))
    h.update(vocab.to_bytes())
    h.update(params.to_bytes())
    return h.digest()


@dataclass
class EmbeddingIndex:
    ids: list[str]
    matrix: np.ndarray
    fingerprint: bytes
    built_at: float = field(default_factory=time.time, compare=False)

    def __post_init__(self) -> None:
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ValidationError(f"matrix shape {self.matrix.shape} does not match {len(self.ids)} ids")
        if list(self.ids) != sorted(set(self.ids)):
            raise ValidationError("index ids must be unique and sorted")
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        if norms.size and np.abs(norms - 1.0).max() > NORM_TOL:
            raise ValidationError("index rows must be unit-normalized")
        if len(self.fingerprint) != 32:
            raise ValidationError("fingerprint must be 32 bytes")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<4sI", INDEX_MAGIC, INDEX_VERSION), self.fingerprint,
                 struct.pack("<II", len(self.ids), self.dim)]
        for fid in self.ids:
            raw = fid.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(self.matrix.astype("<f4").tobytes())
        return b"".join(parts)


@dataclass(frozen=True)
class SearchResult:
    hits: list[tuple[str, float]]
    query_echo: str = ""

    @property
    def ids(self) -> list[str]:
        return [fid for fid, _ in self.hits]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.hits]

    def __len__(self) -> int:
        return len(self.hits)


def build_index(params: ModelParams, vocab: Vocab, catalog: FeatureCatalog) -> EmbeddingIndex:
    if len(catalog) == 0:
        raise ValidationError("cannot build an index from an empty catalog")
    if params.config.vocab_size != vocab.size:
        raise ConfigError(f"model vocab_size {params.config.vocab_size} != vocabulary size {vocab.size}")
    emb = embed_texts(params, vocab, [index_text(e) for e in catalog]).astype(np.float64)
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return EmbeddingIndex(catalog.ids, emb.astype(np.float32), model_fingerprint(params, vocab))


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    Path(path).write_bytes(index.to_bytes())


def load_index(path: str | Path, params: ModelParams | None = None, vocab: Vocab | None = None) -> EmbeddingIndex:
    """Read an index file; with a model and vocabulary given, reject a stale index."""
    data = Path(path).read_bytes()
    try:
        magic, version = struct.unpack_from("<4sI", data, 0)
        if magic != INDEX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != INDEX_VERSION:
            raise FormatError(f"{path}: unsupported index version {version}")
        fingerprint = data[8:40]
        n, dim = struct.unpack_from("<II", data, 40)
        pos = 48
        ids = []
        for _ in range(n):
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            raw = data[pos : pos + length]
            if len(raw) != length:
                raise FormatError(f"{path}: truncated id table")
            ids.append(raw.decode("utf-8"))
            pos += length
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt index header ({exc})") from None
    if len(data) - pos != 4 * n * dim:
        raise FormatError(f"{path}: expected {4 * n * dim} bytes of embeddings, found {len(data) - pos}")
    matrix = np.frombuffer(data, dtype="<f4", offset=pos).reshape(n, dim).astype(np.float32)
    try:
        index = EmbeddingIndex(ids, matrix, fingerprint)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None
    index.built_at = Path(path).stat().st_mtime
    if params is not None and vocab is not None:
        check_fresh(index, params, vocab)
    return index


def check_fresh(index: EmbeddingIndex, params: ModelParams, vocab: Vocab) -> None:
    if index.fingerprint != model_fingerprint(params, vocab):
        raise StalenessError(
            "index was built with a different model or vocabulary; rebuild it with `featsearch index`"
        )


def rank_vector(
    index: EmbeddingIndex, query_vec: np.ndarray, k: int | None = DEFAULT_TOP_K, threshold: float | None = None
) -> list[tuple[str, float]]:
    """Top-k (id, cosine) pairs for a raw query vector; ``k=None`` ranks everything."""
    if k is not None and k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    if threshold is not None and not -1.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [-1, 1], got {threshold}")
    q = np.asarray(query_vec, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValidationError("query embedding has zero or non-finite norm")
    scores = index.matrix.astype(np.float64) @ (q / norm)
    # rows are in ascending id order, so a stable sort breaks ties by id
    order = np.argsort(-scores, kind="stable")
    if k is not None:
        order = order[:k]
    hits = [(index.ids[i], float(scores[i])) for i in order]
    if threshold is not None:
        hits = [h for h in hits if h[1] >= threshold]
    return hits


def search(
    index: EmbeddingIndex,
    params: ModelParams,
    vocab: Vocab,
    query: str,
    k: int | None = DEFAULT_TOP_K,
    threshold: float | None = None,
) -> SearchResult:
    if not query or not query.strip():
        raise ValidationError("query must be a non-empty string")
    check_fresh(index, params, vocab)
    vec = embed_texts(params, vocab, [query])[0]
    return SearchResult(rank_vector(index, vec, k, threshold), query)


def search_many(
    index: EmbeddingIndex,
    params: ModelParams,
    vocab: Vocab,
    queries: Sequence[str],
    k: int | None = DEFAULT_TOP_K,
    threshold: float | None = None,
) -> list[SearchResult]:
    """Batch form of ``search``: one encoder pass for all queries."""
    for q in queries:
        if not q or not q.strip():
            raise ValidationError("query must be a non-empty string")
    check_fresh(index, params, vocab)
    vecs = embed_texts(params, vocab, list(queries))
    return [SearchResult(rank_vector(index, v, k, threshold), q) for q, v in zip(queries, vecs)]
