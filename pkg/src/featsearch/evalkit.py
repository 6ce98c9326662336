"""Retrieval metrics and report rendering for search engines."""

from __future__ import annotations

import json
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .baselines import LexicalIndex, bm25_search, fts_search
from .catalog import KEYWORD_KINDS, QueryRecord
from .encoder import ModelParams
from .errors import StalenessError, ValidationError
from .index import EmbeddingIndex, check_fresh, model_fingerprint, search_many
from .tokenizer import Vocab

ALL = "all"
DEFAULT_HITS_KS: tuple = (5, 10, 20, ALL)


def prf_at_k(retrieved: Sequence[str], gold: Iterable[str], k: int = 5) -> tuple[float, float, float]:
    """P/R/F1 over the top ``k`` retrieved ids.

    Precision divides by the number actually returned (at most ``k``); an
    empty result list has precision 0.
    """
    gold = set(gold)
    if not gold:
        raise ValidationError("gold set must be non-empty")
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    top = list(retrieved)[:k]
    tp = len(set(top) & gold)
    p = tp / len(top) if top else 0.0
    r = tp / len(gold)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def hits_at_k(retrieved: Sequence[str], gold: Iterable[str], k: int | str) -> int:
    gold = set(gold)
    if not gold:
        raise ValidationError("gold set must be non-empty")
    if k == ALL:
        top = retrieved
    elif isinstance(k, int) and k >= 1:
        top = list(retrieved)[:k]
    else:
        raise ValidationError(f"K must be a positive integer or 'all', got {k!r}")
    return int(any(fid in gold for fid in top))


# -- engines ---------------------------------------------------------------


class Engine(Protocol):
    name: str

    def rank(self, queries: Sequence[str]) -> list[list[str]]:
        """Full ranked id list per query (``Hits@all`` needs everything the engine returns)."""


class NeuralEngine:
    name = "neural"

    def __init__(self, index: EmbeddingIndex, params: ModelParams, vocab: Vocab, threshold: float | None = None):
        check_fresh(index, params, vocab)
        self.index, self.params, self.vocab, self.threshold = index, params, vocab, threshold

    def rank(self, queries: Sequence[str]) -> list[list[str]]:
        results = search_many(self.index, self.params, self.vocab, queries, k=None, threshold=self.threshold)
        return [r.ids for r in results]

    @property
    def fingerprint(self) -> str:
        return model_fingerprint(self.params, self.vocab).hex()


class FtsEngine:
    name = "fts"

    def __init__(self, index: LexicalIndex):
        self.index = index

    def rank(self, queries: Sequence[str]) -> list[list[str]]:
        return [fts_search(self.index, q, k=None).ids for q in queries]


class Bm25Engine:
    name = "bm25"

    def __init__(self, index: LexicalIndex, k1: float = 1.2, b: float = 0.75):
        self.index, self.k1, self.b = index, k1, b

    def rank(self, queries: Sequence[str]) -> list[list[str]]:
        return [bm25_search(self.index, q, k=None, k1=self.k1, b=self.b).ids for q in queries]


# -- reports ---------------------------------------------------------------


@dataclass
class QueryRow:
    query: str
    retrieved: list[str]
    gold: list[str]
    metrics: dict[str, float]


@dataclass
class EvalReport:
    engine: str
    kind: str
    rows: list[QueryRow]
    aggregates: dict[str, float]
    fingerprints: dict[str, str] = field(default_factory=dict)

    @property
    def is_keyword(self) -> bool:
        return self.kind in KEYWORD_KINDS

    def percentages(self) -> dict[str, float]:
        return {k: round(100.0 * v, 1) for k, v in self.aggregates.items()}

    def to_dict(self) -> dict:
        out = asdict(self)
        out["percentages"] = self.percentages()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)


def _hits_label(k) -> str:
    return f"H@{k}"


def aggregate(rows: Sequence[QueryRow]) -> dict[str, float]:
    """Macro average: unweighted mean of each per-query metric."""
    if not rows:
        return {}
    keys = list(rows[0].metrics)
    return {k: sum(r.metrics[k] for r in rows) / len(rows) for k in keys}


def evaluate(
    engine: Engine,
    queries: Sequence[QueryRecord],
    hits_ks: Sequence = DEFAULT_HITS_KS,
    prf_k: int = 5,
    catalog_fingerprint: str = "",
) -> EvalReport:
    """Run every query through ``engine``; keyword sets get P/R/F1@k, sentence sets Hits@K."""
    if not queries:
        raise ValidationError("query set is empty")
    kinds = {q.kind for q in queries}
    if len(kinds) != 1:
        raise ValidationError(f"query set mixes kinds {sorted(kinds)}; evaluate each kind separately")
    kind = kinds.pop()
    ranked = engine.rank([q.text for q in queries])
    rows = []
    for q, ids in zip(queries, ranked):
        if kind in KEYWORD_KINDS:
            p, r, f1 = prf_at_k(ids, q.gold_ids, prf_k)
            metrics = {"P": p, "R": r, "F1": f1}
            shown = ids[:prf_k]
        else:
            metrics = {_hits_label(k): float(hits_at_k(ids, q.gold_ids, k)) for k in hits_ks}
            numeric = [k for k in hits_ks if k != ALL]
            shown = ids[: max(numeric)] if numeric and ALL not in hits_ks else ids
        rows.append(QueryRow(q.text, list(shown), sorted(q.gold_ids), metrics))
    fingerprints = {"catalog": catalog_fingerprint} if catalog_fingerprint else {}
    if isinstance(engine, NeuralEngine):
        fingerprints["model"] = engine.fingerprint
    return EvalReport(engine.name, kind, rows, aggregate(rows), fingerprints)


def render_table(reports: Sequence[EvalReport]) -> str:
    """Aligned plain-text tables, one per query kind, one row per engine."""
    blocks = []
    by_kind: dict[str, list[EvalReport]] = {}
    for r in reports:
        by_kind.setdefault(r.kind, []).append(r)
    for kind, group in by_kind.items():
        cols = list(group[0].aggregates)
        header = ["engine", *cols]
        body = [[r.engine, *(f"{r.percentages()[c]:.1f}" for c in cols)] for r in group]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
        fmt = lambda row: "  ".join(  # noqa: E731
            cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))
        )
        lines = [f"[{kind}] n={len(group[0].rows)}", fmt(header), fmt(["-" * w for w in widths])]
        lines.extend(fmt(row) for row in body)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_table(text: str) -> dict[tuple[str, str], dict[str, float]]:
    """Inverse of ``render_table``: {(kind, engine): {metric: percentage}}."""
    out: dict[tuple[str, str], dict[str, float]] = {}
    for block in text.strip().split("\n\n"):
        lines = block.splitlines()
        kind = re.match(r"\[(\w+)\]", lines[0]).group(1)
        cols = lines[1].split()[1:]
        for line in lines[3:]:
            cells = line.split()
            out[(kind, cells[0])] = {c: float(v) for c, v in zip(cols, cells[1:])}
    return out


def render_report(reports: Sequence[EvalReport], out_dir: str | Path | None = None, tag: str = "") -> str:
    """Return the text table; with ``out_dir`` also write ``.txt`` and ``.json`` files there."""
    table = render_table(reports)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stamp = time.strftime("%Y%m%dT%H%M%S")
        engines = "+".join(dict.fromkeys(r.engine for r in reports))
        stem = f"eval_{engines}_{tag or 'queries'}_{stamp}"
        (out_dir / f"{stem}.txt").write_text(table, encoding="utf-8")
        payload = [r.to_dict() for r in reports]
        (out_dir / f"{stem}.json").write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
    return table


__all__ = [
    "ALL",
    "Bm25Engine",
    "EvalReport",
    "FtsEngine",
    "NeuralEngine",
    "StalenessError",
    "aggregate",
    "evaluate",
    "hits_at_k",
    "parse_table",
    "prf_at_k",
    "render_report",
    "render_table",
]
