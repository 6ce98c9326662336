"""Feature catalog ingestion and training-pair synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import SchemaError, ValidationError

PATH_SEPARATOR = " - "
QUERY_KINDS = ("exact_keyword", "relaxed_keyword", "sentence")
KEYWORD_KINDS = ("exact_keyword", "relaxed_keyword")


@dataclass(frozen=True)
class FeatureEntry:
    id: str
    path: tuple[str, ...]
    hint: str | None = None
    descriptions: tuple[str, ...] = ()

    @property
    def name(self) -> str:
        return self.path[-1]

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id.strip():
            raise SchemaError("entry id must be a non-empty string")
        if not self.path:
            raise SchemaError(f"entry {self.id!r}: path must have at least one segment")
        for seg in self.path:
            if not isinstance(seg, str) or not seg.strip():
                raise SchemaError(f"entry {self.id!r}: empty path segment")
        if self.hint is not None and (not isinstance(self.hint, str) or not self.hint.strip()):
            raise SchemaError(f"entry {self.id!r}: hint must be non-empty when present")
        for d in self.descriptions:
            if not isinstance(d, str) or not d.strip():
                raise SchemaError(f"entry {self.id!r}: empty description")


@dataclass(frozen=True)
class FeatureCatalog:
    entries: tuple[FeatureEntry, ...]
    version: str = "0"
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.entries, key=lambda e: e.id))
        by_id: dict[str, FeatureEntry] = {}
        for e in ordered:
            if e.id in by_id:
                raise ValidationError(f"duplicate feature id {e.id!r}")
            by_id[e.id] = e
        rendered: dict[str, str] = {}
        for e in ordered:
            text = index_text(e)
            if text in rendered:
                raise ValidationError(
                    f"entries {rendered[text]!r} and {e.id!r} render to the same index text {text!r}"
                )
            rendered[text] = e.id
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[FeatureEntry]:
        return iter(self.entries)

    def __contains__(self, feature_id: object) -> bool:
        return feature_id in self._by_id

    def __getitem__(self, feature_id: str) -> FeatureEntry:
        return self._by_id[feature_id]

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def texts(self) -> list[str]:
        """Every string in the catalog; the tokenizer and distillation corpus draw from this."""
        out: list[str] = []
        for e in self.entries:
            out.append(index_text(e))
            out.append(e.name)
            if e.hint:
                out.append(e.hint)
            out.extend(e.descriptions)
        return out


@dataclass(frozen=True)
class TrainingPair:
    anchor: str
    positive: str
    source_id: str

    def __post_init__(self) -> None:
        if not self.anchor.strip() or not self.positive.strip():
            raise ValidationError(f"empty text in training pair from {self.source_id!r}")
        if self.anchor == self.positive:
            raise ValidationError(f"anchor equals positive in pair from {self.source_id!r}")


@dataclass(frozen=True)
class QueryRecord:
    text: str
    kind: str
    gold_ids: frozenset[str]

    def __post_init__(self) -> None:
        if self.kind not in QUERY_KINDS:
            raise SchemaError(f"query {self.text!r}: unknown kind {self.kind!r}")
        if not self.text.strip():
            raise SchemaError("query text must be non-empty")
        if not self.gold_ids:
            raise SchemaError(f"query {self.text!r}: gold_ids must be non-empty")


def index_text(entry: FeatureEntry, separator: str = PATH_SEPARATOR) -> str:
    return separator.join(entry.path)


def _entry_from_json(raw: object, position: int) -> FeatureEntry:
    if not isinstance(raw, dict):
        raise SchemaError(f"entry #{position} is not an object")
    label = raw.get("id", f"#{position}")
    try:
        path = raw["path"]
        fid = raw["id"]
    except KeyError as exc:
        raise SchemaError(f"entry {label!r}: missing field {exc.args[0]!r}") from None
    if not isinstance(path, list) or not all(isinstance(p, str) for p in path):
        raise SchemaError(f"entry {label!r}: path must be a list of strings")
    descriptions = raw.get("descriptions", [])
    if not isinstance(descriptions, list):
        raise SchemaError(f"entry {label!r}: descriptions must be a list")
    unknown = set(raw) - {"id", "path", "name", "hint", "descriptions"}
    if unknown:
        raise SchemaError(f"entry {label!r}: unknown fields {sorted(unknown)}")
    entry = FeatureEntry(
        id=fid, path=tuple(path), hint=raw.get("hint"), descriptions=tuple(descriptions)
    )
    if "name" in raw and raw["name"] != entry.name:
        raise SchemaError(f"entry {label!r}: name must equal the last path segment")
    return entry


def catalog_from_dict(doc: object) -> FeatureCatalog:
    if not isinstance(doc, dict) or "entries" not in doc:
        raise SchemaError("catalog must be an object with an 'entries' list")
    if not isinstance(doc["entries"], list):
        raise SchemaError("'entries' must be a list")
    version = doc.get("version", "0")
    if not isinstance(version, str):
        raise SchemaError("'version' must be a string")
    entries = [_entry_from_json(raw, i) for i, raw in enumerate(doc["entries"])]
    return FeatureCatalog(tuple(entries), version)


def load_catalog(path: str | Path) -> FeatureCatalog:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return catalog_from_dict(doc)


def catalog_to_dict(catalog: FeatureCatalog) -> dict:
    entries = []
    for e in catalog:
        raw: dict = {"id": e.id, "path": list(e.path)}
        if e.hint is not None:
            raw["hint"] = e.hint
        if e.descriptions:
            raw["descriptions"] = list(e.descriptions)
        entries.append(raw)
    return {"version": catalog.version, "entries": entries}


def synthesize_pairs(catalog: FeatureCatalog) -> list[TrainingPair]:
    """Build (anchor, positive) pairs: name/hint, name/description, index text/name.

    A single-segment entry renders its index text as the bare name, so the
    index-text pair would be degenerate and is skipped.
    """
    pairs: list[TrainingPair] = []
    for e in catalog:
        if e.hint:
            pairs.append(TrainingPair(e.name, e.hint, e.id))
        for d in e.descriptions:
            pairs.append(TrainingPair(e.name, d, e.id))
        text = index_text(e)
        if text != e.name:
            pairs.append(TrainingPair(text, e.name, e.id))
    return pairs


def load_queryset(path: str | Path, catalog: FeatureCatalog | None = None) -> list[QueryRecord]:
    """Read a JSON-lines query file. Gold ids are checked when a catalog is given."""
    path = Path(path)
    records: list[QueryRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict) or not {"text", "kind", "gold_ids"} <= set(raw):
                raise SchemaError(f"{path}:{lineno}: record needs text, kind and gold_ids")
            gold = raw["gold_ids"]
            if isinstance(gold, str) or not isinstance(gold, list):
                raise SchemaError(f"{path}:{lineno}: gold_ids must be a list")
            records.append(QueryRecord(raw["text"], raw["kind"], frozenset(gold)))
    if catalog is not None:
        check_queries(records, catalog)
    return records


def check_queries(records: Iterable[QueryRecord], catalog: FeatureCatalog) -> None:
    for rec in records:
        for gid in sorted(rec.gold_ids):
            if gid not in catalog:
                raise ValidationError(f"query {rec.text!r}: unknown gold id {gid!r}")


def dump_queryset(records: Sequence[QueryRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            raw = {"text": rec.text, "kind": rec.kind, "gold_ids": sorted(rec.gold_ids)}
            fh.write(json.dumps(raw, ensure_ascii=False) + "\n")


def bundled_path(name: str) -> Path:
    """Location of a file shipped in ``featsearch/data``."""
    return Path(str(resources.files("featsearch") / "data" / name))


def bundled_catalog() -> FeatureCatalog:
    return load_catalog(bundled_path("catalog.json"))


def bundled_queryset(kind: str) -> list[QueryRecord]:
    files = {
        "exact_keyword": "queries_exact.jsonl",
        "relaxed_keyword": "queries_relaxed.jsonl",
        "sentence": "queries_sentence.jsonl",
    }
    if kind not in files:
        raise ValueError(f"no bundled queryset for kind {kind!r}")
    return load_queryset(bundled_path(files[kind]), bundled_catalog())
