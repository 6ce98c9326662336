import json

import pytest

from featsearch.catalog import (
    FeatureCatalog,
    FeatureEntry,
    QueryRecord,
    bundled_path,
    bundled_queryset,
    catalog_from_dict,
    index_text,
    load_catalog,
    load_queryset,
    synthesize_pairs,
)
from featsearch.errors import SchemaError, ValidationError


def test_minimal_catalog(write_json):
    path = write_json("c.json", {"version": "1", "entries": [
        {"id": "display.touch", "path": ["Display", "Touch sensitivity"]}]})
    cat = load_catalog(path)
    assert len(cat) == 1
    assert cat["display.touch"].name == "Touch sensitivity"


def test_duplicate_ids_rejected(write_json):
    path = write_json("c.json", {"version": "1", "entries": [
        {"id": "a", "path": ["A"]}, {"id": "a", "path": ["B"]}]})
    with pytest.raises(ValidationError, match="duplicate"):
        load_catalog(path)


@pytest.mark.parametrize("entry, needle", [
    ({"id": "x", "path": []}, "'x'"),
    ({"id": "x", "path": ["A", "  "]}, "'x'"),
    ({"id": "x"}, "path"),
    ({"id": "x", "path": ["A"], "hint": ""}, "'x'"),
    ({"id": "x", "path": ["A"], "descriptions": ["ok", " "]}, "'x'"),
    ({"id": "x", "path": ["A"], "name": "B"}, "'x'"),
])
def test_malformed_entry_names_offender(write_json, entry, needle):
    path = write_json("c.json", {"version": "1", "entries": [entry]})
    with pytest.raises(SchemaError, match=needle):
        load_catalog(path)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_catalog(path)


def test_entries_sorted_by_id():
    cat = catalog_from_dict({"entries": [{"id": "b", "path": ["B"]}, {"id": "a", "path": ["A"]}]})
    assert cat.ids == ["a", "b"]


def test_index_text_injective_enforced():
    with pytest.raises(ValidationError, match="same index text"):
        FeatureCatalog((FeatureEntry("a", ("X", "Y")), FeatureEntry("b", ("X", "Y"))))


@pytest.mark.parametrize("path, expected", [
    (("Display", "Touch sensitivity"), "Display - Touch sensitivity"),
    (("Sounds",), "Sounds"),
    (("A", "B", "C"), "A - B - C"),
])
def test_index_text(path, expected):
    assert index_text(FeatureEntry("x", path)) == expected


def test_bundled_catalog(catalog):
    raw = json.loads(bundled_path("catalog.json").read_text(encoding="utf-8"))
    assert len(raw["entries"]) == 40
    assert len(catalog) == 40
    assert catalog.ids == sorted(catalog.ids)


def test_eye_comfort_pair():
    entry = FeatureEntry("display.eye", ("Display", "Eye comfort shield"),
                         hint="Keep your eyes comfortable by limiting blue light")
    pairs = synthesize_pairs(FeatureCatalog((entry,)))
    assert ("Eye comfort shield", "Keep your eyes comfortable by limiting blue light") in [
        (p.anchor, p.positive) for p in pairs]


def test_pair_counts_by_construction():
    both = FeatureEntry("a", ("S", "A"), hint="h", descriptions=("d",))
    bare = FeatureEntry("b", ("S", "B"))
    pairs = synthesize_pairs(FeatureCatalog((both, bare)))
    assert [(p.anchor, p.positive, p.source_id) for p in pairs] == [
        ("A", "h", "a"), ("A", "d", "a"), ("S - A", "A", "a"), ("S - B", "B", "b")]


def test_bundled_pair_count_recount(catalog):
    # independent recount straight from the JSON file
    raw = json.loads(bundled_path("catalog.json").read_text(encoding="utf-8"))
    expected = sum(1 + ("hint" in e) + len(e.get("descriptions", [])) for e in raw["entries"])
    assert len(synthesize_pairs(catalog)) == expected


def test_pairs_pure_and_resolvable(catalog):
    a, b = synthesize_pairs(catalog), synthesize_pairs(catalog)
    assert a == b
    assert all(p.source_id in catalog for p in a)
    assert all(p.anchor != p.positive for p in a)


def test_load_queryset(write_jsonl, catalog):
    path = write_jsonl("q.jsonl", [
        {"text": "Touch sensitivity", "kind": "exact_keyword", "gold_ids": ["display.touch"]}])
    recs = load_queryset(path, catalog)
    assert recs == [QueryRecord("Touch sensitivity", "exact_keyword", frozenset({"display.touch"}))]


def test_queryset_unknown_gold(write_jsonl, catalog):
    path = write_jsonl("q.jsonl", [{"text": "huh", "kind": "sentence", "gold_ids": ["nope"]}])
    with pytest.raises(ValidationError, match="'huh'.*'nope'"):
        load_queryset(path, catalog)


def test_queryset_bad_kind(write_jsonl):
    path = write_jsonl("q.jsonl", [{"text": "x", "kind": "fuzzy", "gold_ids": ["a"]}])
    with pytest.raises(SchemaError):
        load_queryset(path)


def test_bundled_sentence_kinds():
    lines = bundled_path("queries_sentence.jsonl").read_text(encoding="utf-8").splitlines()
    assert all(json.loads(l)["kind"] == "sentence" for l in lines if l.strip())
    assert all(r.kind == "sentence" for r in bundled_queryset("sentence"))


def test_bundled_querysets_resolve(catalog):
    for kind in ("exact_keyword", "relaxed_keyword", "sentence"):
        for rec in bundled_queryset(kind):
            assert rec.gold_ids <= set(catalog.ids)
