"""Acceptance criteria 1-8.

Each test ends in ``verdict(n, ok, detail)``, which prints one PASS/FAIL line
(also repeated in the terminal summary) and then asserts. Criteria 4, 5, 6
and 8 share one teacher trained with the bundled recipe.
"""

import hashlib
import time

import numpy as np
import pytest

from featsearch.baselines import build_lexical_index, fts_search
from featsearch.catalog import FeatureCatalog, bundled_catalog, bundled_queryset, synthesize_pairs
from featsearch.cli import distill_corpus, load_recipe
from featsearch.encoder import EncoderConfig, forward, init_params, param_count, save_checkpoint
from featsearch.errors import ValidationError
from featsearch.evalkit import FtsEngine, NeuralEngine, evaluate, hits_at_k, prf_at_k
from featsearch.index import EmbeddingIndex, build_index, rank_vector, save_index, search
from featsearch.tokenizer import PAD, build_vocab, encode
from featsearch.trainers import (
    ContrastiveHyper,
    DistillHyper,
    MlmHyper,
    contrastive_loss,
    contrastive_loss_and_grad,
    distill,
    hyper_from_json,
    mlm_pretrain,
    sample_negatives,
    train_relevance,
)

from acceptance_log import verdict
from oracles import brute_force_topk, relative_errors

REPORTS = []  # every EvalReport built here, for the Hits@K monotonicity check


def sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@pytest.fixture(scope="module")
def cat():
    return bundled_catalog()


@pytest.fixture(scope="module")
def teacher(cat):
    recipe = load_recipe()["train"]
    vocab = build_vocab(cat.texts(), recipe.get("vocab_size", 1000))
    cfg = EncoderConfig(layers=recipe["layers"], hidden=recipe["dim"], heads=4, ffn_dim=4 * recipe["dim"],
                        vocab_size=vocab.size, max_seq_len=64)
    hyper = hyper_from_json(ContrastiveHyper, recipe, seed=0)
    start = time.perf_counter()
    params, report = train_relevance(init_params(cfg, 0), synthesize_pairs(cat), hyper, vocab)
    index = build_index(params, vocab, cat)
    return {"params": params, "vocab": vocab, "index": index, "hyper": hyper,
            "report": report, "seconds": time.perf_counter() - start}


def _neural(teacher, params=None, kind="sentence", ks=(5, 10, 20, "all")):
    params = params or teacher["params"]
    index = teacher["index"] if params is teacher["params"] else build_index(params, teacher["vocab"], bundled_catalog())
    rep = evaluate(NeuralEngine(index, params, teacher["vocab"]), bundled_queryset(kind), hits_ks=ks)
    REPORTS.append(rep)
    return rep


# -- 1 ---------------------------------------------------------------------------


def test_1_gradient_correctness():
    start = time.perf_counter()
    cfg = EncoderConfig(layers=1, hidden=8, heads=2, ffn_dim=16, vocab_size=40, max_seq_len=12)
    params = init_params(cfg, 11).astype(np.float64)
    rng = np.random.default_rng(11)
    ids = rng.integers(5, 40, size=(10, 7))
    mask = np.ones_like(ids)
    for r, n in enumerate([7, 7, 5, 4, 6, 3, 7, 2, 5, 6]):
        mask[r, n:] = 0
        ids[r, n:] = PAD
    negatives = sample_negatives(5, 4, rng)
    target = rng.normal(size=(10, 8))

    def contrastive(emb):
        loss, dq, dd = contrastive_loss_and_grad(emb[:5], emb[5:], negatives, 0.05)
        return loss, np.concatenate([dq, dd])

    def mse(emb):
        diff = emb - target
        return float(np.mean(diff * diff)), 2 * diff / diff.size

    worst = {}
    for name, fn in (("contrastive", contrastive), ("mse", mse)):
        errs = relative_errors(params, (ids, mask), fn, h=1e-5)
        tensor = max(errs, key=errs.get)
        worst[name] = (errs[tensor], tensor, len(errs))
    elapsed = time.perf_counter() - start
    ok = all(e < 1e-4 for e, _, _ in worst.values()) and elapsed < 60
    detail = "; ".join(f"{k}: max rel err {e:.2e} ({t}) over {n} tensors" for k, (e, t, n) in worst.items())
    verdict(1, ok, f"{detail}; < 1e-4 required; {elapsed:.1f}s (< 60s)")


# -- 2 ---------------------------------------------------------------------------


def test_2_retrieval_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    m = rng.normal(size=(60, 16))
    m[[7, 31, 45]] = m[3]  # exact duplicates force id tie-breaks
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    ids = [f"feat.{i:03d}" for i in range(60)]
    index = EmbeddingIndex(ids, m, bytes(32))
    queries = rng.normal(size=(200, 16))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    queries[:10] = index.matrix[3]  # queries that hit the tied rows exactly
    mismatches = 0
    for q in queries:
        for k in (1, 5, 10, 20):
            if [fid for fid, _ in rank_vector(index, q, k)] != brute_force_topk(index.ids, index.matrix, q, k):
                mismatches += 1
    elapsed = time.perf_counter() - start
    verdict(2, mismatches == 0, f"{mismatches} mismatches over 200 queries x K in {{1,5,10,20}}; {elapsed:.2f}s")


# -- 3 ---------------------------------------------------------------------------

# retrieved, gold, (P, R, F1)@5, Hits@(1, 5, 10, all), worked by hand
METRIC_LISTS = [
    (["g", "x0", "x1", "x2", "x3"], {"g"}, (0.2, 1.0, 1 / 3), (1, 1, 1, 1)),
    (["x0", "x1", "x2", "x3", "x4"], {"g"}, (0.0, 0.0, 0.0), (0, 0, 0, 0)),
    (["g1", "g2", "x0", "x1", "x2"], {"g1", "g2"}, (0.4, 1.0, 4 / 7), (1, 1, 1, 1)),
    (["g1", "x0", "x1", "x2", "x3"], {"g1", "g2"}, (0.2, 0.5, 2 / 7), (1, 1, 1, 1)),
    ([], {"g"}, (0.0, 0.0, 0.0), (0, 0, 0, 0)),
    (["g"], {"g"}, (1.0, 1.0, 1.0), (1, 1, 1, 1)),
    (["x0", "g"], {"g"}, (0.5, 1.0, 2 / 3), (0, 1, 1, 1)),
    (["x0", "x1", "x2", "x3", "x4", "g"], {"g"}, (0.0, 0.0, 0.0), (0, 0, 1, 1)),
    (["g0", "g1", "g2", "g3", "g4"], {"g0", "g1", "g2", "g3", "g4"}, (1.0, 1.0, 1.0), (1, 1, 1, 1)),
    (["x0", "g1", "x1", "g2", "x2"], {"g1", "g2", "g3"}, (0.4, 2 / 3, 0.5), (0, 1, 1, 1)),
]


def test_3_metric_oracles(teacher, cat):
    bad = []
    for i, (retrieved, gold, prf, hits) in enumerate(METRIC_LISTS):
        got = prf_at_k(retrieved, gold, 5)
        if any(abs(a - b) > 1e-12 for a, b in zip(got, prf)):
            bad.append(f"list {i} prf {got}")
        if tuple(hits_at_k(retrieved, gold, k) for k in (1, 5, 10, "all")) != hits:
            bad.append(f"list {i} hits")
    with pytest.raises(ValidationError):
        prf_at_k(["a"], set())

    # Hits@K monotone in K over every report: neural and FTS on sentence queries
    lexical = build_lexical_index(cat)
    REPORTS.append(evaluate(FtsEngine(lexical), bundled_queryset("sentence")))
    _neural(teacher)
    order = ["H@5", "H@10", "H@20", "H@all"]
    not_monotone = [r.engine for r in REPORTS if [r.aggregates[k] for k in order] != sorted(r.aggregates[k] for k in order)]
    ok = not bad and not not_monotone
    verdict(3, ok, f"10 hand-worked lists: {len(bad)} mismatches (worked example P=0.2 R=1.0 F1=1/3); "
                   f"Hits@K monotone in {len(REPORTS) - len(not_monotone)}/{len(REPORTS)} reports")


# -- 4 ---------------------------------------------------------------------------


def test_4_end_to_end_learning(teacher, cat):
    # keyword reports carry P/R/F1 only, so exact-name Hits@1 is scored directly
    exact = bundled_queryset("exact_keyword")
    ranked = NeuralEngine(teacher["index"], teacher["params"], teacher["vocab"]).rank([q.text for q in exact])
    h1 = sum(hits_at_k(ids, q.gold_ids, 1) for q, ids in zip(exact, ranked)) / len(exact)
    sentence = _neural(teacher)
    fts = evaluate(FtsEngine(build_lexical_index(cat)), bundled_queryset("sentence"))
    REPORTS.append(fts)
    h5, fts5 = sentence.aggregates["H@5"], fts.aggregates["H@5"]
    epochs, secs = teacher["hyper"].epochs, teacher["seconds"]
    ok = h1 >= 0.9 and h5 >= 0.8 and fts5 < h5 and epochs <= 100 and secs < 600
    verdict(4, ok, f"exact H@1 {h1:.3f} (>= 0.9); sentence H@5 {h5:.3f} (>= 0.8); "
                   f"FTS sentence H@5 {fts5:.3f} (< neural); {epochs} epochs, {secs:.0f}s")


# -- 5 ---------------------------------------------------------------------------

COMPOUND = {
    "notification sound": "sounds.notification_sound",
    "sound notification": "access.sound_notifications",
}


def test_5_compound_nouns(teacher, cat):
    p, v, index = teacher["params"], teacher["vocab"], teacher["index"]
    firsts = {q: search(index, p, v, q, k=3).ids[0] for q in COMPOUND}
    neural_ok = all(firsts[q] == gold for q, gold in COMPOUND.items())
    lexical = build_lexical_index(cat)
    fts = [fts_search(lexical, q, k=None).hits for q in COMPOUND]
    fts_same = fts[0] == fts[1]
    shown = ", ".join(f"{q!r} -> {firsts[q]}" for q in COMPOUND)
    verdict(5, neural_ok and fts_same,
            f"neural: {shown}; FTS identical for both orders: {fts_same} ({len(fts[0])} results)")


# -- 6 ---------------------------------------------------------------------------


def test_6_distillation_retention(teacher, cat):
    start = time.perf_counter()
    t_cfg = teacher["params"].config
    s_cfg = EncoderConfig(layers=1, hidden=32, heads=4, ffn_dim=128, vocab_size=t_cfg.vocab_size,
                          max_seq_len=t_cfg.max_seq_len)
    t_count, t_bytes = param_count(t_cfg)
    s_count, s_bytes = param_count(s_cfg)
    hyper = hyper_from_json(DistillHyper, load_recipe()["distill"], student_config=s_cfg,
                            corpus=distill_corpus(cat), seed=0)
    student, _ = distill(teacher["params"], hyper, teacher["vocab"])
    t20 = _neural(teacher).aggregates["H@20"]
    s20 = _neural(teacher, params=student).aggregates["H@20"]
    retention = s20 / t20
    ratio = s_bytes / t_bytes
    elapsed = time.perf_counter() - start
    ok = retention >= 0.85 and 0.2 <= s_count / t_count <= 0.3 and elapsed < 600
    verdict(6, ok, f"student 1x32 keeps {retention:.1%} of teacher H@20 ({s20:.3f} / {t20:.3f}; >= 85%); "
                   f"params {s_count}/{t_count} = {s_count / t_count:.1%}, checkpoint {ratio:.1%}; {elapsed:.0f}s")


# -- 7 ---------------------------------------------------------------------------


def test_7_determinism(cat, tmp_path):
    pairs = synthesize_pairs(cat)
    texts = cat.texts()

    def one_run(tag):
        d = tmp_path / tag
        d.mkdir()
        vocab = build_vocab(texts, 600)
        vocab.save(d / "vocab.txt")
        cfg = EncoderConfig(layers=1, hidden=16, heads=2, ffn_dim=32, vocab_size=vocab.size, max_seq_len=64)
        hyper = ContrastiveHyper(epochs=2, seed=3, dropout=0.1)
        model, _ = train_relevance(init_params(cfg, 3), pairs, hyper, vocab)
        save_checkpoint(model, d / "model.fsk")
        s_cfg = EncoderConfig(layers=1, hidden=8, heads=2, ffn_dim=16, vocab_size=vocab.size, max_seq_len=64)
        student, _ = distill(model, DistillHyper(s_cfg, texts[:64], epochs=2, seed=3), vocab)
        save_checkpoint(student, d / "student.fsk")
        mlm, _ = mlm_pretrain(init_params(cfg, 3), texts[:64], MlmHyper(epochs=2, seed=3), vocab)
        save_checkpoint(mlm, d / "mlm.fsk")
        save_index(build_index(model, vocab, cat), d / "index.fsi")
        (d / "pairs.txt").write_text("\n".join(f"{p.source_id}\t{p.anchor}\t{p.positive}" for p in synthesize_pairs(cat)))
        return {f.name: sha(f.read_bytes()) for f in sorted(d.iterdir())}

    a, b = one_run("a"), one_run("b")
    same = [k for k in a if a[k] == b[k]]
    verdict(7, a == b, f"{len(same)}/{len(a)} artifacts hash-identical across two seeded runs ({', '.join(sorted(a))})")


# -- 8 ---------------------------------------------------------------------------


def test_8_invariances(teacher, cat):
    rng = np.random.default_rng(8)
    p, v, index = teacher["params"], teacher["vocab"], teacher["index"]
    results = {}

    q, d = rng.normal(size=(16, 64)), rng.normal(size=(16, 64))
    base = contrastive_loss(q, d, seed=1)
    results["loss scale"] = max(abs(contrastive_loss(c * q, c * d, seed=1) - base) for c in (1e-3, 0.5, 3.0, 1e3))

    queries = [r.text for r in bundled_queryset("sentence")[:20]]
    vecs = forward(p, [encode(v, t) for t in queries])
    flips = sum(
        [h[0] for h in rank_vector(index, vec, None)] != [h[0] for h in rank_vector(index, c * vec, None)]
        for vec in vecs for c in (1e-3, 7.0, 1e4)
    )
    results["query scale"] = flips

    perm = rng.permutation(len(cat))
    shuffled = FeatureCatalog(tuple(cat.entries[i] for i in perm), cat.version)
    other = build_index(p, v, shuffled)
    diffs = sum(search(index, p, v, t, k=10).hits != search(other, p, v, t, k=10).hits for t in queries)
    results["catalog permutation"] = diffs

    seqs = [encode(v, t) for t in queries]
    ids = np.array([s.ids for s in seqs])
    mask = np.array([s.attention_mask for s in seqs])
    width = int(mask.sum(axis=1).max())
    short = forward(p, (ids[:, :width], mask[:, :width])).astype(np.float64)
    longer = forward(p, (ids, mask)).astype(np.float64)
    rel = float((np.linalg.norm(short - longer, axis=1) / np.linalg.norm(short, axis=1)).max())
    results["pad extension"] = rel

    ok = (results["loss scale"] <= 1e-6 and flips == 0 and diffs == 0 and rel <= 1e-5)
    verdict(8, ok, f"loss scale drift {results['loss scale']:.1e} (<= 1e-6); query-scale ranking changes {flips}; "
                   f"catalog-permutation output changes {diffs}; PAD extension rel {rel:.1e} (<= 1e-5, width {width} -> 64)")
