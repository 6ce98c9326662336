"""Reference implementations the package is checked against.

These are written independently of the package code, favouring obviousness
over speed.
"""

import math

import numpy as np

from featsearch.encoder import grad


def numeric_grads(params, batch, loss_fn, h=1e-5):
    """Central finite differences of ``loss_fn(forward(params, batch))`` for every parameter element."""
    out = {}
    for name, w in params.items():
        g = np.zeros_like(w)
        flat, gflat = w.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = grad_free_loss(params, batch, loss_fn)
            flat[i] = old - h
            down = grad_free_loss(params, batch, loss_fn)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def grad_free_loss(params, batch, loss_fn):
    from featsearch.encoder import forward

    return loss_fn(forward(params, batch))[0]


def relative_errors(params, batch, loss_fn, h=1e-5, floor=1e-6):
    """Per-tensor ||analytic - numeric|| / max(||analytic||, ||numeric||, floor * ||whole gradient||).

    The floor matters only for tensors whose true gradient is exactly zero
    (the attention key bias, by softmax shift invariance); there the
    finite-difference value is pure rounding noise.
    """
    _, analytic = grad(params, batch, loss_fn)
    numeric = numeric_grads(params, batch, loss_fn, h)
    total = np.sqrt(sum(float(np.sum(g * g)) for g in analytic.values()))
    errs = {}
    for name in analytic:
        a, n = analytic[name], numeric[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(n), floor * total)
        errs[name] = float(np.linalg.norm(a - n) / denom)
    return errs


def brute_force_topk(ids, matrix, query, k):
    """Cosine ranking by plain Python sorting with (−score, id) keys."""
    q = np.asarray(query, dtype=np.float64)
    q = q / math.sqrt(float(q @ q))
    rows = [(-(float(np.dot(matrix[i].astype(np.float64), q))), fid) for i, fid in enumerate(ids)]
    rows.sort()
    return [fid for _, fid in rows[:k]]


def bm25_by_hand(docs, query, k1=1.2, b=0.75):
    """Textbook BM25 with non-negative IDF; ``docs`` maps id -> token list."""
    n_docs = len(docs)
    avgdl = sum(len(t) for t in docs.values()) / n_docs
    scores = {}
    for fid, toks in docs.items():
        s = 0.0
        for term in query:
            tf = toks.count(term)
            if tf == 0:
                continue
            df = sum(term in t for t in docs.values())
            idf = max(0.0, math.log((n_docs - df + 0.5) / (df + 0.5)))
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks) / avgdl))
        if any(term in toks for term in query):
            scores[fid] = s
    return scores
