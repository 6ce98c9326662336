"""Training loops: contrastive relevance training, embedding distillation, masked-LM pretraining."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import TrainingPair
from .encoder import (
    EncoderConfig,
    ModelParams,
    backward_hidden,
    forward,
    forward_hidden,
    grad,
    init_params,
)
from .errors import ConfigError, NumericError, TrainingError
from .tokenizer import CLS, MASK, NUM_SPECIALS, PAD, SEP, Vocab, encode

log = logging.getLogger(__name__)


@dataclass
class ContrastiveHyper:
    batch_size: int = 16
    negatives_per_positive: int = 4
    temperature: float = 0.05
    learning_rate: float = 1e-3
    epochs: int = 60
    seed: int = 0
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be >= 1")
        if self.batch_size < self.negatives_per_positive + 1:
            raise ConfigError(
                f"batch_size {self.batch_size} must be >= negatives_per_positive + 1 "
                f"({self.negatives_per_positive + 1})"
            )


@dataclass
class DistillHyper:
    student_config: EncoderConfig
    corpus: list[str]
    learning_rate: float = 1e-3
    epochs: int = 40
    seed: int = 0
    batch_size: int = 32
    projection: bool | None = None  # None: only when hidden sizes differ


@dataclass
class MlmHyper:
    batch_size: int = 16
    learning_rate: float = 1e-3
    epochs: int = 10
    seed: int = 0
    mask_rate: float = 0.15


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_loss: float
    wall_seconds: float
    seed: int
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def hyper_from_json(cls, source: str | Path | dict, **overrides):
    """Build a hyperparameter dataclass from a JSON file or dict, ignoring unrelated keys."""
    raw = source if isinstance(source, dict) else json.loads(Path(source).read_text(encoding="utf-8"))
    names = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in raw.items() if k in names}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)


class Adam:
    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update of ``tensors``."""
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name, g in grads.items():
            w = tensors[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            w -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(w.dtype)


# -- contrastive objective -------------------------------------------------


def sample_negatives(
    n: int, k: int, rng: np.random.Generator, groups: Sequence | None = None
) -> np.ndarray:
    """Pick ``k`` in-batch negative columns for each of ``n`` rows.

    Rows never pick themselves. When ``groups`` is given, rows sharing a group
    (pairs derived from the same feature) are avoided while enough other
    candidates exist.
    """
    if n < k + 1:
        raise ConfigError(f"batch of {n} cannot supply {k} negatives per positive")
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        if groups is not None:
            preferred = [j for j in others if groups[j] != groups[i]]
            if len(preferred) >= k:
                others = preferred
            else:
                rest = [j for j in others if groups[j] == groups[i]]
                rng.shuffle(rest)
                others = preferred + rest[: k - len(preferred)]
        out[i] = rng.choice(others, size=k, replace=False)
    return out


def _normalize(x):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / norm, norm


def _normalize_back(dxhat, xhat, norm):
    return (dxhat - xhat * (xhat * dxhat).sum(axis=-1, keepdims=True)) / norm


def contrastive_loss_and_grad(q, d, negatives, temperature):
    """InfoNCE over cosine/temperature with explicit negative columns.

    Row ``i`` scores its positive ``d[i]`` against ``d[negatives[i]]``.
    Returns ``(loss, dq, dd)``.
    """
    qn, qnorm = _normalize(q)
    dn, dnorm = _normalize(d)
    n = q.shape[0]
    cand = np.concatenate([np.arange(n)[:, None], negatives], axis=1)
    logits = np.einsum("id,icd->ic", qn, dn[cand]) / temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    loss = float(np.mean(-np.log(probs[:, 0])))

    dlogits = probs.copy()
    dlogits[:, 0] -= 1.0
    dlogits /= n * temperature
    dqn = np.einsum("ic,icd->id", dlogits, dn[cand])
    ddn = np.zeros_like(dn)
    np.add.at(ddn, cand.reshape(-1), (dlogits[:, :, None] * qn[:, None, :]).reshape(-1, qn.shape[1]))
    return loss, _normalize_back(dqn, qn, qnorm), _normalize_back(ddn, dn, dnorm)


def contrastive_loss(
    query_embeddings,
    doc_embeddings,
    negatives_per_positive: int = 4,
    temperature: float = 0.05,
    seed: int = 0,
    negatives: np.ndarray | None = None,
) -> float:
    q = np.asarray(query_embeddings, dtype=np.float64)
    d = np.asarray(doc_embeddings, dtype=np.float64)
    if q.shape != d.shape:
        raise ConfigError(f"query and document batches differ in shape: {q.shape} vs {d.shape}")
    if negatives is None:
        negatives = sample_negatives(len(q), negatives_per_positive, np.random.default_rng(seed))
    return contrastive_loss_and_grad(q, d, negatives, temperature)[0]


def _encode_all(vocab: Vocab, texts: Sequence[str], max_len: int) -> tuple[np.ndarray, np.ndarray]:
    seqs = [encode(vocab, t, max_len) for t in texts]
    return np.array([s.ids for s in seqs]), np.array([s.attention_mask for s in seqs])


def _take(ids, mask, rows):
    sub_ids, sub_mask = ids[rows], mask[rows]
    width = int(sub_mask.sum(axis=1).max())
    return sub_ids[:, :width], sub_mask[:, :width]


def _stack(a, b):
    """Concatenate two (ids, mask) batches, padding to the wider one."""
    width = max(a[0].shape[1], b[0].shape[1])
    pad = lambda x: np.pad(x, ((0, 0), (0, width - x.shape[1])))  # noqa: E731
    return np.concatenate([pad(a[0]), pad(b[0])]), np.concatenate([pad(a[1]), pad(b[1])])


def _batches(n: int, size: int, min_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[i : i + size] for i in range(0, n, size)]
    if len(chunks) > 1 and len(chunks[-1]) < min_size:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train_relevance(
    params: ModelParams,
    pairs: Sequence[TrainingPair],
    hyper: ContrastiveHyper,
    vocab: Vocab,
) -> tuple[ModelParams, TrainReport]:
    """Siamese contrastive training: one parameter set encodes both sides of every pair.

    Even epochs treat the anchor as the query, odd epochs the positive.
    """
    if len(pairs) < hyper.batch_size:
        raise ConfigError(f"need at least batch_size={hyper.batch_size} pairs, got {len(pairs)}")
    start = time.perf_counter()
    rng = np.random.default_rng(hyper.seed)
    params = params.copy()
    opt = Adam(hyper.learning_rate)
    max_len = params.config.max_seq_len
    anchors = _encode_all(vocab, [p.anchor for p in pairs], max_len)
    positives = _encode_all(vocab, [p.positive for p in pairs], max_len)
    groups = [p.source_id for p in pairs]
    k = hyper.negatives_per_positive

    epoch_losses: list[float] = []
    for epoch in range(hyper.epochs):
        side_q, side_d = (anchors, positives) if epoch % 2 == 0 else (positives, anchors)
        losses = []
        for rows in _batches(len(pairs), hyper.batch_size, k + 1, rng):
            negatives = sample_negatives(len(rows), k, rng, [groups[r] for r in rows])
            batch = _stack(_take(*side_q, rows), _take(*side_d, rows))
            n = len(rows)

            def loss_fn(emb):
                loss, dq, dd = contrastive_loss_and_grad(emb[:n], emb[n:], negatives, hyper.temperature)
                return loss, np.concatenate([dq, dd])

            try:
                loss, grads = grad(params, batch, loss_fn, hyper.dropout, rng if hyper.dropout else None)
            except NumericError as exc:
                raise TrainingError(f"training diverged in epoch {epoch}: {exc}") from exc
            opt.step(params.tensors, grads)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        if not math.isfinite(epoch_losses[-1]) or not params.all_finite():
            raise TrainingError(f"training diverged in epoch {epoch}")
        log.debug("relevance epoch %d loss %.4f", epoch, epoch_losses[-1])

    report = TrainReport(epoch_losses, epoch_losses[-1], time.perf_counter() - start, hyper.seed)
    return params, report


# -- distillation ----------------------------------------------------------


def embed_texts(params: ModelParams, vocab: Vocab, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
    """Pooled embeddings for ``texts``, computed in fixed-size chunks."""
    ids, mask = _encode_all(vocab, texts, params.config.max_seq_len)
    out = [forward(params, _take(ids, mask, np.arange(i, min(i + batch_size, len(texts)))))
           for i in range(0, len(texts), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, params.config.hidden), params.dtype)


def _mse(student_emb, target, proj):
    """MSE between (optionally projected) student embeddings and frozen targets."""
    pred = student_emb @ proj if proj is not None else student_emb
    diff = pred - target
    loss = float(np.mean(diff * diff))
    dpred = 2.0 * diff / diff.size
    demb = dpred @ proj.T if proj is not None else dpred
    dproj = student_emb.T @ dpred if proj is not None else None
    return loss, demb, dproj


def distill(
    teacher: ModelParams,
    hyper: DistillHyper,
    vocab: Vocab,
    student: ModelParams | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train a student to reproduce the frozen teacher's pooled embeddings under MSE.

    When the hidden sizes differ a linear map from student to teacher space
    is learned alongside and dropped at the end.
    """
    if not hyper.corpus:
        raise ConfigError("distillation corpus is empty")
    s_cfg, t_cfg = hyper.student_config, teacher.config
    use_proj = hyper.projection if hyper.projection is not None else s_cfg.hidden != t_cfg.hidden
    if s_cfg.hidden != t_cfg.hidden and not use_proj:
        raise ConfigError(
            f"student hidden {s_cfg.hidden} != teacher hidden {t_cfg.hidden} and projection disabled"
        )
    if s_cfg.vocab_size != t_cfg.vocab_size:
        raise ConfigError("student and teacher must share the vocabulary")
    start = time.perf_counter()
    rng = np.random.default_rng(hyper.seed)
    if student is None:
        student = init_params(s_cfg, hyper.seed)
    elif student.config != s_cfg:
        raise ConfigError("initial student params do not match student_config")
    student = student.copy()

    corpus = list(hyper.corpus)
    targets = embed_texts(teacher, vocab, corpus).astype(student.dtype)
    ids, mask = _encode_all(vocab, corpus, min(s_cfg.max_seq_len, t_cfg.max_seq_len))
    trainable = dict(student.tensors)
    if use_proj:
        limit = math.sqrt(6.0 / (s_cfg.hidden + t_cfg.hidden))
        trainable["proj"] = rng.uniform(-limit, limit, (s_cfg.hidden, t_cfg.hidden)).astype(student.dtype)
    opt = Adam(hyper.learning_rate)

    def full_mse() -> float:
        emb = embed_texts(student, vocab, corpus)
        return _mse(emb, targets, trainable.get("proj"))[0]

    initial = full_mse()
    epoch_losses: list[float] = []
    for epoch in range(hyper.epochs):
        losses = []
        for rows in _batches(len(corpus), hyper.batch_size, 1, rng):
            batch = _take(ids, mask, rows)
            # same arrays for teacher and student, so identical models give exactly zero gradient
            target = forward(teacher, batch).astype(student.dtype)
            proj = trainable.get("proj")
            holder = {}

            def loss_fn(emb):
                loss, demb, dproj = _mse(emb, target, proj)
                holder["proj"] = dproj
                return loss, demb

            try:
                loss, grads = grad(student, batch, loss_fn)
            except NumericError as exc:
                raise TrainingError(f"distillation diverged in epoch {epoch}: {exc}") from exc
            if use_proj:
                grads["proj"] = holder["proj"]
            opt.step(trainable, grads)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        if not math.isfinite(epoch_losses[-1]):
            raise TrainingError(f"distillation diverged in epoch {epoch}")
        log.debug("distill epoch %d mse %.6f", epoch, epoch_losses[-1])

    final = full_mse()
    report = TrainReport(
        epoch_losses,
        epoch_losses[-1] if epoch_losses else initial,
        time.perf_counter() - start,
        hyper.seed,
        {"initial_mse": initial, "final_mse": final, "projection": bool(use_proj)},
    )
    return student, report


# -- masked-LM pretraining -------------------------------------------------


def mask_tokens(ids, mask, rng, vocab_size: int, rate: float = 0.15):
    """Dynamic masking: returns (corrupted ids, selected (row, col) positions, original ids there).

    Of each sequence's non-special positions, ``rate`` (at least one) are
    selected; of those 80% become MASK, 10% a random token, 10% stay.
    """
    corrupted = ids.copy()
    rows, cols = [], []
    special = (ids == PAD) | (ids == CLS) | (ids == SEP) | (mask == 0)
    for r in range(ids.shape[0]):
        cand = np.flatnonzero(~special[r])
        if cand.size == 0:
            continue
        n_sel = max(1, int(round(rate * cand.size)))
        chosen = np.sort(rng.choice(cand, size=n_sel, replace=False))
        rows.extend([r] * n_sel)
        cols.extend(chosen.tolist())
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    labels = ids[rows, cols]
    action = rng.random(len(rows))
    to_mask = action < 0.8
    to_random = (action >= 0.8) & (action < 0.9)
    corrupted[rows[to_mask], cols[to_mask]] = MASK
    corrupted[rows[to_random], cols[to_random]] = rng.integers(NUM_SPECIALS, vocab_size, int(to_random.sum()))
    return corrupted, (rows, cols), labels


def _mlm_step(params, ids, mask, rng, rate):
    corrupted, (rows, cols), labels = mask_tokens(ids, mask, rng, params.config.vocab_size, rate)
    if len(rows) == 0:
        return None
    h, cache = forward_hidden(params, corrupted, mask)
    emb = params["tok_emb"]
    hm = h[rows, cols]
    logits = hm @ emb.T
    logits = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    n = len(labels)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-30)))
    correct = int((probs.argmax(axis=1) == labels).sum())
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dh = np.zeros_like(h)
    np.add.at(dh, (rows, cols), dlogits @ emb)
    grads = backward_hidden(params, dh, cache)
    grads["tok_emb"] = grads["tok_emb"] + dlogits.T @ hm
    return loss, grads, correct, n


def mlm_pretrain(
    params: ModelParams, corpus: Sequence[str], hyper: MlmHyper, vocab: Vocab
) -> tuple[ModelParams, TrainReport]:
    """Masked-token pretraining with a head tied to the token embeddings; the head has no extra weights."""
    if not corpus:
        raise ConfigError("pretraining corpus is empty")
    start = time.perf_counter()
    rng = np.random.default_rng(hyper.seed)
    params = params.copy()
    opt = Adam(hyper.learning_rate)
    ids, mask = _encode_all(vocab, corpus, params.config.max_seq_len)
    epoch_losses: list[float] = []
    accuracy = 0.0
    for epoch in range(hyper.epochs):
        losses, correct, total = [], 0, 0
        for rows in _batches(len(corpus), hyper.batch_size, 1, rng):
            step = _mlm_step(params, *_take(ids, mask, rows), rng, hyper.mask_rate)
            if step is None:
                continue
            loss, grads, c, n = step
            if not math.isfinite(loss):
                raise TrainingError(f"pretraining diverged in epoch {epoch}")
            opt.step(params.tensors, grads)
            losses.append(loss)
            correct += c
            total += n
        if losses:
            epoch_losses.append(float(np.mean(losses)))
            accuracy = correct / total
    report = TrainReport(
        epoch_losses,
        epoch_losses[-1] if epoch_losses else 0.0,
        time.perf_counter() - start,
        hyper.seed,
        {"masked_accuracy": accuracy},
    )
    return params, report
