"""Post-norm transformer encoder with mean pooling, written directly in numpy.

The backward pass is hand-derived; every op keeps what it needs in a cache
during the forward pass. Parameters carry their own dtype, so casting a
model to float64 runs the whole computation in double precision, which is
what the finite-difference gradient checks rely on.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, FormatError, NumericError
from .tokenizer import TokenSeq, batch_arrays

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

POS_INIT_SCALE = 0.1

CHECKPOINT_MAGIC = b"FSKM"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sI6I")


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden: int = 64
    heads: int = 4
    ffn_dim: int = 256
    vocab_size: int = 1000
    max_seq_len: int = 64

    def __post_init__(self) -> None:
        for name in ("layers", "hidden", "heads", "ffn_dim", "vocab_size", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden {self.hidden} is not divisible by heads {self.heads}")
        if self.ffn_dim < self.hidden:
            raise ConfigError(f"ffn_dim {self.ffn_dim} must be >= hidden {self.hidden}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes; the order here is the checkpoint order."""
    D, F = config.hidden, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, D),
        "pos_emb": (config.max_seq_len, D),
        "emb_norm.g": (D,),
        "emb_norm.b": (D,),
    }
    for l in range(config.layers):
        p = f"layers.{l}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{proj}"] = (D, D)
            shapes[p + f"attn.b{proj}"] = (D,)
        shapes[p + "norm1.g"] = (D,)
        shapes[p + "norm1.b"] = (D,)
        shapes[p + "ffn.w1"] = (D, F)
        shapes[p + "ffn.b1"] = (F,)
        shapes[p + "ffn.w2"] = (F, D)
        shapes[p + "ffn.b2"] = (D,)
        shapes[p + "norm2.g"] = (D,)
        shapes[p + "norm2.b"] = (D,)
    return shapes


class ModelParams:
    """Named weight tensors plus the config that fixes their shapes."""

    def __init__(self, config: EncoderConfig, tensors: dict[str, np.ndarray]):
        shapes = param_shapes(config)
        if list(tensors) != list(shapes):
            missing = set(shapes) ^ set(tensors)
            if missing:
                raise FormatError(f"parameter names do not match config: {sorted(missing)[:4]}")
            tensors = {k: tensors[k] for k in shapes}
        for name, shape in shapes.items():
            if tensors[name].shape != shape:
                raise FormatError(f"{name}: shape {tensors[name].shape} != expected {shape}")
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["tok_emb"].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def to_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in self.tensors.values())

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors.values())


def init_params(config: EncoderConfig, seed: int = 0, pos_scale: float = POS_INIT_SCALE) -> ModelParams:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains.

    Position embeddings get ``pos_scale`` times the Xavier range. At full
    range the small square position table starts out larger than the token
    table, and the model learns to match on position patterns instead of words.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            if name == "pos_emb":
                limit *= pos_scale
            tensors[name] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
        elif name.endswith(".g"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return ModelParams(config, tensors)


def param_count(config: EncoderConfig) -> tuple[int, int]:
    """(number of parameters, checkpoint size in bytes)."""
    count = sum(math.prod(s) for s in param_shapes(config).values())
    return count, _HEADER.size + 4 * count


# -- layer primitives ------------------------------------------------------


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _layer_norm_back(dy, cache):
    xhat, rstd, g = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * g
    n = xhat.shape[-1]
    dx = rstd / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_back(dy, cache):
    x, t = cache
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _linear_back(dy, x, w):
    """Gradients of y = x @ w + b for inputs of shape (..., in)."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, x2.T @ dy2, dy2.sum(axis=0)


def _split_heads(x, heads):
    B, T, D = x.shape
    return x.reshape(B, T, heads, D // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * d)


def _attention(x, keymask, p, prefix, heads):
    wq, wk, wv, wo = (p[prefix + f"attn.w{c}"] for c in "qkvo")
    q = _split_heads(x @ wq + p[prefix + "attn.bq"], heads)
    k = _split_heads(x @ wk + p[prefix + "attn.bk"], heads)
    v = _split_heads(x @ wv + p[prefix + "attn.bv"], heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    scores = np.where(keymask[:, None, None, :], scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(axis=-1, keepdims=True)
    ctx = _merge_heads(probs @ v)
    out = ctx @ wo + p[prefix + "attn.bo"]
    return out, (x, q, k, v, probs, ctx, scale)


def _attention_back(dout, cache, p, prefix, grads, heads):
    x, q, k, v, probs, ctx, scale = cache
    dctx, grads[prefix + "attn.wo"], grads[prefix + "attn.bo"] = _linear_back(dout, ctx, p[prefix + "attn.wo"])
    dctx = _split_heads(dctx, heads)
    dprobs = dctx @ v.transpose(0, 1, 3, 2)
    dv = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dscores *= scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dx = np.zeros_like(x)
    for c, dh in (("q", dq), ("k", dk), ("v", dv)):
        dproj = _merge_heads(dh)
        dxi, grads[prefix + f"attn.w{c}"], grads[prefix + f"attn.b{c}"] = _linear_back(
            dproj, x, p[prefix + f"attn.w{c}"]
        )
        dx += dxi
    return dx


# -- model -----------------------------------------------------------------


def _check_finite(arr, where: str, layer: int) -> None:
    if not np.isfinite(arr).all():
        err = NumericError(f"non-finite activation in layer {layer} ({where})")
        err.layer = layer
        raise err


def _as_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        return batch
    return batch_arrays(list(batch))


def _dropout(x, rate, rng):
    if not rate or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def forward_hidden(
    params: ModelParams,
    ids: np.ndarray,
    mask: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Final hidden states (B, T, D) and the cache needed by ``backward_hidden``.

    ``dropout`` applies to the embedding output and to each sublayer output
    before its residual add; it is active only when ``rng`` is given.
    """
    cfg = params.config
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise ConfigError(f"sequence length {T} exceeds max_seq_len {cfg.max_seq_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ConfigError(f"token id out of range for vocab_size {cfg.vocab_size}")
    keymask = mask.astype(bool)
    x0 = params["tok_emb"][ids] + params["pos_emb"][:T]
    x, emb_cache = _layer_norm(x0, params["emb_norm.g"], params["emb_norm.b"])
    x, emb_drop = _dropout(x, dropout, rng)
    layer_caches = []
    for l in range(cfg.layers):
        p = f"layers.{l}."
        a, attn_cache = _attention(x, keymask, params, p, cfg.heads)
        a, drop1 = _dropout(a, dropout, rng)
        x1, n1 = _layer_norm(x + a, params[p + "norm1.g"], params[p + "norm1.b"])
        h = x1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        hg, gelu_cache = _gelu(h)
        f = hg @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        f, drop2 = _dropout(f, dropout, rng)
        x, n2 = _layer_norm(x1 + f, params[p + "norm2.g"], params[p + "norm2.b"])
        _check_finite(x, "post-norm output", l)
        layer_caches.append((attn_cache, n1, x1, hg, gelu_cache, n2, drop1, drop2))
    return x, (ids, emb_cache, emb_drop, layer_caches)


def backward_hidden(params: ModelParams, dh: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/d(final hidden states)."""
    cfg = params.config
    ids, emb_cache, emb_drop, layer_caches = cache
    grads: dict[str, np.ndarray] = {}
    dx = dh
    for l in reversed(range(cfg.layers)):
        p = f"layers.{l}."
        attn_cache, n1, x1, hg, gelu_cache, n2, drop1, drop2 = layer_caches[l]
        dsum2, grads[p + "norm2.g"], grads[p + "norm2.b"] = _layer_norm_back(dx, n2)
        df = dsum2 if drop2 is None else dsum2 * drop2
        dhg, grads[p + "ffn.w2"], grads[p + "ffn.b2"] = _linear_back(df, hg, params[p + "ffn.w2"])
        dpre = _gelu_back(dhg, gelu_cache)
        dx1, grads[p + "ffn.w1"], grads[p + "ffn.b1"] = _linear_back(dpre, x1, params[p + "ffn.w1"])
        dx1 = dx1 + dsum2
        dsum1, grads[p + "norm1.g"], grads[p + "norm1.b"] = _layer_norm_back(dx1, n1)
        da = dsum1 if drop1 is None else dsum1 * drop1
        dx = dsum1 + _attention_back(da, attn_cache, params, p, grads, cfg.heads)
    if emb_drop is not None:
        dx = dx * emb_drop
    dx0, grads["emb_norm.g"], grads["emb_norm.b"] = _layer_norm_back(dx, emb_cache)
    T = ids.shape[1]
    dtok = np.zeros_like(params["tok_emb"])
    np.add.at(dtok, ids.reshape(-1), dx0.reshape(-1, dx0.shape[-1]))
    dpos = np.zeros_like(params["pos_emb"])
    dpos[:T] = dx0.sum(axis=0)
    grads["tok_emb"] = dtok
    grads["pos_emb"] = dpos
    return {k: grads[k] for k in params}


def mean_pool(h: np.ndarray, mask: np.ndarray) -> np.ndarray:
    m = mask.astype(h.dtype)[..., None]
    return (h * m).sum(axis=1) / m.sum(axis=1)


def _mean_pool_back(dpooled: np.ndarray, mask: np.ndarray) -> np.ndarray:
    m = mask.astype(dpooled.dtype)
    return dpooled[:, None, :] * (m / m.sum(axis=1, keepdims=True))[..., None]


def forward(params: ModelParams, batch: Sequence[TokenSeq] | tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Mean-pooled, unnormalized sentence embeddings of shape (B, D)."""
    ids, mask = _as_arrays(batch)
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are caught per layer
        h, _ = forward_hidden(params, ids, mask)
    return mean_pool(h, mask)


LossFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


def grad(
    params: ModelParams,
    batch,
    loss_fn: LossFn,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and parameter gradients for a loss defined on pooled embeddings.

    ``loss_fn`` maps the (B, D) embedding matrix to ``(loss, dloss/dembeddings)``.
    """
    ids, mask = _as_arrays(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        h, cache = forward_hidden(params, ids, mask, dropout, rng)
    emb = mean_pool(h, mask)
    loss, demb = loss_fn(emb)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    demb = np.asarray(demb, dtype=h.dtype)
    return float(loss), backward_hidden(params, _mean_pool_back(demb, mask), cache)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    cfg = params.config
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        cfg.layers, cfg.hidden, cfg.heads, cfg.ffn_dim, cfg.vocab_size, cfg.max_seq_len,
    )
    Path(path).write_bytes(header + params.to_bytes())


def load_checkpoint(path: str | Path, expect: EncoderConfig | None = None) -> ModelParams:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a checkpoint header")
    magic, version, *dims = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        cfg = EncoderConfig(*dims)
    except ConfigError as exc:
        raise FormatError(f"{path}: invalid config block ({exc})") from None
    if expect is not None and cfg != expect:
        raise FormatError(f"{path}: checkpoint config {cfg} does not match expected {expect}")
    count, size = param_count(cfg)
    if len(data) != size:
        raise FormatError(f"{path}: expected {size} bytes for {cfg}, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    tensors: dict[str, np.ndarray] = {}
    pos = 0
    for name, shape in param_shapes(cfg).items():
        n = math.prod(shape)
        tensors[name] = flat[pos : pos + n].reshape(shape).astype(np.float32)
        pos += n
    params = ModelParams(cfg, tensors)
    if not params.all_finite():
        raise FormatError(f"{path}: checkpoint contains non-finite values")
    return params
