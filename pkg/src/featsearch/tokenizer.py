"""Byte-level BPE tokenizer.

Ids 0-4 are the special tokens, ids 5-260 the 256 raw bytes, and every id
from 261 upward is a learned merge. Text is lowercased and pre-split into
words (with their leading space attached) before merging, so merges never
cross word boundaries and a word at the start of a string tokenizes
differently from the same word after a space.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, FormatError

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIALS = {"<pad>": PAD, "<unk>": UNK, "<cls>": CLS, "<sep>": SEP, "<mask>": MASK}
NUM_SPECIALS = len(SPECIALS)
BYTE_OFFSET = NUM_SPECIALS
MIN_VOCAB = NUM_SPECIALS + 256
DEFAULT_MAX_LEN = 64
VOCAB_FILE_VERSION = 1

_WORD_RE = re.compile(r" ?[^\W_]+| ?[^\s\w]+| ?_+|\s+(?!\S)|\s+")


def _pretokenize(text: str) -> list[bytes]:
    return [w.encode("utf-8") for w in _WORD_RE.findall(text.lower())]


@dataclass(frozen=True)
class Vocab:
    merges: tuple[tuple[int, int], ...]
    _ranks: dict = field(init=False, repr=False, compare=False)
    _pieces: tuple = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pieces: list[bytes] = [b""] * NUM_SPECIALS + [bytes([b]) for b in range(256)]
        ranks: dict[tuple[int, int], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            if not (0 <= a < len(pieces) and 0 <= b < len(pieces)) or a < BYTE_OFFSET or b < BYTE_OFFSET:
                raise FormatError(f"merge #{rank} references invalid ids ({a}, {b})")
            ranks[(a, b)] = rank
            pieces.append(pieces[a] + pieces[b])
        object.__setattr__(self, "_ranks", ranks)
        object.__setattr__(self, "_pieces", tuple(pieces))
        object.__setattr__(self, "_cache", {})

    @property
    def size(self) -> int:
        return MIN_VOCAB + len(self.merges)

    def __len__(self) -> int:
        return self.size

    def piece(self, token_id: int) -> bytes:
        return self._pieces[token_id]

    @property
    def token_to_id(self) -> dict[bytes | str, int]:
        table: dict[bytes | str, int] = dict(SPECIALS)
        for i in range(BYTE_OFFSET, self.size):
            table[self._pieces[i]] = i
        return table

    def to_text(self) -> str:
        lines = [f"#fsk-vocab version={VOCAB_FILE_VERSION} size={self.size}"]
        lines.extend(f"{a} {b}" for a, b in self.merges)
        return "\n".join(lines) + "\n"

    def to_bytes(self) -> bytes:
        return self.to_text().encode("utf-8")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_text(cls, text: str) -> "Vocab":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#fsk-vocab "):
            raise FormatError("missing vocab header line")
        header = dict(kv.split("=", 1) for kv in lines[0].split()[1:] if "=" in kv)
        if header.get("version") != str(VOCAB_FILE_VERSION):
            raise FormatError(f"unsupported vocab version {header.get('version')!r}")
        merges = []
        for n, line in enumerate(lines[1:], 2):
            parts = line.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise FormatError(f"vocab line {n}: expected two integer ids")
            merges.append((int(parts[0]), int(parts[1])))
        vocab = cls(tuple(merges))
        if str(vocab.size) != header.get("size"):
            raise FormatError(f"vocab header size {header.get('size')} != {vocab.size}")
        return vocab

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def build_vocab(texts: Sequence[str], target_size: int) -> Vocab:
    """Learn byte-pair merges until the vocabulary reaches ``target_size``.

    The most frequent adjacent pair wins; ties go to the pair first seen
    when scanning the corpus left to right. Stops early once no pair occurs
    at least twice.
    """
    if target_size < MIN_VOCAB:
        raise ConfigError(f"target_size must be >= {MIN_VOCAB}, got {target_size}")
    if not texts:
        raise ConfigError("cannot build a vocabulary from no texts")

    word_freq: Counter[bytes] = Counter()
    for t in texts:
        word_freq.update(_pretokenize(t))
    words = [[b + BYTE_OFFSET for b in w] for w in word_freq]
    freqs = list(word_freq.values())

    merges: list[tuple[int, int]] = []
    next_id = MIN_VOCAB
    while next_id < target_size:
        counts: dict[tuple[int, int], int] = {}
        for w, f in zip(words, freqs):
            for pair in zip(w, w[1:]):
                counts[pair] = counts.get(pair, 0) + f
        if not counts:
            break
        best, best_n = None, 0
        for pair, n in counts.items():  # insertion order == scan order
            if n > best_n:
                best, best_n = pair, n
        if best_n < 2 and merges:
            break
        merges.append(best)
        for i, w in enumerate(words):
            if len(w) > 1:
                words[i] = _apply_merge(w, best, next_id)
        next_id += 1
    return Vocab(tuple(merges))


def _apply_merge(word: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return out


def _encode_word(vocab: Vocab, word: bytes) -> tuple[int, ...]:
    hit = vocab._cache.get(word)
    if hit is not None:
        return hit
    ids = [b + BYTE_OFFSET for b in word]
    ranks = vocab._ranks
    while len(ids) > 1:
        best_rank, best_i = None, -1
        for i, pair in enumerate(zip(ids, ids[1:])):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank, best_i = r, i
        if best_rank is None:
            break
        ids = _apply_merge(ids, vocab.merges[best_rank], MIN_VOCAB + best_rank)
    out = tuple(ids)
    vocab._cache[word] = out
    return out


def tokenize(vocab: Vocab, text: str) -> list[int]:
    """Subword ids for ``text`` without CLS/SEP or padding."""
    out: list[int] = []
    for w in _pretokenize(text):
        out.extend(_encode_word(vocab, w))
    return out


def encode(vocab: Vocab, text: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSeq:
    if max_len < 3:
        raise ConfigError(f"max_len must be >= 3, got {max_len}")
    body = tokenize(vocab, text)[: max_len - 2]
    ids = [CLS, *body, SEP]
    n = len(ids)
    return TokenSeq(tuple(ids + [PAD] * (max_len - n)), tuple([1] * n + [0] * (max_len - n)))


def decode(vocab: Vocab, ids: Iterable[int]) -> str:
    buf = bytearray()
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise ValueError(f"token id {i} out of range for vocab of size {vocab.size}")
        if i >= BYTE_OFFSET:
            buf += vocab.piece(i)
    return buf.decode("utf-8", errors="replace")


def batch_arrays(seqs: Sequence[TokenSeq], trim: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into (ids, mask) int arrays, trimming trailing all-PAD columns."""
    ids = np.array([s.ids for s in seqs], dtype=np.int64)
    mask = np.array([s.attention_mask for s in seqs], dtype=np.int64)
    if trim and len(seqs):
        width = int(mask.sum(axis=1).max())
        ids, mask = ids[:, :width], mask[:, :width]
    return ids, mask


def encode_batch(vocab: Vocab, texts: Sequence[str], max_len: int = DEFAULT_MAX_LEN) -> tuple[np.ndarray, np.ndarray]:
    return batch_arrays([encode(vocab, t, max_len) for t in texts])
