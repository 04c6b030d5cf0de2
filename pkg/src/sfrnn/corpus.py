"""Byte corpora, 90/5/5 splits, seeded batch cursors and one-hot windows.

Random draws come from SplitMix64 so that any implementation seeded with the
same integer produces the same lane offsets and initial weights:

    state <- (state + 0x9E3779B97F4A7C15) mod 2**64
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    return z ^ (z >> 31)

Integers in ``[lo, hi]`` are ``lo + next_u64() % (hi - lo + 1)``; floats in
``[0, 1)`` are ``(next_u64() >> 11) * 2**-53``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

VOCAB_SIZE = 256
MIN_CORPUS_BYTES = 40

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


class CorpusError(ValueError):
    pass


class ResampleNeeded(RuntimeError):
    """The next window would cross a lane's sequence boundary."""


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_array(self, n: int) -> np.ndarray:
        """``n`` consecutive ``random()`` draws, vectorised (the stream is counter based)."""
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK
        return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class Corpus:
    data: np.ndarray  # uint8
    train_range: tuple[int, int]
    valid_range: tuple[int, int]
    test_range: tuple[int, int]

    def split(self, name: str) -> tuple[int, int]:
        try:
            return {"train": self.train_range, "valid": self.valid_range, "test": self.test_range}[name]
        except KeyError:
            raise CorpusError(f"unknown split {name!r}; expected train, valid or test") from None

    def __len__(self) -> int:
        return len(self.data)


def split_sizes(total: int) -> tuple[int, int, int]:
    train = (total * 90) // 100
    valid = (total * 5) // 100
    return train, valid, total - train - valid


def from_bytes(raw: bytes) -> Corpus:
    if len(raw) < MIN_CORPUS_BYTES:
        raise CorpusError(f"corpus has {len(raw)} bytes; at least {MIN_CORPUS_BYTES} are required")
    data = np.frombuffer(bytes(raw), dtype=np.uint8)
    ntrain, nvalid, _ = split_sizes(len(data))
    return Corpus(
        data=data,
        train_range=(0, ntrain),
        valid_range=(ntrain, ntrain + nvalid),
        test_range=(ntrain + nvalid, len(data)),
    )


def load(path: str | os.PathLike, max_bytes: int | None = None) -> Corpus:
    """Read a raw byte file (optionally only its first ``max_bytes``) and split it 90/5/5."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read() if max_bytes is None else fh.read(max_bytes)
    except FileNotFoundError:
        raise CorpusError(f"corpus file not found: {path}") from None
    return from_bytes(raw)


def encode(byte: int) -> int:
    return int(byte)


def decode(index: int) -> int:
    return int(index)


def one_hot(indices: np.ndarray, size: int = VOCAB_SIZE) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.intp)
    out = np.zeros(idx.shape + (size,), dtype=np.float64)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


@dataclass
class BatchCursor:
    batch: int
    seq_len: int = 10000
    window: int = 100
    seed: int = 0
    lane_starts: np.ndarray = field(default=None, repr=False)
    lane_pos: np.ndarray = field(default=None, repr=False)
    split: tuple[int, int] | None = None

    def __post_init__(self):
        if self.batch < 1 or self.window < 1 or self.seq_len < self.window:
            raise ValueError(f"invalid cursor geometry B={self.batch} L={self.seq_len} S={self.window}")
        self.rng = SplitMix64(self.seed)
        if self.lane_starts is None:
            self.lane_starts = np.zeros(self.batch, dtype=np.int64)
            self.lane_pos = self.lane_starts.copy()

    @property
    def needs_resample(self) -> bool:
        if self.split is None:
            return True
        return bool(np.any(self.lane_pos + self.window > self.lane_starts + self.seq_len))


def resample(cursor: BatchCursor, corpus: Corpus, split: str = "train") -> BatchCursor:
    """Draw fresh lane starts uniformly from ``[begin, end - L - 1]``, in lane order."""
    begin, end = corpus.split(split)
    need = cursor.seq_len + 1
    if end - begin < need:
        raise CorpusError(f"{split} split has {end - begin} bytes; sequence length {cursor.seq_len} needs at least {need}")
    hi = end - cursor.seq_len - 1
    cursor.lane_starts = np.array([cursor.rng.randint(begin, hi) for _ in range(cursor.batch)], dtype=np.int64)
    cursor.lane_pos = cursor.lane_starts.copy()
    cursor.split = (begin, end)
    return cursor


def next_indices(cursor: BatchCursor, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """Byte indices for the next window: ``inputs[t, i]`` and ``targets[t, i]``, both S x B."""
    if cursor.needs_resample:
        raise ResampleNeeded("window would cross a lane's sequence boundary; resample the batch")
    offs = cursor.lane_pos[None, :] + np.arange(cursor.window)[:, None]
    inputs = corpus.data[offs].astype(np.intp)
    targets = corpus.data[offs + 1].astype(np.intp)
    cursor.lane_pos = cursor.lane_pos + cursor.window
    return inputs, targets


def next_window(cursor: BatchCursor, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """One-hot inputs (S x B x 256) and next-byte target indices (S x B)."""
    inputs, targets = next_indices(cursor, corpus)
    return one_hot(inputs), targets


def eval_shards(corpus: Corpus, split: str, lanes: int) -> np.ndarray:
    """The split cut into ``lanes`` contiguous equal shards (tail remainder dropped), lanes x shard_len."""
    begin, end = corpus.split(split)
    shard = (end - begin) // lanes
    if shard < 2:
        raise CorpusError(f"{split} split ({end - begin} bytes) is too small for {lanes} evaluation shards")
    return corpus.data[begin:begin + shard * lanes].reshape(lanes, shard).astype(np.intp)
