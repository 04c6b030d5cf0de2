"""Training loop, evaluation, checkpoints, metrics and sampling.

Checkpoint layout (all little-endian)::

    b"SFRN" | version u8 (=1) | cell u8 (0=rnn, 1=lstm) | feedback u8 | grad mode u8 (0=exact, 1=paper)
    | M u32 | N u32 | S u32
    | W, U, V, b, W_y, b_y as float64
    | optimizer accumulators in the same order
    | decay, lr, eps as float64
    | cell convention u8 (0=paper, 1=standard)

Metrics are JSON lines with the keys ``step, chars_seen, train_bpc,
smoothed_train_bpc, valid_bpc, wallclock_seconds``. ``train_bpc`` covers the
predictions of one window; ``smoothed_train_bpc`` is an EMA with coefficient
0.99 started at the first window's value. ``valid_bpc`` is null except at
evaluation steps, and ``wallclock_seconds`` is null unless wall-clock
recording is switched on (it is the only non-reproducible field).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
import time
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import corpus as C
from .backprop import backward_window
from .model import (PARAM_NAMES, CarryState, ModelConfig, Params, bpc, forward_window, init_params,
                    lstm_step, output_probs, rnn_step, surprisal_idx)
from .optimizer import OptState, opt_step
from .tensor import ShapeError

log = logging.getLogger(__name__)

MAGIC = b"SFRN"
VERSION = 1
SMOOTHING = 0.99
_HEADER = struct.Struct("<4sBBBBIII")


class CheckpointError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: str = ""
    batch: int = 128
    seq_len: int = 10000
    steps: int = 1000
    eval_every: int = 100
    seed: int = 1
    grad_mode: str = "exact"
    lr: float = 0.001
    decay: float = 0.95
    eps: float = 1e-8
    clip: Optional[float] = None
    ckpt: Optional[str] = None
    metrics: Optional[str] = None
    max_bytes: Optional[int] = None
    record_wallclock: bool = False

    def __post_init__(self):
        for name in ("batch", "seq_len", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.seq_len < self.model.S + 1:
            raise ValueError(f"seq_len {self.seq_len} must be at least bptt + 1 = {self.model.S + 1}")
        if self.grad_mode not in ("exact", "paper"):
            raise ValueError(f"grad mode must be exact or paper, got {self.grad_mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = asdict(self.model)
        return d


@dataclass
class MetricsRecord:
    step: int
    chars_seen: int
    train_bpc: float
    smoothed_train_bpc: float
    valid_bpc: Optional[float]
    wallclock_seconds: Optional[float]

    def to_json(self) -> str:
        return json.dumps(asdict(self))


# -- checkpoints ----------------------------------------------------------------

def _grad_mode_code(mode: str) -> int:
    return {"exact": 0, "paper": 1}[mode]


def checkpoint_bytes(params: Params, opt: OptState, config: ModelConfig, grad_mode: str = "exact") -> bytes:
    params.check_shapes(config)
    head = _HEADER.pack(MAGIC, VERSION, 1 if config.cell == "lstm" else 0, int(config.feedback),
                        _grad_mode_code(grad_mode), config.M, config.N, config.S)
    parts = [head]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in params.items()]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in opt.acc.items()]
    parts.append(struct.pack("<ddd", opt.decay, opt.lr, opt.eps))
    parts.append(struct.pack("<B", 0 if config.convention == "paper" else 1))
    return b"".join(parts)


def save_checkpoint(params: Params, opt: OptState, config: ModelConfig, path: str, grad_mode: str = "exact") -> None:
    """Write atomically so an aborted run keeps its last good checkpoint."""
    blob = checkpoint_bytes(params, opt, config, grad_mode)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def config_hash(config: ModelConfig, grad_mode: str = "exact") -> str:
    key = json.dumps({**asdict(config), "grad_mode": grad_mode}, sort_keys=True)
    return hashlib.sha256(key.encode()).hexdigest()


def _describe(cfg: ModelConfig) -> str:
    return f"cell={cfg.cell} M={cfg.M} N={cfg.N} (W {cfg.M}x{cfg.G})"


def parse_checkpoint(blob: bytes, expect: Optional[ModelConfig] = None) -> tuple[Params, OptState, ModelConfig, str]:
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"truncated checkpoint: {len(blob)} bytes is shorter than the header")
    magic, version, cell, fb, mode, M, N, S = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not an SFRN checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; this build reads version {VERSION}")
    if cell not in (0, 1) or fb not in (0, 1) or mode not in (0, 1):
        raise CheckpointError(f"malformed header fields cell={cell} feedback={fb} grad_mode={mode}")
    grad_mode = ("exact", "paper")[mode]
    # convention byte sits at the very end; read it before building the config
    base = ModelConfig(cell=("simple_rnn", "lstm")[cell], M=M, N=N, S=S, feedback=bool(fb))
    shapes = base.shapes()
    n_floats = 2 * sum(r * c for r, c in shapes.values()) + 3
    want = _HEADER.size + 8 * n_floats + 1
    if len(blob) != want:
        raise CheckpointError(f"checkpoint is {len(blob)} bytes but its header implies {want}")
    conv_code = blob[-1]
    if conv_code not in (0, 1):
        raise CheckpointError(f"malformed cell convention byte {conv_code}")
    config = ModelConfig(cell=base.cell, M=M, N=N, S=S, feedback=base.feedback,
                         convention=("paper", "standard")[conv_code])
    if expect is not None and (expect.cell, expect.M, expect.N) != (config.cell, config.M, config.N):
        raise ShapeError(f"checkpoint has {_describe(config)} but the requested model has {_describe(expect)}")
    off = _HEADER.size
    arrays = []
    for _ in range(2):
        block = {}
        for name in PARAM_NAMES:
            r, c = shapes[name]
            block[name] = np.frombuffer(blob, dtype="<f8", count=r * c, offset=off).reshape(r, c).astype(np.float64)
            off += 8 * r * c
        arrays.append(Params(**block))
    decay, lr, eps = struct.unpack_from("<ddd", blob, off)
    return arrays[0], OptState(arrays[1], decay, lr, eps), config, grad_mode


def load_checkpoint(path: str, expect: Optional[ModelConfig] = None) -> tuple[Params, OptState, ModelConfig, str]:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read(), expect)


# -- evaluation -------------------------------------------------------------------

def params_checksum(params: Params) -> str:
    h = hashlib.sha256()
    for _, a in params.items():
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def evaluate(params: Params, config: ModelConfig, corpus: C.Corpus, split: str, batch: int = 128) -> float:
    """Bits per character over ``split``, streamed as ``batch`` contiguous shards.

    Each shard starts from h = c = 0 and a uniform previous prediction, and
    predicts every byte of the shard after its first one.
    """
    before = params_checksum(params)
    shards = C.eval_shards(corpus, split, batch)
    carry = CarryState.fresh(config, batch)
    n = shards.shape[1] - 1
    losses = []
    for start in range(0, n, config.S):
        stop = min(start + config.S, n)
        inputs = shards[:, start:stop].T
        targets = shards[:, start + 1:stop + 1].T
        cache, _, carry = forward_window(params, config, carry, inputs, targets)
        losses.append(cache.loss.ravel())
    if params_checksum(params) != before:
        raise RuntimeError("evaluation mutated the parameters")
    # convert each loss to bits before the exact sum so a uniform model reports exactly 8.0
    bits = math.fsum(np.concatenate(losses) / math.log(2.0))
    return bits / (n * batch)


# -- training ----------------------------------------------------------------------

def iterate(config: TrainConfig, corpus: Optional[C.Corpus] = None) -> Iterator[tuple[MetricsRecord, Params, OptState]]:
    """Yield one metrics record per update (the step-0 state first) together with live params."""
    mcfg = config.model
    if corpus is None:
        corpus = C.load(config.data, config.max_bytes)
    params = init_params(mcfg, config.seed)
    opt = OptState.fresh(params, config.decay, config.lr, config.eps, config.clip)
    skip = () if mcfg.feedback else ("V",)
    cursor = C.BatchCursor(config.batch, config.seq_len, mcfg.S, seed=config.seed + 1)
    carry = CarryState.fresh(mcfg, config.batch)
    t0 = time.perf_counter()
    smoothed = None
    chars = 0
    for step in range(1, config.steps + 1):
        if cursor.needs_resample:
            C.resample(cursor, corpus, "train")
            carry = CarryState.fresh(mcfg, config.batch)
        inputs, targets = C.next_indices(cursor, corpus)
        cache, loss, carry = forward_window(params, mcfg, carry, inputs, targets)
        total = math.fsum(loss)
        if not math.isfinite(total):
            raise TrainingDiverged(f"non-finite training loss at step {step}")
        grads = backward_window(params, mcfg, cache, targets, config.grad_mode)
        opt_step(params, grads, opt, skip)
        chars += config.batch * mcfg.S
        window_bpc = bpc(total, config.batch * mcfg.S)
        smoothed = window_bpc if smoothed is None else SMOOTHING * smoothed + (1.0 - SMOOTHING) * window_bpc
        valid = None
        if step % config.eval_every == 0 or step == config.steps:
            valid = evaluate(params, mcfg, corpus, "valid", config.batch)
        wall = round(time.perf_counter() - t0, 3) if config.record_wallclock else None
        yield MetricsRecord(step, chars, window_bpc, smoothed, valid, wall), params, opt


def train(config: TrainConfig, corpus: Optional[C.Corpus] = None) -> tuple[Params, OptState, list[MetricsRecord]]:
    """Run ``config.steps`` updates, writing metrics lines and checkpoints as configured."""
    mcfg = config.model
    records = []
    if corpus is None and config.steps > 0:
        corpus = C.load(config.data, config.max_bytes)  # fail on bad data before touching any output file
    if config.metrics:
        open(config.metrics, "w").close()
    if config.steps == 0:
        params = init_params(mcfg, config.seed)
        opt = OptState.fresh(params, config.decay, config.lr, config.eps, config.clip)
        if config.ckpt:
            save_checkpoint(params, opt, mcfg, config.ckpt, config.grad_mode)
        return params, opt, records
    params = opt = None
    try:
        for rec, params, opt in iterate(config, corpus):
            records.append(rec)
            if config.metrics:
                with open(config.metrics, "a") as fh:
                    fh.write(rec.to_json() + "\n")
            if rec.valid_bpc is not None:
                log.info("step %d train %.4f smoothed %.4f valid %.4f", rec.step, rec.train_bpc,
                         rec.smoothed_train_bpc, rec.valid_bpc)
                if config.ckpt:
                    save_checkpoint(params, opt, mcfg, config.ckpt, config.grad_mode)
    except FloatingPointError as exc:
        raise TrainingDiverged(str(exc)) from exc
    return params, opt, records


# -- sampling -----------------------------------------------------------------------

def sample(params: Params, config: ModelConfig, length: int, seed: int = 0) -> bytes:
    """Draw bytes autoregressively, feeding each draw back as the next input."""
    rng = C.SplitMix64(seed)
    carry = CarryState.fresh(config, 1)
    h, c, p = carry.h, carry.c, carry.p_prev
    out = bytearray()
    for _ in range(length):
        cdf = np.cumsum(p[0])
        byte = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        byte = min(byte, config.M - 1)
        out.append(byte)
        x = np.array([byte])
        s = surprisal_idx(p, x)
        if config.cell == "lstm":
            h, c, _ = lstm_step(params, h, c, x, s, config.feedback, config.convention)
        else:
            h = rnn_step(params, h, x, s, config.feedback)
        _, p = output_probs(params, h)
    return bytes(out)
