"""Surprisal-feedback recurrent cells: parameters, initialisation and forward pass.

Gate blocks of the LSTM weight matrices are concatenated column-wise in the
order ``[i | f | o | u]``. The surprisal ``s_t`` is a per-lane scalar (the
negative log probability the previous prediction gave the observed byte), so
the feedback weights ``V`` are a single row per gate block.

Two cell-state conventions are supported:

* ``paper``:    c_t = (1 - f_t) * c_{t-1} + i_t * u_t
* ``standard``: c_t = f_t * c_{t-1} + i_t * u_t
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import tensor as T
from .corpus import VOCAB_SIZE, SplitMix64, one_hot

PROB_FLOOR = 1e-12
PARAM_NAMES = ("W", "U", "V", "b", "W_y", "b_y")
CELLS = ("simple_rnn", "lstm")
CONVENTIONS = ("paper", "standard")


@dataclass(frozen=True)
class ModelConfig:
    cell: str = "lstm"
    M: int = VOCAB_SIZE
    N: int = 128
    feedback: bool = True
    S: int = 100
    convention: str = "paper"

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}, got {self.cell!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"cell convention must be one of {CONVENTIONS}, got {self.convention!r}")
        if self.M < 2 or self.N < 1 or self.S < 2:
            raise ValueError(f"need M >= 2, N >= 1, S >= 2 (got M={self.M}, N={self.N}, S={self.S})")

    @property
    def G(self) -> int:
        """Width of the concatenated gate pre-activation."""
        return 4 * self.N if self.cell == "lstm" else self.N

    def shapes(self) -> dict[str, tuple[int, int]]:
        M, N, G = self.M, self.N, self.G
        return {"W": (M, G), "U": (N, G), "V": (1, G), "b": (1, G), "W_y": (N, M), "b_y": (1, M)}


@dataclass
class Params:
    W: np.ndarray
    U: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W_y: np.ndarray
    b_y: np.ndarray

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "Params":
        return Params(**{k: v.copy() for k, v in self.items()})

    @classmethod
    def zeros(cls, config: ModelConfig) -> "Params":
        return cls(**{k: np.zeros(s) for k, s in config.shapes().items()})

    def check_shapes(self, config: ModelConfig) -> None:
        for name, a in self.items():
            want = config.shapes()[name]
            if a.shape != want:
                raise T.ShapeError(f"parameter {name} is {a.shape[0]}x{a.shape[1]}, config expects {want[0]}x{want[1]}")


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(config: ModelConfig, seed: int) -> Params:
    """Xavier-uniform weights over each full matrix; zero biases except the forget block at 1.

    Draws come from one SplitMix64 stream in the order W, U, V, W_y (row-major);
    ``V`` stays zero when feedback is off.
    """
    rng = SplitMix64(seed)
    p = Params.zeros(config)
    for name in ("W", "U", "V", "W_y"):
        a = getattr(p, name)
        u = rng.uniform_array(a.size).reshape(a.shape)
        bound = xavier_bound(*a.shape)
        if name == "V" and not config.feedback:
            continue
        a[...] = bound * (2.0 * u - 1.0)
    if config.cell == "lstm":
        N = config.N
        p.b[0, N:2 * N] = 1.0
    return p


@dataclass
class CarryState:
    h: np.ndarray
    c: np.ndarray
    p_prev: np.ndarray

    @classmethod
    def fresh(cls, config: ModelConfig, batch: int) -> "CarryState":
        """h = c = 0 and a uniform previous prediction."""
        return cls(
            h=np.zeros((batch, config.N)),
            c=np.zeros((batch, config.N)),
            p_prev=np.full((batch, config.M), 1.0 / config.M),
        )

    def copy(self) -> "CarryState":
        return CarryState(self.h.copy(), self.c.copy(), self.p_prev.copy())


@dataclass
class StepCache:
    """Activations of one window, indexed by step along the leading axis."""

    x: np.ndarray        # S x B byte indices
    targets: np.ndarray  # S x B
    s: np.ndarray        # S x B x 1
    gates: np.ndarray    # S x B x G (LSTM: [i|f|o|u] activations; RNN: h)
    c: np.ndarray        # S x B x N (LSTM only, else empty)
    c_hat: np.ndarray    # S x B x N
    h: np.ndarray        # S x B x N
    y: np.ndarray        # S x B x M
    p: np.ndarray        # S x B x M
    loss: np.ndarray     # S x B, nats
    h0: np.ndarray
    c0: np.ndarray
    p0: np.ndarray
    steps: int = 0

    def __len__(self) -> int:
        return self.steps

    def h_prev(self, t: int) -> np.ndarray:
        return self.h0 if t == 0 else self.h[t - 1]

    def c_prev(self, t: int) -> np.ndarray:
        return self.c0 if t == 0 else self.c[t - 1]

    def p_prev(self, t: int) -> np.ndarray:
        return self.p0 if t == 0 else self.p[t - 1]

    def x_onehot(self, t: int) -> np.ndarray:
        return one_hot(self.x[t], self.p.shape[2])


def surprisal(p_prev: np.ndarray, x_t: np.ndarray) -> np.ndarray:
    """s[i] = -sum_j ln(p_prev[i, j]) * x[i, j], natural log, B x 1."""
    observed = (p_prev * x_t).sum(axis=1, keepdims=True)
    if np.any(observed <= 0.0):
        raise FloatingPointError("zero probability at an observed symbol; probabilities must be floored")
    return -np.log(observed)


def surprisal_idx(p_prev: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``surprisal`` with the one-hot input given as byte indices."""
    observed = p_prev[np.arange(len(idx)), idx][:, None]
    if np.any(observed <= 0.0):
        raise FloatingPointError("zero probability at an observed symbol; probabilities must be floored")
    return -np.log(observed)


def _preactivation(params: Params, h_prev, x_idx, s_t, feedback: bool, out=None) -> np.ndarray:
    a = T.gather_rows(params.W, x_idx, out=out)
    a += T.matmul(h_prev, params.U)
    if feedback:
        a += T.col_broadcast_mul(np.broadcast_to(params.V, a.shape), s_t)
    a += params.b
    return a


def _as_indices(x_t: np.ndarray) -> np.ndarray:
    x_t = np.asarray(x_t)
    return x_t if x_t.ndim == 1 else x_t.argmax(axis=1)


def rnn_step(params: Params, h_prev: np.ndarray, x_t: np.ndarray, s_t: np.ndarray,
             feedback: bool = True, out: Optional[np.ndarray] = None) -> np.ndarray:
    """h_t = tanh(x_t.W + h_prev.U + s_t*V + b). ``x_t`` is one-hot B x M or B indices."""
    a = _preactivation(params, h_prev, _as_indices(x_t), s_t, feedback, out=out)
    return T.tanh(a, out=a)


def lstm_step(params: Params, h_prev: np.ndarray, c_prev: np.ndarray, x_t: np.ndarray, s_t: np.ndarray,
              feedback: bool = True, convention: str = "paper",
              gates_out: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One LSTM step; returns (h_t, c_t, gates) with gates = [i|f|o|u] activations."""
    N = params.U.shape[0]
    g = _preactivation(params, h_prev, _as_indices(x_t), s_t, feedback, out=gates_out)
    T.sigmoid(g[:, :3 * N], out=g[:, :3 * N])
    T.tanh(g[:, 3 * N:], out=g[:, 3 * N:])
    i, f, o, u = g[:, :N], g[:, N:2 * N], g[:, 2 * N:3 * N], g[:, 3 * N:]
    keep = (1.0 - f) if convention == "paper" else f
    c = keep * c_prev + i * u
    h = o * np.tanh(c)
    return h, c, g


def output_probs(params: Params, h_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """y = h.W_y + b_y and the floored, renormalised row softmax of y."""
    y = T.row_broadcast_add(T.matmul(h_t, params.W_y), params.b_y)
    return y, softmax(y)


def softmax(y: np.ndarray) -> np.ndarray:
    e = np.exp(y - y.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    np.maximum(p, PROB_FLOOR, out=p)
    p /= p.sum(axis=1, keepdims=True)
    return p


def forward_window(params: Params, config: ModelConfig, carry: CarryState, inputs: np.ndarray,
                   targets: np.ndarray) -> tuple[StepCache, np.ndarray, CarryState]:
    """Run surprisal -> cell -> softmax over a window.

    ``inputs`` is S x B x M one-hot or S x B byte indices; ``targets`` is S x B
    (the byte following each input). Returns the cache, per-lane loss totals in
    nats, and the carry for the next window.
    """
    inputs = np.asarray(inputs)
    x = inputs.argmax(axis=2) if inputs.ndim == 3 else inputs.astype(np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    S, B = x.shape
    N, M, G = config.N, config.M, config.G
    lstm = config.cell == "lstm"
    dt = params.W.dtype  # float64 normally; the gradient oracle runs in extended precision
    cache = StepCache(
        x=x, targets=targets,
        s=np.empty((S, B, 1), dt), gates=np.empty((S, B, G), dt),
        c=np.empty((S, B, N), dt) if lstm else np.empty((0, B, N), dt),
        c_hat=np.empty((S, B, N), dt) if lstm else np.empty((0, B, N), dt),
        h=np.empty((S, B, N), dt), y=np.empty((S, B, M), dt), p=np.empty((S, B, M), dt),
        loss=np.empty((S, B), dt),
        h0=carry.h.astype(dt), c0=carry.c.astype(dt), p0=carry.p_prev.astype(dt),
    )
    lanes = np.arange(B)
    h, c, p = cache.h0, cache.c0, cache.p0
    for t in range(S):
        s = surprisal_idx(p, x[t])
        cache.s[t] = s
        if lstm:
            h, c, _ = lstm_step(params, h, c, x[t], s, config.feedback, config.convention, gates_out=cache.gates[t])
            cache.c[t] = c
            cache.c_hat[t] = np.tanh(c)
        else:
            h = rnn_step(params, h, x[t], s, config.feedback, out=cache.gates[t])
        cache.h[t] = h
        y, p = output_probs(params, h)
        cache.y[t] = y
        cache.p[t] = p
        cache.loss[t] = -np.log(p[lanes, targets[t]])
        cache.steps = t + 1
    return cache, cache.loss.sum(axis=0), CarryState(h.copy(), c.copy(), p.copy())


def bpc(loss_nats: float, char_count: int) -> float:
    if char_count <= 0:
        raise ValueError("bits-per-character needs a positive character count")
    return loss_nats / char_count / math.log(2.0)
