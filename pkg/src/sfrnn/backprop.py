"""Truncated BPTT over one window, including the gradient through the surprisal input.

The loss of a window is ``sum_t -ln p_t[target_t]``. Because ``s_{t+1}`` is
computed from ``p_t``, the surprisal path sends gradient from step ``t+1``
back into ``y_t``. Two treatments of that path are available:

* ``exact``: the true derivative, ``dy_t += ds_{t+1} * (p_t - x_{t+1})``.
* ``paper``: ``dp = ds * x``, then ``dy = dp - p * sum(dp)``; for one-hot ``x``
  this is exactly the negative of the ``exact`` contribution.

Gradients are truncated at the window boundary: no ``dh``/``dc`` flows into
the previous window and ``s`` of the first step gets no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import tensor as T
from .model import PARAM_NAMES, ModelConfig, Params, StepCache

GRAD_MODES = ("exact", "paper")


@dataclass
class Gradients:
    W: np.ndarray
    U: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W_y: np.ndarray
    b_y: np.ndarray
    dh: Optional[np.ndarray] = None
    dc: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, params: Params) -> "Gradients":
        return cls(**{k: np.zeros_like(v) for k, v in params.items()})

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)


def output_delta(p_t: np.ndarray, target_idx: np.ndarray) -> np.ndarray:
    """Softmax + cross-entropy: dy = p - onehot(target)."""
    dy = p_t.copy()
    dy[np.arange(len(target_idx)), target_idx] -= 1.0
    return dy


def output_backward(dy: np.ndarray, h_t: np.ndarray, params: Params, grads: Gradients,
                    want_dh: bool = True) -> Optional[np.ndarray]:
    """Accumulate dW_y, db_y and return the dh_t contribution dy . W_y^T.

    Rows may stack several steps; accumulation is linear in them.
    """
    grads.W_y += T.matmul_at(h_t, dy)
    grads.b_y += dy.sum(axis=0, keepdims=True)
    return T.matmul_bt(dy, params.W_y) if want_dh else None


def rnn_backward_step(cache: StepCache, t: int, dh: np.ndarray, params: Params) -> tuple[np.ndarray, np.ndarray]:
    """dg = dh * tanh'(h_t); dh_{t-1} = dg . U^T."""
    dg = dh * T.tanh_prime_from_act(cache.h[t])
    return dg, T.matmul_bt(dg, params.U)


def lstm_backward_step(cache: StepCache, t: int, dh: np.ndarray, dc: np.ndarray, params: Params,
                       convention: str = "paper") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop through the cell at step ``t``; returns (dg, dh_{t-1}, dc_{t-1})."""
    N = params.U.shape[0]
    g = cache.gates[t]
    i, f, o, u = g[:, :N], g[:, N:2 * N], g[:, 2 * N:3 * N], g[:, 3 * N:]
    c_hat = cache.c_hat[t]
    c_prev = cache.c_prev(t)

    dc = dc + dh * o * T.tanh_prime_from_act(c_hat)
    dg = np.empty_like(g)
    dg[:, :N] = dc * u * T.sigmoid_prime_from_act(i)
    if convention == "paper":
        dc_prev = dc * (1.0 - f)
        dg[:, N:2 * N] = -dc * c_prev * T.sigmoid_prime_from_act(f)
    else:
        dc_prev = dc * f
        dg[:, N:2 * N] = dc * c_prev * T.sigmoid_prime_from_act(f)
    dg[:, 2 * N:3 * N] = dh * c_hat * T.sigmoid_prime_from_act(o)
    dg[:, 3 * N:] = dc * i * T.tanh_prime_from_act(u)
    return dg, T.matmul_bt(dg, params.U), dc_prev


def linear_backward(dg: np.ndarray, x_idx: np.ndarray, h_prev: np.ndarray, s_t: np.ndarray,
                    params: Params, grads: Gradients, feedback: bool = True,
                    want_dx: bool = False) -> Optional[np.ndarray]:
    """Accumulate db, dU, dW (and dV) from the gate delta; optionally return dx = dg . W^T."""
    grads.b += dg.sum(axis=0, keepdims=True)
    grads.U += T.matmul_at(h_prev, dg)
    T.scatter_add_rows(grads.W, x_idx, dg)
    if feedback:
        grads.V += T.matmul_at(s_t, dg)
    if want_dx:
        return T.matmul_bt(dg, params.W)
    return None


def surprisal_backward(dg: np.ndarray, s_t: np.ndarray, p_prev: np.ndarray, x_t: np.ndarray,
                       params: Params, mode: str = "exact") -> np.ndarray:
    """dy_{t-1} contribution of the surprisal input at step t.

    ``x_t`` is the one-hot B x M input of step t. dV is accumulated by
    ``linear_backward``; ``s_t`` is accepted for symmetry with it.
    """
    ds = T.matmul_bt(dg, params.V)  # B x 1
    if mode == "exact":
        return ds * (p_prev - x_t)
    if mode == "paper":
        dp = ds * x_t
        return dp - p_prev * dp.sum(axis=1, keepdims=True)
    raise ValueError(f"grad mode must be one of {GRAD_MODES}, got {mode!r}")


def _surprisal_backward_idx(dg, p_prev, x_idx, params, mode):
    # index form of surprisal_backward for the training loop (avoids a B x M one-hot)
    ds = T.matmul_bt(dg, params.V)
    lanes = np.arange(len(x_idx))
    if mode == "exact":
        d = ds * p_prev
        d[lanes, x_idx] -= ds[:, 0]
        return d
    if mode == "paper":
        d = -ds * p_prev  # dp = ds at the observed index only, so sum(dp) = ds
        d[lanes, x_idx] += ds[:, 0]
        return d
    raise ValueError(f"grad mode must be one of {GRAD_MODES}, got {mode!r}")


def backward_window(params: Params, config: ModelConfig, cache: StepCache, targets: np.ndarray = None,
                    mode: str = "exact") -> Gradients:
    """Gradients of the window's total loss with respect to every parameter block."""
    if mode not in GRAD_MODES:
        raise ValueError(f"grad mode must be one of {GRAD_MODES}, got {mode!r}")
    S = len(cache)
    if S == 0 or S != cache.x.shape[0]:
        raise ValueError(f"incomplete cache: {S} of {cache.x.shape[0]} steps executed")
    if targets is None:
        targets = cache.targets
    grads = Gradients.zeros_like(params)
    lstm = config.cell == "lstm"
    B, N = cache.h0.shape
    dY = np.empty_like(cache.p)
    dG = np.empty_like(cache.gates)
    dh_next = np.zeros((B, N))
    dc_next = np.zeros((B, N))
    for t in range(S - 1, -1, -1):
        dy = dY[t]
        if config.feedback and t < S - 1:
            # surprisal of step t+1 was computed from p_t
            dy[...] = _surprisal_backward_idx(dG[t + 1], cache.p[t], cache.x[t + 1], params, mode)
            dy += cache.p[t]
        else:
            dy[...] = cache.p[t]
        dy[np.arange(B), targets[t]] -= 1.0
        dh = T.matmul_bt(dy, params.W_y)
        dh += dh_next
        if lstm:
            dG[t], dh_next, dc_next = lstm_backward_step(cache, t, dh, dc_next, params, config.convention)
        else:
            dG[t], dh_next = rnn_backward_step(cache, t, dh, params)
    # weight gradients for the whole window at once
    G = dG.shape[2]
    dg_all = dG.reshape(S * B, G)
    output_backward(dY.reshape(S * B, -1), cache.h.reshape(S * B, N), params, grads, want_dh=False)
    h_prev = np.concatenate([cache.h0[None], cache.h[:S - 1]]).reshape(S * B, N)
    linear_backward(dg_all, cache.x.reshape(S * B), h_prev, cache.s.reshape(S * B, 1),
                    params, grads, config.feedback)
    grads.dh = dh_next
    grads.dc = dc_next
    return grads
