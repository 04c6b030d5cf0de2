"""Adagrad restricted to a recent window of gradients, realised as an EMA of squared gradients.

Per element::

    acc   <- decay * acc + (1 - decay) * g**2
    theta <- theta - lr * g / (sqrt(acc) + eps)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import PARAM_NAMES, Params


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class OptState:
    acc: Params
    decay: float = 0.95
    lr: float = 0.001
    eps: float = 1e-8
    clip: Optional[float] = None

    @classmethod
    def fresh(cls, params: Params, decay: float = 0.95, lr: float = 0.001, eps: float = 1e-8,
              clip: Optional[float] = None) -> "OptState":
        if not 0.0 < decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {decay}")
        acc = Params(**{k: np.zeros_like(v) for k, v in params.items()})
        return cls(acc, decay, lr, eps, clip)


def opt_step(params: Params, grads, state: OptState, skip: tuple[str, ...] = ()) -> None:
    """Update ``params`` and ``state.acc`` in place. Blocks named in ``skip`` are left untouched."""
    for name in PARAM_NAMES:
        if name in skip:
            continue
        g = getattr(grads, name)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in parameter block {name}")
        if state.clip is not None:
            g = np.clip(g, -state.clip, state.clip)
        acc = getattr(state.acc, name)
        acc *= state.decay
        acc += (1.0 - state.decay) * (g * g)
        getattr(params, name)[...] -= state.lr * g / (np.sqrt(acc) + state.eps)
