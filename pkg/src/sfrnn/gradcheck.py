"""Central finite-difference check of every analytic gradient coordinate.

The perturbed forward windows are evaluated in ``numpy.longdouble`` (80-bit
extended precision on x86). With a ~10 nat window loss, float64 rounding puts
about 1e-10 of absolute noise into a central difference at eps=1e-5, which is
larger than 1e-6 of the smallest LSTM gradient coordinates.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .backprop import backward_window
from .corpus import SplitMix64
from .model import CarryState, ModelConfig, Params, forward_window, init_params

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-6


def numeric_grad(loss_fn: Callable[[], float], theta: np.ndarray, coord, eps: float = DEFAULT_EPS) -> float:
    """(L(theta + eps e) - L(theta - eps e)) / 2 eps, restoring ``theta[coord]`` afterwards.

    ``loss_fn`` reads ``theta`` (mutated in place). The difference is taken in
    the loss's own precision before rounding to float.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    orig = theta[coord]
    try:
        theta[coord] = orig + eps
        up = loss_fn()
        theta[coord] = orig - eps
        down = loss_fn()
    finally:
        theta[coord] = orig
    if not (np.isfinite(up) and np.isfinite(down)):
        raise FloatingPointError(f"non-finite loss at perturbed coordinate {coord}")
    return float((up - down) / (2 * theta.dtype.type(eps)))


def rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


@dataclass
class BlockReport:
    max_rel_error: float
    argmax: tuple
    passed: bool


@dataclass
class CheckReport:
    blocks: dict[str, BlockReport]
    passed: bool
    fingerprint: str
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def format(self) -> str:
        lines = [f"gradcheck {self.fingerprint} " + " ".join(f"{k}={v}" for k, v in self.config.items())]
        for name, blk in self.blocks.items():
            status = "PASS" if blk.passed else "FAIL"
            lines.append(f"  {name:4s} max_rel_err={blk.max_rel_error:.3e} at {list(blk.argmax)} {status}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def random_window(config: ModelConfig, batch: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """A seeded random byte stream of S+1 symbols per lane -> (inputs, targets) index arrays."""
    rng = SplitMix64(seed)
    stream = np.array([[rng.randint(0, config.M - 1) for _ in range(batch)] for _ in range(config.S + 1)],
                      dtype=np.intp)
    return stream[:-1], stream[1:]


def window_loss(params: Params, config: ModelConfig, inputs, targets, carry: CarryState):
    """Total loss in nats, in the dtype of ``params``."""
    _, loss, _ = forward_window(params, config, carry.copy(), inputs, targets)
    return loss.sum()


def fingerprint(config: ModelConfig, seed: int, mode: str, batch: int) -> str:
    key = f"{config.cell}|{config.M}|{config.N}|{config.S}|{int(config.feedback)}|{config.convention}|{seed}|{mode}|{batch}"
    return hashlib.sha256(key.encode()).hexdigest()[:12]


def check(config: ModelConfig, seed: int = 0, mode: str = "exact", eps: float = DEFAULT_EPS,
          tolerance: float = DEFAULT_TOL, batch: int = 2, params: Params | None = None,
          precision=np.longdouble) -> CheckReport:
    """Sweep every coordinate of every parameter block against ``backward_window``."""
    if params is None:
        params = init_params(config, seed)
    inputs, targets = random_window(config, batch, seed + 1)
    carry = CarryState.fresh(config, batch)
    cache, _, _ = forward_window(params, config, carry.copy(), inputs, targets)
    grads = backward_window(params, config, cache, targets, mode)

    probe = Params(**{k: v.astype(precision) for k, v in params.items()})

    def loss_fn():
        return window_loss(probe, config, inputs, targets, carry)

    blocks = {}
    for name, theta in probe.items():
        analytic = getattr(grads, name)
        worst, where = 0.0, (0, 0)
        for coord in np.ndindex(theta.shape):
            n = numeric_grad(loss_fn, theta, coord, eps)
            err = rel_error(float(analytic[coord]), n)
            if err > worst:
                worst, where = err, coord
        blocks[name] = BlockReport(worst, tuple(int(i) for i in where), worst <= tolerance)
    cfg = {"cell": config.cell, "feedback": config.feedback, "mode": mode, "M": config.M,
           "N": config.N, "S": config.S, "B": batch, "eps": eps, "tol": tolerance}
    return CheckReport(blocks, all(b.passed for b in blocks.values()), fingerprint(config, seed, mode, batch), cfg)


def check_all(seed: int = 0, mode: str = "exact", eps: float = DEFAULT_EPS, tolerance: float = DEFAULT_TOL,
              M: int = 5, N: int = 4, S: int = 4, batch: int = 2, convention: str = "paper") -> list[CheckReport]:
    """The four {simple_rnn, lstm} x {feedback on, off} sweeps used as the health gate."""
    reports = []
    for cell in ("simple_rnn", "lstm"):
        for fb in (True, False):
            cfg = ModelConfig(cell=cell, M=M, N=N, S=S, feedback=fb, convention=convention)
            reports.append(check(cfg, seed, mode, eps, tolerance, batch))
    return reports
