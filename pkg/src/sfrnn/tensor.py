"""Dense float64 matrix kernels.

Matrices are 2-D C-contiguous ``numpy.float64`` arrays (row-major, so the flat
buffer is ``a.ravel()`` with length ``rows * cols``). Products go through BLAS, whose
reduction order is fixed for a given build and thread count, so repeated runs
are bit-reproducible; ``matmul_at``/``matmul_bt`` reuse the ``matmul`` path
and agree with an explicit transpose to the last bit. Every kernel validates
shapes, never mutates its inputs, and optionally writes into a caller-provided
``out`` buffer of the exact result shape.

Derivative helpers take the *activation* value, not the pre-activation:
``tanh_prime_from_act(v) = 1 - v**2`` and ``sigmoid_prime_from_act(v) = v * (1 - v)``.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def matrix(rows, dtype=DTYPE) -> np.ndarray:
    """Build a 2-D float64 matrix from nested sequences (or a scalar grid)."""
    a = np.array(rows, dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=DTYPE)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=DTYPE)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def _shape(a: np.ndarray) -> str:
    return "x".join(str(d) for d in a.shape)


def _check_out(out: Optional[np.ndarray], shape: tuple) -> None:
    if out is not None and out.shape != shape:
        raise ShapeError(f"output buffer is {_shape(out)}, expected {'x'.join(map(str, shape))}")


def matmul(a: np.ndarray, b: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """a[m x k] . b[k x n]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {_shape(a)} by {_shape(b)}")
    _check_out(out, (a.shape[0], b.shape[1]))
    return np.matmul(a, b, out=out)


def matmul_at(a: np.ndarray, b: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """a^T . b for a[k x m], b[k x n].

    The transpose is copied to a contiguous buffer so BLAS runs the same kernel
    as ``matmul(transpose(a), b)``; a strided view lets it pick a different
    reduction order and the results then differ in the last bit.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul_at: cannot multiply transpose of {_shape(a)} by {_shape(b)}")
    _check_out(out, (a.shape[1], b.shape[1]))
    return np.matmul(transpose(a), b, out=out)


def matmul_bt(a: np.ndarray, b: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """a . b^T for a[m x k], b[n x k]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_bt: cannot multiply {_shape(a)} by transpose of {_shape(b)}")
    _check_out(out, (a.shape[0], b.shape[0]))
    return np.matmul(a, transpose(b), out=out)


_EWISE = {"mul": np.multiply, "add": np.add, "sub": np.subtract}


def ewise(a: np.ndarray, b: np.ndarray, kind: str, out: Optional[np.ndarray] = None) -> np.ndarray:
    try:
        fn = _EWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}; expected one of {sorted(_EWISE)}") from None
    if a.shape != b.shape:
        raise ShapeError(f"ewise {kind}: shape mismatch {_shape(a)} vs {_shape(b)}")
    _check_out(out, a.shape)
    return fn(a, b, out=out)


def sigmoid(a: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    # 1 / (1 + exp(-a)); errstate silences the harmless exp overflow at very negative a
    with np.errstate(over="ignore"):
        r = np.negative(a, out=out)
        np.exp(r, out=r)
        r += 1.0
        return np.reciprocal(r, out=r)


def tanh(a: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    return np.tanh(a, out=out)


def tanh_prime_from_act(v: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    r = np.multiply(v, v, out=out)
    return np.subtract(1.0, r, out=r)


def sigmoid_prime_from_act(v: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    r = np.subtract(1.0, v, out=out)
    return np.multiply(v, r, out=r)


MAPS: dict[str, Callable] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "tanh_prime_from_act": tanh_prime_from_act,
    "sigmoid_prime_from_act": sigmoid_prime_from_act,
}


def apply(a: np.ndarray, fn: str, out: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply a named elementwise nonlinearity (see ``MAPS``)."""
    try:
        f = MAPS[fn]
    except KeyError:
        raise ValueError(f"unknown map {fn!r}; expected one of {sorted(MAPS)}") from None
    _check_out(out, a.shape)
    return f(a, out=out)


def row_broadcast_add(a: np.ndarray, bias: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    if bias.ndim != 2 or bias.shape[0] != 1 or bias.shape[1] != a.shape[1]:
        raise ShapeError(f"row_broadcast_add: bias {_shape(bias)} does not fit {_shape(a)}")
    _check_out(out, a.shape)
    return np.add(a, bias, out=out)


def col_broadcast_mul(a: np.ndarray, scale: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    if scale.ndim != 2 or scale.shape[1] != 1 or scale.shape[0] != a.shape[0]:
        raise ShapeError(f"col_broadcast_mul: scale {_shape(scale)} does not fit {_shape(a)}")
    _check_out(out, a.shape)
    return np.multiply(a, scale, out=out)


def gather_rows(w: np.ndarray, idx: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """Rows of ``w`` selected by ``idx``.

    Equals ``matmul(onehot(idx), w)`` exactly: each output element is a single
    product ``1.0 * w[j, k]`` plus exact zeros.
    """
    if out is None:
        return w[idx]
    return np.take(w, idx, axis=0, out=out)


def scatter_add_rows(acc: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """acc[idx[r]] += rows[r] in index order; the one-hot form of ``acc += onehot^T . rows``."""
    np.add.at(acc, idx, rows)
