"""Dense float64 linear algebra, RNG plumbing, and weight initialization.

Matrices and vectors throughout the package are plain numpy float64
arrays (2-D row-major / 1-D).  ``matmul`` below is the order-stable
reference product used by test oracles: it accumulates over the inner
dimension in a fixed sequential order, so it is bit-identical to a naive
triple loop.  Hot paths elsewhere use numpy's ``@`` (BLAS), which is
deterministic for a fixed platform and thread count.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, PhsicError

DEFAULT_LRELU_SLOPE = 0.01


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name}: expected 2-D array, got shape {a.shape}")
    return a


def as_vector(a, name: str = "vector") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name}: expected 1-D array, got shape {a.shape}")
    return a


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise PhsicError(f"{what} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed summation order.

    Accumulates ``sum_k a[:, k] * b[k, :]`` sequentially in k, which is the
    same floating-point operation sequence per output entry as the naive
    i-j-k triple loop.  Intended for oracle-grade comparisons; not the hot
    path.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree ({a.shape} x {b.shape})"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[None, k, :]
    return out


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 generator; identical seed, identical draws."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng


def init_weights(
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    slope: float = DEFAULT_LRELU_SLOPE,
) -> np.ndarray:
    """He-style normal init adjusted for the leaky-ReLU negative slope.

    Entries are i.i.d. N(0, 2 / ((1 + slope^2) * fan_in)); rows index output
    units, columns input units.
    """
    if fan_in < 1 or fan_out < 1:
        raise DimensionError(f"init_weights: fan_in={fan_in}, fan_out={fan_out}")
    std = np.sqrt(2.0 / ((1.0 + slope * slope) * fan_in))
    w = rng.normal(0.0, std, size=(fan_out, fan_in))
    return check_finite(w, "initial weights")
