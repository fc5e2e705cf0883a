"""Dense float64 linear algebra, activations, initializers and a
finite-difference gradient oracle.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Shapes are
checked explicitly; nothing here relies on broadcasting to hide a
mismatch.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "GradientOracleError",
    "make_rng",
    "as_matrix",
    "matmul",
    "softmax_rows",
    "sigmoid",
    "glorot_uniform",
    "orthogonal_init",
    "init_matrix",
    "finite_diff_grad",
    "max_relative_error",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        desc = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {desc}")


class GradientOracleError(ArithmeticError):
    """Raised when the objective is non-finite at a perturbed point."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"objective is non-finite ({value}) when perturbing coordinate {index}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed)))


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError("as_matrix", m.shape)
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b


def softmax_rows(m: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically safe softmax along ``axis`` (rows by default).

    Entries equal to ``-inf`` act as masked positions and receive zero weight,
    provided every row keeps at least one finite entry.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise ShapeError("softmax_rows", m.shape)
    shifted = m - np.max(m, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else out[()]


def glorot_uniform(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError("glorot_uniform", (rows, cols))
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def orthogonal_init(n: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal ``n x n`` matrix from modified Gram-Schmidt on a Gaussian draw.

    Columns that come out numerically dependent are redrawn, so the result
    always satisfies ``W.T @ W == I`` to rounding.
    """
    if n < 1:
        raise ShapeError("orthogonal_init", (n, n))
    a = rng.standard_normal((n, n))
    q = np.zeros((n, n))
    for j in range(n):
        v = a[:, j].copy()
        while True:
            # two passes of MGS keep the loss of orthogonality at rounding level
            for _ in range(2):
                for i in range(j):
                    v -= (q[:, i] @ v) * q[:, i]
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                break
            v = rng.standard_normal(n)
        q[:, j] = v / norm
    return q


def init_matrix(kind: str, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "glorot-uniform":
        return glorot_uniform(rows, cols, rng)
    if kind == "orthogonal":
        if rows != cols:
            raise ShapeError("orthogonal init needs a square target", (rows, cols))
        return orthogonal_init(rows, rng)
    if kind == "zeros":
        return np.zeros((rows, cols))
    raise ValueError(f"unknown init kind {kind!r}")


def finite_diff_grad(
    f: Callable[[np.ndarray], float], theta, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + eps
        fp = float(f(theta.copy()))
        theta[i] = orig - eps
        fm = float(f(theta.copy()))
        theta[i] = orig
        if not np.isfinite(fp):
            raise GradientOracleError(i, fp)
        if not np.isfinite(fm):
            raise GradientOracleError(i, fm)
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-7) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ShapeError("max_relative_error", a.shape, n.shape)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
