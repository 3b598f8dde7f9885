"""Dense matrix arithmetic and seeded random generation.

Matrices are plain 2-D float64 numpy arrays in row-major layout; rows are
the batch dimension throughout the package. The helpers here add the shape
and finiteness checking the rest of the code relies on, so training code
never has to defend against silently broadcast numpy results.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError

Matrix = np.ndarray
Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """Seeded generator; identical seeds give identical draw sequences.

    Philox is counter-based, so streams are stable across platforms. Every
    generator in the package is created here.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[Rng]:
    """n independent child generators derived from one seed."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def as_matrix(data) -> Matrix:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def ensure_finite(m: Matrix, context: str = "matrix") -> Matrix:
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{context} contains non-finite entries")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def elementwise(a: Matrix, b: Matrix, op: str) -> Matrix:
    """Entrywise add/sub/mul of two same-shape matrices."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise DomainError(f"unknown elementwise op {op!r}")


def init_uniform_scaled(rows: int, cols: int, rng: Rng) -> Matrix:
    """Uniform draws on [-s, s] with s = sqrt(6 / (rows + cols)).

    The bound keeps forward activations at unit scale for layers of either
    orientation, which is all the initialization the models here need.
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def zeros(rows: int, cols: int) -> Matrix:
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    return np.zeros((rows, cols))
