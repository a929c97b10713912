"""Dense float64 matrix helpers.

A matrix is a 2-D ``numpy.ndarray`` of dtype float64. A batch of N samples
with D features is an N x D matrix. Every function here returns a new array
and never mutates its arguments.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Matrix = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Coerce nested sequences (or a flat sequence plus dims) to a float64 matrix."""
    m = np.array(values, dtype=np.float64)
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise ShapeError("both rows and cols are required to reshape")
        if m.size != rows * cols:
            raise ShapeError(f"cannot shape {m.size} values as {rows}x{cols}")
        m = m.reshape(rows, cols)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimensions")
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def ones(rows: int, cols: int) -> Matrix:
    return np.ones((rows, cols), dtype=np.float64)


def _check_2d(*ms: Matrix) -> None:
    for m in ms:
        if np.ndim(m) != 2:
            raise ShapeError(f"expected a 2-D matrix, got shape {np.shape(m)}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    _check_2d(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def add_row_broadcast(m: Matrix, bias: Matrix) -> Matrix:
    """Add a 1 x C row vector to every row of an R x C matrix."""
    _check_2d(m, bias)
    if bias.shape != (1, m.shape[1]):
        raise ShapeError(f"bias shape {bias.shape} does not broadcast over {m.shape}")
    return m + bias


def elementwise(m: Matrix, f: Callable[[float], float]) -> Matrix:
    """Apply a scalar function to every entry (slow path; prefer ufuncs)."""
    _check_2d(m)
    out = np.empty_like(m, dtype=np.float64)
    flat_in = m.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = f(float(flat_in[i]))
    return out


def transpose(m: Matrix) -> Matrix:
    _check_2d(m)
    return np.ascontiguousarray(m.T)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    _check_2d(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def scale(m: Matrix, c: float) -> Matrix:
    _check_2d(m)
    return m * float(c)


def sum_rows(m: Matrix) -> Matrix:
    """Column sums, returned as a 1 x C row."""
    _check_2d(m)
    return m.sum(axis=0, keepdims=True)
