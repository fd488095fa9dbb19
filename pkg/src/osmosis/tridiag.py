"""Batched tridiagonal LU (Thomas algorithm) over independent grid lines.

Factorization and solves run line-parallel under numba. Each line is swept
sequentially and lines share nothing, so results do not depend on the number
of worker threads.

Lines are stored either as rows (``columns=False``) or as columns of a
row-major array (``columns=True``). The column layout sweeps all lines of a
block together row by row, so solving along image columns streams memory
contiguously instead of transposing the image twice per step.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .errors import SingularSystemError

__all__ = ["TridiagonalLU", "factorize", "resolve_threads", "set_threads"]


def resolve_threads(threads: int | None = None) -> int:
    """Thread count from the argument, ``OSMOSIS_THREADS``, or numba's default."""
    if threads is None:
        env = os.environ.get("OSMOSIS_THREADS")
        threads = int(env) if env else numba.config.NUMBA_NUM_THREADS
    return max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))


def set_threads(threads: int | None = None) -> int:
    n = resolve_threads(threads)
    numba.set_num_threads(n)
    return n


@njit(parallel=True, cache=True, nogil=True, error_model="numpy")
def _factor_lines(lower, main, upper):
    n_lines, n = main.shape
    mult = np.empty((n_lines, max(n - 1, 0)))
    inv_piv = np.empty((n_lines, n))
    for line in prange(n_lines):
        piv = main[line, 0]
        inv_piv[line, 0] = 1.0 / piv
        for k in range(1, n):
            m = lower[line, k - 1] / piv
            mult[line, k - 1] = m
            piv = main[line, k] - m * upper[line, k - 1]
            inv_piv[line, k] = 1.0 / piv
    return mult, inv_piv


@njit(parallel=True, cache=True, nogil=True, error_model="numpy")
def _solve_lines(mult, inv_piv, upper, rhs, x):
    n_lines, n = rhs.shape
    for line in prange(n_lines):
        y = rhs[line, 0]
        x[line, 0] = y
        for k in range(1, n):
            y = rhs[line, k] - mult[line, k - 1] * y
            x[line, k] = y
        xk = x[line, n - 1] * inv_piv[line, n - 1]
        x[line, n - 1] = xk
        for k in range(n - 2, -1, -1):
            xk = (x[line, k] - upper[line, k] * xk) * inv_piv[line, k]
            x[line, k] = xk


# lines per work item in the column layout; blocking only changes scheduling
_BLOCK = 512


@njit(parallel=True, cache=True, nogil=True, error_model="numpy")
def _factor_columns(lower, main, upper):
    n, n_lines = main.shape
    mult = np.empty((max(n - 1, 0), n_lines))
    inv_piv = np.empty((n, n_lines))
    n_blocks = (n_lines + _BLOCK - 1) // _BLOCK
    for b in prange(n_blocks):
        lo, hi = b * _BLOCK, min((b + 1) * _BLOCK, n_lines)
        piv = main[0, lo:hi].copy()
        inv_piv[0, lo:hi] = 1.0 / piv
        for k in range(1, n):
            for c in range(lo, hi):
                m = lower[k - 1, c] / piv[c - lo]
                mult[k - 1, c] = m
                p = main[k, c] - m * upper[k - 1, c]
                piv[c - lo] = p
                inv_piv[k, c] = 1.0 / p
    return mult, inv_piv


@njit(parallel=True, cache=True, nogil=True, error_model="numpy")
def _solve_columns(mult, inv_piv, upper, rhs, x):
    n, n_lines = rhs.shape
    n_blocks = (n_lines + _BLOCK - 1) // _BLOCK
    for b in prange(n_blocks):
        lo, hi = b * _BLOCK, min((b + 1) * _BLOCK, n_lines)
        for c in range(lo, hi):
            x[0, c] = rhs[0, c]
        for k in range(1, n):
            for c in range(lo, hi):
                x[k, c] = rhs[k, c] - mult[k - 1, c] * x[k - 1, c]
        for c in range(lo, hi):
            x[n - 1, c] = x[n - 1, c] * inv_piv[n - 1, c]
        for k in range(n - 2, -1, -1):
            for c in range(lo, hi):
                x[k, c] = (x[k, c] - upper[k, c] * x[k + 1, c]) * inv_piv[k, c]


@njit(parallel=True, cache=True, nogil=True, error_model="numpy")
def _solve_columns_average(mult, inv_piv, upper, rhs, y, acc):
    # as _solve_columns, but the backward sweep folds x into acc <- (acc + x) / 2
    n, n_lines = rhs.shape
    n_blocks = (n_lines + _BLOCK - 1) // _BLOCK
    for b in prange(n_blocks):
        lo, hi = b * _BLOCK, min((b + 1) * _BLOCK, n_lines)
        for c in range(lo, hi):
            y[0, c] = rhs[0, c]
        for k in range(1, n):
            for c in range(lo, hi):
                y[k, c] = rhs[k, c] - mult[k - 1, c] * y[k - 1, c]
        for c in range(lo, hi):
            y[n - 1, c] = y[n - 1, c] * inv_piv[n - 1, c]
            acc[n - 1, c] = (acc[n - 1, c] + y[n - 1, c]) * 0.5
        for k in range(n - 2, -1, -1):
            for c in range(lo, hi):
                x = (y[k, c] - upper[k, c] * y[k + 1, c]) * inv_piv[k, c]
                y[k, c] = x
                acc[k, c] = (acc[k, c] + x) * 0.5


@dataclass(frozen=True, eq=False)
class TridiagonalLU:
    """LU factors of a stack of tridiagonal systems.

    ``mult`` holds the unit-lower multipliers, ``inv_piv`` the reciprocal
    pivots of ``U`` and ``upper`` its superdiagonal. With ``columns`` set,
    each system runs down a column of these arrays, otherwise along a row.
    """

    mult: np.ndarray
    inv_piv: np.ndarray
    upper: np.ndarray
    columns: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.inv_piv.shape

    def solve(self, rhs: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Solve every line system; ``rhs`` has the layout of :attr:`shape`.

        ``out`` may be a preallocated C-contiguous float64 array; it must not
        share memory with ``rhs``. Reusing it across calls avoids page faults
        from fresh large allocations.
        """
        rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        if rhs.shape != self.shape:
            raise ValueError(f"right-hand side {rhs.shape} does not match factors {self.shape}")
        if out is None:
            out = np.empty_like(rhs)
        elif out.shape != rhs.shape or out.dtype != np.float64 or not out.flags.c_contiguous:
            raise ValueError("out must be a C-contiguous float64 array shaped like rhs")
        elif np.shares_memory(out, rhs):
            raise ValueError("out must not overlap rhs")
        kernel = _solve_columns if self.columns else _solve_lines
        kernel(self.mult, self.inv_piv, self.upper, rhs, out)
        return out

    def solve_average(self, rhs: np.ndarray, acc: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
        """Overwrite ``acc`` with ``(acc + x) / 2`` where ``x`` solves the systems for ``rhs``.

        ``work`` is scratch space shaped like ``rhs``. Neither buffer may
        overlap ``rhs``.
        """
        rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        for name, buf in (("acc", acc), ("work", work)):
            if buf is None:
                continue
            if buf.shape != self.shape or buf.dtype != np.float64 or not buf.flags.c_contiguous:
                raise ValueError(f"{name} must be a C-contiguous float64 array of shape {self.shape}")
            if np.shares_memory(buf, rhs):
                raise ValueError(f"{name} must not overlap rhs")
        if not self.columns:
            x = self.solve(rhs, work)
            np.add(acc, x, out=acc)
            acc *= 0.5
            return acc
        if rhs.shape != self.shape:
            raise ValueError(f"right-hand side {rhs.shape} does not match factors {self.shape}")
        if work is None:
            work = np.empty_like(rhs)
        _solve_columns_average(self.mult, self.inv_piv, self.upper, rhs, work, acc)
        return acc


def factorize(
    lower: np.ndarray, main: np.ndarray, upper: np.ndarray, axis: str = "line", columns: bool = False
) -> TridiagonalLU:
    """Factor ``n_lines`` tridiagonal systems without pivoting.

    The diagonals are always given one line per row, ``main`` of shape
    ``(n_lines, n)``. ``columns=True`` stores the factors transposed so that
    :meth:`TridiagonalLU.solve` takes right-hand sides of shape
    ``(n, n_lines)``.

    Raises :class:`SingularSystemError` naming the first line with a zero or
    non-finite pivot.
    """
    if columns:
        lower, main, upper = (np.array(np.transpose(a), dtype=np.float64, order="C") for a in (lower, main, upper))
        mult, inv_piv = _factor_columns(lower, main, upper)
        line_axis = 0
    else:
        lower = np.ascontiguousarray(lower, dtype=np.float64)
        main = np.ascontiguousarray(main, dtype=np.float64)
        upper = np.array(upper, dtype=np.float64, order="C")
        mult, inv_piv = _factor_lines(lower, main, upper)
        line_axis = 1
    bad = ~np.isfinite(inv_piv).all(axis=line_axis) | ~np.isfinite(mult).all(axis=line_axis)
    if bad.any():
        raise SingularSystemError(axis, int(np.argmax(bad)))
    for a in (mult, inv_piv, upper):
        a.setflags(write=False)
    return TridiagonalLU(mult, inv_piv, upper, columns)
