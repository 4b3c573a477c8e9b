"""Dense real-matrix kernel used by the analytic modules.

Matrices are plain 2-D ``float64`` numpy arrays. :func:`as_matrix` is the
validating constructor; the operations below accept anything it accepts
and never mutate their inputs.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    ConvergenceError,
    DimensionError,
    NonMarkovError,
    RankError,
    SingularMatrixError,
)

__all__ = [
    "as_matrix",
    "multiply",
    "power",
    "lu_invert",
    "left_null_vector",
    "spectral_radius",
    "inf_norm",
]

PIVOT_FLOOR = 1e-300
NEGATIVE_SLACK = 1e-12


def as_matrix(data, name="matrix"):
    """Return ``data`` as a finite 2-D float64 array.

    Raises
    ------
    ValueError
        If the input is not two-dimensional, is empty, or holds NaN/Inf.
    """
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _square(m, op):
    if m.shape[0] != m.shape[1]:
        raise DimensionError(op, m.shape)
    return m


def inf_norm(m):
    """Maximum absolute row sum."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return float(np.max(np.abs(m))) if m.size else 0.0
    return float(np.max(np.sum(np.abs(m), axis=1)))


def multiply(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError("multiply", a.shape, b.shape)
    return a @ b


def power(m, k):
    """``m**k`` by repeated squaring; ``power(m, 0)`` is the identity."""
    m = _square(as_matrix(m), "power")
    if k < 0 or int(k) != k:
        raise ValueError(f"exponent must be a nonnegative integer, got {k!r}")
    k = int(k)
    result = np.eye(m.shape[0])
    base = m
    first = True
    while k:
        if k & 1:
            result = base.copy() if first else result @ base
            first = False
        k >>= 1
        if k:
            base = base @ base
    return result


def _lu(m, op):
    m = _square(as_matrix(m), op)
    scale = max(float(np.max(np.abs(m))), 1.0)
    with warnings.catch_warnings():
        # singular pivots are reported below with their index
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag <= PIVOT_FLOOR * scale)
    if bad.size:
        k = int(bad[0])
        raise SingularMatrixError(k, float(lu[k, k]))
    return lu, piv


def lu_invert(m):
    """Inverse via LU with partial pivoting.

    Raises :class:`SingularMatrixError` carrying the index of the first
    pivot that falls below ``1e-300`` relative to the largest entry.
    """
    lu, piv = _lu(m, "lu_invert")
    return scipy.linalg.lu_solve((lu, piv), np.eye(lu.shape[0]), check_finite=False)


def lu_solve_left(m, rhs):
    """Solve the row system ``x @ m = rhs``."""
    lu, piv = _lu(m, "lu_solve_left")
    return scipy.linalg.lu_solve((lu, piv), np.asarray(rhs, dtype=np.float64), trans=1,
                                 check_finite=False)


def left_null_vector(m, tol=1e-10):
    """Normalized nonnegative row vector ``v`` with ``v @ m = 0`` and ``sum(v) = 1``.

    The last column of ``m`` is replaced by the normalization row of ones
    and the resulting square system is solved by LU. For a generator
    (zero row sums) any single column is redundant, so this loses nothing
    when the rank is ``n - 1``.
    """
    m = _square(as_matrix(m), "left_null_vector")
    n = m.shape[0]
    if n == 1:
        if abs(m[0, 0]) > tol * max(1.0, abs(m[0, 0])):
            raise RankError("1x1 matrix is nonzero; it has no left null vector")
        return np.ones(1)
    system = m.copy()
    system[:, -1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        v = lu_solve_left(system, rhs)
    except SingularMatrixError as exc:
        raise RankError(
            f"null space of the {n}x{n} matrix has dimension > 1 (pivot {exc.pivot_index})"
        ) from exc
    scale = max(inf_norm(m), 1.0)
    defect = float(np.max(np.abs(v @ m)))
    if not np.isfinite(defect) or defect > tol * scale:
        raise RankError(f"matrix has full rank; best null-vector defect {defect:.3e}")
    if np.min(v) < -NEGATIVE_SLACK:
        raise NonMarkovError(f"null vector has negative entry {np.min(v):.3e}")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def _perron_root(block, tol, max_iter):
    # Irreducible nonnegative block: the Perron vector is positive, so the
    # Collatz-Wielandt ratios of (block + shift*I) bracket the root. Squaring
    # doubles the effective power-iteration count each step.
    n = block.shape[0]
    # Diagonal balancing keeps the block nonnegative and the spectrum fixed
    # while evening out badly scaled entries; a shift of one row-sum norm
    # makes the block primitive without swamping the root in rounding.
    scale = float(np.max(block))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        block = scipy.linalg.matrix_balance(block / scale, permute=False, separate=False)[0]
    shift = inf_norm(block)
    shifted = block + shift * np.eye(n)
    p = shifted / np.max(shifted)
    x = np.ones(n)
    lo = hi = float("nan")
    for it in range(1, max_iter + 1):
        y = shifted @ x
        live = x > 1e-100 * np.max(x)
        ratios = y[live] / x[live]
        lo, hi = float(np.min(ratios)), float(np.max(ratios))
        estimate = 0.5 * (lo + hi) - shift
        if hi - lo <= tol * max(lo - shift, 0.0) or hi - lo <= 4 * np.finfo(float).eps * hi:
            return max(estimate, 0.0) * scale
        p = p @ p
        p /= np.max(p)
        x = p.sum(axis=1)
        x /= np.max(x)
    raise ConvergenceError(
        f"spectral radius did not converge in {max_iter} squaring steps "
        f"(bracket [{(lo - shift) * scale:.12g}, {(hi - shift) * scale:.12g}])",
        last=x,
        residual=hi - lo,
        iterations=max_iter,
    )


def spectral_radius(m, tol=1e-10, max_iter=200):
    """Dominant eigenvalue modulus of a nonnegative square matrix.

    The matrix is split into the strongly connected components of its
    nonzero pattern (the spectral radius of a reducible matrix is the
    largest over its irreducible diagonal blocks), and each block is
    handled by squaring-accelerated power iteration.
    """
    m = _square(as_matrix(m), "spectral_radius")
    if np.min(m) < 0.0:
        raise ValueError("spectral_radius requires a nonnegative matrix")
    if not np.any(m):
        return 0.0
    n_comp, labels = connected_components(m != 0.0, directed=True, connection="strong")
    best = 0.0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        if idx.size == 1:
            best = max(best, float(m[idx[0], idx[0]]))
        else:
            best = max(best, _perron_root(m[np.ix_(idx, idx)], tol, max_iter))
    return best
