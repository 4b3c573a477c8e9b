"""Rate matrix, boundary vector and the stationary levels ``pi_k = pi_0 R^k``.

Balance across the cut between levels ``n-1`` and ``n`` for ``n >= 1``
involves ``pi_{n-1} A0``, ``pi_n A1`` and ``pi_{n+b} Ab`` (``Ab`` sits ``b``
levels below the diagonal), so ``R`` is the minimal nonnegative solution of

    A0 + R A1 + R^(b+1) Ab = 0.

``exponent="literal"`` swaps in ``R^b`` for the last term. That variant is
kept only to demonstrate that it does not describe this chain (at ``b = 1``
it forces a stochastic ``R`` with spectral radius 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceError, ModelInconsistencyError, UnstableModelError
from .linalg import inf_norm, left_null_vector, lu_invert, power, spectral_radius
from .model import BlockMatrices, QueueParameters, build_block_matrices, stability_from_blocks

__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
    "RateMatrixResult",
    "MatGeomSolution",
    "iterate_rate_matrix",
    "solve_rate_matrix",
    "rate_equation_defect",
    "boundary_matrix",
    "boundary_vector",
    "stationary_level",
    "solve",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
# How often the iteration re-checks that sp(R_N) is still below 1.
_GUARD_EVERY = 1000

EXPONENTS = ("corrected", "literal")


class RateMatrixResult(NamedTuple):
    rate_matrix: np.ndarray
    iterations: int
    residual: float


def _row0_only(m, name):
    if np.any(m[1:]):
        raise ModelInconsistencyError(f"{name} must vanish outside row 0")
    return m[0]


def _krylov_e0(r, count):
    """Columns ``R^1 e0, ..., R^count e0`` stacked as rows of a (count, n) array."""
    n = r.shape[0]
    out = np.empty((count, n))
    v = np.zeros(n)
    v[0] = 1.0
    for k in range(count):
        v = r @ v
        out[k] = v
    return out


def _power_e0(r, exp):
    v = np.zeros(r.shape[0])
    v[0] = 1.0
    for _ in range(exp):
        v = r @ v
    return v


def _high_power_term(r, ab_row, exp):
    """``R^exp @ Ab`` for an ``Ab`` that is zero outside row 0."""
    return np.outer(_power_e0(r, exp), ab_row)


def _exponent(matrices, exponent):
    if exponent not in EXPONENTS:
        raise ValueError(f"exponent must be one of {EXPONENTS}, got {exponent!r}")
    b = matrices.block_size
    return b + 1 if exponent == "corrected" else b


def rate_equation_defect(matrices: BlockMatrices, r, exponent="corrected"):
    """Infinity norm of ``A0 + R A1 + R^p Ab`` (``p = b+1``, or ``b`` for the literal variant)."""
    ab_row = _row0_only(matrices.ab, "Ab")
    p = _exponent(matrices, exponent)
    return inf_norm(matrices.a0 + r @ matrices.a1 + _high_power_term(r, ab_row, p))


def iterate_rate_matrix(matrices: BlockMatrices, exponent="corrected"):
    """Yield ``R_1, R_2, ...`` of ``R_{N+1} = (A0 + R_N^p Ab)(-A1)^-1`` from ``R_0 = 0``.

    ``(-A1)^-1`` is factored once. Since ``Ab`` lives in row 0,
    ``R^p Ab = (R^p e0) Ab[0]``; the product with ``(-A1)^-1`` then splits
    into the constant ``A0 (-A1)^-1`` plus a rank-one update.
    """
    p = _exponent(matrices, exponent)
    ab_row = _row0_only(matrices.ab, "Ab")
    # -A1 is a nonsingular M-matrix, so its inverse is entrywise nonnegative;
    # clipping removes LU rounding noise that would otherwise leak into R
    inv = np.maximum(lu_invert(-matrices.a1), 0.0)
    const = matrices.a0 @ inv
    w = ab_row @ inv
    n = matrices.size
    r = np.zeros((n, n))
    while True:
        col = _power_e0(r, p)
        r = const + np.outer(col, w)
        yield r


def solve_rate_matrix(matrices: BlockMatrices, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                      exponent="corrected") -> RateMatrixResult:
    """Minimal nonnegative ``R`` by the natural monotone fixed-point iteration.

    Stops once successive iterates differ by less than ``tol`` in max norm
    and the geometric extrapolation of the remaining error, ``d q/(1-q)``
    with ``q`` the ratio of the last two steps, is below ``tol`` as well.
    For ``exponent="corrected"`` the mean-drift condition is checked first
    and ``sp(R_N)`` is re-checked periodically; either reaching 1 raises
    :class:`UnstableModelError`. The literal variant skips the guard so its
    (inadmissible) limit can be inspected.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    guarded = exponent == "corrected"
    if guarded:
        report = stability_from_blocks(matrices)
        if not report.is_stable:
            raise UnstableModelError(
                f"mean drift down {report.drift_down:.6g} <= drift up {report.drift_up:.6g}",
                stability=report,
            )
    prev = np.zeros((matrices.size, matrices.size))
    diff = float("inf")
    for it, r in enumerate(iterate_rate_matrix(matrices, exponent), start=1):
        last, diff = diff, float(np.max(np.abs(r - prev)))
        prev = r
        if diff < tol:
            q = diff / last if last > 0 else 0.0
            if diff == 0.0 or (q < 1.0 and diff * q / (1.0 - q) < tol):
                break
        if guarded and it % _GUARD_EVERY == 0 and spectral_radius(r) >= 1.0:
            raise UnstableModelError(f"sp(R_{it}) reached 1; the chain is not positive recurrent")
        if it >= max_iter:
            raise ConvergenceError(
                f"rate matrix iteration did not converge in {max_iter} steps "
                f"(last step {diff:.3e})",
                last=r,
                residual=rate_equation_defect(matrices, r, exponent),
                iterations=it,
            )
    residual = rate_equation_defect(matrices, prev, exponent)
    if guarded and spectral_radius(prev) >= 1.0:
        raise UnstableModelError("converged rate matrix has spectral radius >= 1")
    return RateMatrixResult(prev, it, residual)


def boundary_matrix(matrices: BlockMatrices, r):
    """``B[R] = sum_{k=0}^{b} R^k B_k``; a conservative generator for the true ``R``."""
    b = matrices.block_size
    cols = _krylov_e0(r, b)
    rows = np.array([matrices.boundary.row0(k) for k in range(1, b + 1)])
    return matrices.boundary.b0 + cols.T @ rows


def boundary_vector(matrices: BlockMatrices, r, neumann_inv=None, rowsum_tol=1e-10):
    """Boundary vector ``pi_0``: ``pi_0 B[R] = 0``, ``pi_0 (I-R)^-1 e = 1``.

    Raises :class:`ModelInconsistencyError` if ``B[R]`` is not conservative,
    which is what happens for an ``R`` that does not solve the chain's
    rate equation.
    """
    br = boundary_matrix(matrices, r)
    rows = br.sum(axis=1)
    bound = rowsum_tol * max(1.0, inf_norm(matrices.boundary.b0))
    if np.max(np.abs(rows)) > bound:
        raise ModelInconsistencyError(
            f"B[R] row sums deviate from 0 by {np.max(np.abs(rows)):.3e}"
        )
    v = left_null_vector(br)
    if neumann_inv is None:
        neumann_inv = lu_invert(np.eye(r.shape[0]) - r)
    return v / float(v @ neumann_inv.sum(axis=1))


@dataclass(frozen=True, eq=False)
class MatGeomSolution:
    params: QueueParameters
    matrices: BlockMatrices = field(repr=False)
    rate_matrix: np.ndarray = field(repr=False)
    boundary_pi0: np.ndarray
    neumann_inv: np.ndarray = field(repr=False)
    neumann_inv_sq: np.ndarray = field(repr=False)
    block_inv: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    spectral_radius: float

    def level(self, k):
        return stationary_level(self, k)

    def levels(self, count):
        """``pi_0 .. pi_{count-1}`` as rows of an array."""
        out = np.empty((count, self.rate_matrix.shape[0]))
        v = self.boundary_pi0
        for k in range(count):
            out[k] = v
            v = v @ self.rate_matrix
        return out

    def diagnostics(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "spectral_radius": self.spectral_radius,
        }


def stationary_level(solution: MatGeomSolution, k: int):
    if k < 0:
        raise ValueError("level must be nonnegative")
    if k == 0:
        return solution.boundary_pi0
    return solution.boundary_pi0 @ power(solution.rate_matrix, k)


def solve(params: QueueParameters, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> MatGeomSolution:
    matrices = build_block_matrices(params)
    r, iterations, residual = solve_rate_matrix(matrices, tol=tol, max_iter=max_iter)
    n = matrices.size
    eye = np.eye(n)
    neumann_inv = lu_invert(eye - r)
    pi0 = boundary_vector(matrices, r, neumann_inv=neumann_inv)
    block_inv = lu_invert(eye - power(r, params.b))
    for m in (r, pi0, neumann_inv, block_inv):
        m.setflags(write=False)
    sq = neumann_inv @ neumann_inv
    sq.setflags(write=False)
    return MatGeomSolution(
        params=params,
        matrices=matrices,
        rate_matrix=r,
        boundary_pi0=pi0,
        neumann_inv=neumann_inv,
        neumann_inv_sq=sq,
        block_inv=block_inv,
        iterations=iterations,
        residual=residual,
        spectral_radius=spectral_radius(r),
    )
