"""Stationary performance measures computed from a solved rate matrix.

``E[T]`` is computed two ways: the closed form in ``pi_0`` and ``R``, and
the level-by-level series over the states seen by an arriving
transaction. Their agreement, together with Little's law
``E[J] + E[I] = lam E[T]``, is the main internal consistency check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .matgeom import DEFAULT_MAX_ITER, DEFAULT_TOL, MatGeomSolution, solve
from .model import QueueParameters, StabilityReport, stability

__all__ = [
    "DEFAULT_TAIL_EPS",
    "ConfirmationTerms",
    "SeriesEstimate",
    "PerformanceReport",
    "mean_queue_length",
    "mean_block_content",
    "confirmation_time_terms",
    "mean_confirmation_time_closed",
    "mean_confirmation_time_series",
    "confirmation_weights",
    "evaluate",
    "report_from_solution",
]

DEFAULT_TAIL_EPS = 1e-9


class ConfirmationTerms(NamedTuple):
    residual_build: float
    full_cycles: float


class SeriesEstimate(NamedTuple):
    value: float
    truncation_k: int
    tail_bound: float


def mean_queue_length(solution: MatGeomSolution) -> float:
    """``E[J] = pi_0 R (I-R)^-2 e``."""
    e = np.ones(solution.rate_matrix.shape[0])
    return float(solution.boundary_pi0 @ solution.rate_matrix @ (solution.neumann_inv_sq @ e))


def mean_block_content(solution: MatGeomSolution) -> float:
    """``E[I] = pi_0 (I-R)^-1 h`` with ``h = (0, 1, ..., b)``."""
    h = np.arange(solution.rate_matrix.shape[0], dtype=float)
    return float(solution.boundary_pi0 @ solution.neumann_inv @ h)


def confirmation_time_terms(solution: MatGeomSolution, params: QueueParameters):
    """The two summands of the closed-form ``E[T]``.

    ``residual_build`` is ``P(block nonempty) / mu1``: the expected remaining
    build an arrival waits out. ``full_cycles`` charges one generation plus
    one build per batch ahead of (and including) the arrival's own.
    """
    marginal = solution.boundary_pi0 @ solution.neumann_inv
    first = (float(marginal.sum()) - float(marginal[0])) / params.mu1
    e = np.ones(marginal.shape[0])
    cycles = float(solution.boundary_pi0 @ solution.block_inv @ (solution.neumann_inv @ e))
    return ConfirmationTerms(first, params.cycle_time * cycles)


def mean_confirmation_time_closed(solution: MatGeomSolution, params: QueueParameters) -> float:
    return sum(confirmation_time_terms(solution, params))


def confirmation_weights(params: QueueParameters, level: int):
    """Expected confirmation time of an arrival that finds ``level`` queued, per phase.

    The arrival lands in batch ``level // b + 1``; each batch costs one
    generation plus one build, and a nonempty block adds its remaining build.
    """
    b = params.b
    k = level // b
    w = np.full(b + 1, 1.0 / params.mu1 + (k + 1) * params.cycle_time)
    w[0] = (k + 1) * params.cycle_time
    return w


def _series_tail(solution, params, v, k_next):
    # Levels from k_next*b on: weight <= 1/mu1 + (k_next + 1 + m/b) * cycle for
    # offset m, and sum_m pi R^m e, sum_m m pi R^m e have closed forms.
    e = np.ones(v.shape[0])
    mass = float(v @ solution.neumann_inv @ e)
    spread = float(v @ solution.rate_matrix @ (solution.neumann_inv_sq @ e))
    head = 1.0 / params.mu1 + (k_next + 1) * params.cycle_time
    return head * mass + params.cycle_time / params.b * spread


def mean_confirmation_time_series(solution: MatGeomSolution, params: QueueParameters,
                                  tail_eps=DEFAULT_TAIL_EPS, max_k=10_000_000) -> SeriesEstimate:
    """Truncated series for ``E[T]`` over arrival-seen states ``(i, kb + l)``.

    Sums whole batches ``k = 0..K`` and stops at the first ``K`` whose
    remaining tail, bounded using the exact geometric sums of ``pi_0 R^j``,
    is at most ``tail_eps``.
    """
    if tail_eps <= 0:
        raise ValueError("tail_eps must be > 0")
    b = params.b
    r = solution.rate_matrix
    v = solution.boundary_pi0
    total = 0.0
    k = 0
    while True:
        base = confirmation_weights(params, k * b)
        for _ in range(b):
            total += float(v @ base)
            v = v @ r
        tail = _series_tail(solution, params, v, k + 1)
        if tail <= tail_eps:
            return SeriesEstimate(total, k, tail)
        k += 1
        if k > max_k:
            return SeriesEstimate(total, k - 1, tail)


@dataclass(frozen=True)
class PerformanceReport:
    params: QueueParameters
    mean_queue: float
    mean_block: float
    mean_confirmation_closed: float
    mean_confirmation_series: float
    littles_residual: float
    series_truncation_k: int
    series_tail_bound: float
    closed_terms: ConfirmationTerms
    stability: StabilityReport
    iterations: int
    residual: float
    spectral_radius: float

    @property
    def series_gap(self):
        return abs(self.mean_confirmation_closed - self.mean_confirmation_series)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "mean_queue": self.mean_queue,
            "mean_block": self.mean_block,
            "mean_confirmation_closed": self.mean_confirmation_closed,
            "mean_confirmation_series": self.mean_confirmation_series,
            "littles_residual": self.littles_residual,
            "series_truncation_k": self.series_truncation_k,
            "series_tail_bound": self.series_tail_bound,
            "closed_terms": self.closed_terms._asdict(),
            "stability": self.stability.to_dict(),
            "rate_matrix": {
                "iterations": self.iterations,
                "residual": self.residual,
                "spectral_radius": self.spectral_radius,
            },
        }


def report_from_solution(solution: MatGeomSolution, tail_eps=DEFAULT_TAIL_EPS) -> PerformanceReport:
    params = solution.params
    ej = mean_queue_length(solution)
    ei = mean_block_content(solution)
    terms = confirmation_time_terms(solution, params)
    et = terms.residual_build + terms.full_cycles
    series = mean_confirmation_time_series(solution, params, tail_eps=tail_eps)
    return PerformanceReport(
        params=params,
        mean_queue=ej,
        mean_block=ei,
        mean_confirmation_closed=et,
        mean_confirmation_series=series.value,
        littles_residual=abs(ej + ei - params.lam * et),
        series_truncation_k=series.truncation_k,
        series_tail_bound=series.tail_bound,
        closed_terms=terms,
        stability=stability(params),
        iterations=solution.iterations,
        residual=solution.residual,
        spectral_radius=solution.spectral_radius,
    )


def evaluate(params: QueueParameters, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
             tail_eps=DEFAULT_TAIL_EPS) -> PerformanceReport:
    """Solve ``params`` and compute every measure.

    Raises :class:`~bcqueue.exceptions.UnstableModelError` when the queue is
    not positive recurrent.
    """
    return report_from_solution(solve(params, tol=tol, max_iter=max_iter), tail_eps=tail_eps)
