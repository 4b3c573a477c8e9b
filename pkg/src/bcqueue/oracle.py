"""Independent reference values.

* :func:`truncated_measures` solves the chain directly on levels
  ``0..L`` with arrivals blocked at level ``L``. The generator is
  assembled from the transition rules themselves, not from the block
  matrices used by the matrix-geometric path.
* :func:`mg1_erlang_oracle` covers ``b = 1``, where the system is an M/G/1
  queue whose service is a generation followed by a build.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import OracleSizeError, ParameterError, TruncationError, UnstableModelError
from .linalg import left_null_vector
from .model import QueueParameters, stability

__all__ = [
    "MAX_ORACLE_STATES",
    "MeasureTriple",
    "TruncatedModel",
    "TruncatedResult",
    "truncated_generator",
    "truncated_measures",
    "mg1_erlang_oracle",
]

MAX_ORACLE_STATES = 2000


class MeasureTriple(NamedTuple):
    mean_queue: float
    mean_block: float
    mean_confirmation: float


def state_index(b, i, j):
    return j * (b + 1) + i


@dataclass(frozen=True, eq=False)
class TruncatedModel:
    params: QueueParameters
    level_cap: int
    generator: np.ndarray = field(repr=False)

    @property
    def n_states(self):
        return self.generator.shape[0]


def truncated_generator(params: QueueParameters, level_cap: int) -> TruncatedModel:
    b = params.b
    if level_cap < b + 2:
        raise ParameterError(f"level_cap must be >= b + 2 = {b + 2}, got {level_cap}")
    n = (b + 1) * (level_cap + 1)
    if n > MAX_ORACLE_STATES:
        raise OracleSizeError(
            f"truncated chain would have {n} states (limit {MAX_ORACLE_STATES}); "
            "lower level_cap or use the matrix-geometric solver"
        )
    q = np.zeros((n, n))
    for j in range(level_cap + 1):
        for i in range(b + 1):
            s = state_index(b, i, j)
            if j < level_cap:
                q[s, state_index(b, i, j + 1)] += params.lam
            if i == 0 and j > 0:
                take = min(j, b)
                q[s, state_index(b, take, j - take)] += params.mu2
            if i > 0:
                q[s, state_index(b, 0, j)] += params.mu1
    np.fill_diagonal(q, -q.sum(axis=1))
    return TruncatedModel(params, level_cap, q)


class TruncatedResult(NamedTuple):
    mean_queue: float
    mean_block: float
    mean_confirmation: float
    tail_mass: float
    level_cap: int

    @property
    def triple(self):
        return MeasureTriple(self.mean_queue, self.mean_block, self.mean_confirmation)


def truncated_measures(params: QueueParameters, level_cap=200, max_tail=1e-10) -> TruncatedResult:
    """Direct stationary solve of the truncated chain.

    ``tail_mass`` is the probability of the top ``b + 1`` levels; a value
    above ``max_tail`` means the cap biases the answer and raises
    :class:`TruncationError`. ``E[T]`` averages the per-state expected
    confirmation time over the states seen by accepted arrivals.
    """
    if not stability(params).is_stable:
        raise UnstableModelError("truncated oracle needs a stable parameter set",
                                 stability=stability(params))
    model = truncated_generator(params, level_cap)
    b = params.b
    pi = left_null_vector(model.generator).reshape(level_cap + 1, b + 1)
    levels = np.arange(level_cap + 1)
    phases = np.arange(b + 1)
    tail = float(pi[level_cap - b:].sum())
    if tail > max_tail:
        raise TruncationError(
            f"mass {tail:.3e} within b levels of the cap {level_cap}; increase level_cap",
            tail_mass=tail,
        )
    ej = float(levels @ pi.sum(axis=1))
    ei = float(pi.sum(axis=0) @ phases)
    cycle = params.cycle_time
    k = levels // b
    # an arrival seeing (i, j) joins batch j//b + 1; i > 0 adds a residual build
    weight = np.outer((k + 1) * cycle, np.ones(b + 1))
    weight[:, 1:] += 1.0 / params.mu1
    accepted = pi[:level_cap]
    et = float((accepted * weight[:level_cap]).sum() / accepted.sum())
    return TruncatedResult(ej, ei, et, tail, level_cap)


def mg1_erlang_oracle(params: QueueParameters) -> MeasureTriple:
    """Pollaczek-Khinchine values for ``b = 1``.

    Service is exponential(``mu2``) generation followed by exponential(``mu1``)
    build, so ``E[S] = 1/mu1 + 1/mu2`` and
    ``E[S^2] = 2/mu1^2 + 2/mu2^2 + 2/(mu1 mu2)``. The block holds a
    transaction exactly while it is being built, hence ``E[I] = lam/mu1``.
    """
    if params.b != 1:
        raise ParameterError("the M/G/1 oracle applies only to max_block_size = 1")
    lam, mu1, mu2 = params.lam, params.mu1, params.mu2
    es = 1.0 / mu1 + 1.0 / mu2
    rho = lam * es
    if rho >= 1.0:
        raise UnstableModelError(f"M/G/1 load {rho:.6g} >= 1")
    es2 = 2.0 / mu1**2 + 2.0 / mu2**2 + 2.0 / (mu1 * mu2)
    et = es + lam * es2 / (2.0 * (1.0 - rho))
    ei = lam / mu1
    return MeasureTriple(lam * et - ei, ei, et)
