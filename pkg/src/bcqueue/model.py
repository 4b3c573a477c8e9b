"""Queue parameters, generator blocks and the stability test.

State ``(i, j)``: ``i`` transactions in the block being built (the phase,
0..b) and ``j`` transactions waiting in the queue (the level). The
generator is of GI/M/1 type: arrivals move one level up, a block
generation moves up to ``b`` levels down.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import ModelInconsistencyError, ParameterError
from .linalg import left_null_vector

__all__ = [
    "QueueParameters",
    "BlockMatrices",
    "StabilityReport",
    "build_block_matrices",
    "phase_stationary_theta",
    "stability",
    "stability_from_blocks",
]


def _check_rate(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class QueueParameters:
    """Rates of the two-stage batch-service queue.

    ``generate_rate`` drives the stage that pulls up to ``max_block_size``
    queued transactions into a block; ``build_rate`` drives the stage that
    appends the block to the chain and confirms its transactions.
    """

    arrival_rate: float
    build_rate: float
    generate_rate: float
    max_block_size: int

    def __post_init__(self):
        object.__setattr__(self, "arrival_rate", _check_rate("arrival_rate", self.arrival_rate))
        object.__setattr__(self, "build_rate", _check_rate("build_rate", self.build_rate))
        object.__setattr__(self, "generate_rate", _check_rate("generate_rate", self.generate_rate))
        b = self.max_block_size
        if isinstance(b, bool) or not isinstance(b, (int, np.integer)) or b < 1:
            raise ParameterError(f"max_block_size must be an integer >= 1, got {b!r}")
        object.__setattr__(self, "max_block_size", int(b))

    # short aliases matching the usual queueing notation
    @property
    def lam(self):
        return self.arrival_rate

    @property
    def mu1(self):
        return self.build_rate

    @property
    def mu2(self):
        return self.generate_rate

    @property
    def b(self):
        return self.max_block_size

    @property
    def cycle_time(self):
        """Mean length of one generation plus one build."""
        return 1.0 / self.build_rate + 1.0 / self.generate_rate

    def replace(self, **changes):
        fields = {
            "arrival_rate": self.arrival_rate,
            "build_rate": self.build_rate,
            "generate_rate": self.generate_rate,
            "max_block_size": self.max_block_size,
        }
        fields.update(changes)
        return QueueParameters(**fields)

    def to_dict(self):
        return {
            "arrival_rate": self.arrival_rate,
            "build_rate": self.build_rate,
            "generate_rate": self.generate_rate,
            "max_block_size": self.max_block_size,
        }


class BoundaryBlocks(Sequence):
    """The boundary blocks ``B_0 .. B_b`` materialized on access.

    Every ``B_k`` with ``k >= 1`` is zero outside row 0, so only those rows
    are stored; :meth:`row0` exposes them for structured products.
    """

    def __init__(self, b0, rows):
        self._b0 = b0
        self._rows = rows

    def __len__(self):
        return 1 + len(self._rows)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        if k == 0:
            return self._b0.copy()
        out = np.zeros_like(self._b0)
        out[0] = self._rows[k - 1]
        return out

    def row0(self, k):
        """Row 0 of ``B_k`` for ``k >= 1``."""
        return self._rows[k - 1]

    @property
    def b0(self):
        return self._b0


@dataclass(frozen=True, eq=False)
class BlockMatrices:
    a0: np.ndarray
    a1: np.ndarray
    ab: np.ndarray
    boundary: BoundaryBlocks

    @property
    def size(self):
        return self.a0.shape[0]

    @property
    def block_size(self):
        return self.a0.shape[0] - 1

    @property
    def phase_generator(self):
        return self.a0 + self.a1 + self.ab


def build_block_matrices(params: QueueParameters) -> BlockMatrices:
    lam, mu1, mu2, b = params.lam, params.mu1, params.mu2, params.b
    n = b + 1
    a0 = lam * np.eye(n)
    a1 = np.zeros((n, n))
    a1[0, 0] = -(lam + mu2)
    a1[1:, 0] = mu1
    a1[np.arange(1, n), np.arange(1, n)] = -(lam + mu1)
    ab = np.zeros((n, n))
    ab[0, b] = mu2
    b0 = a1.copy()
    b0[0, 0] = -lam
    rows = []
    for k in range(1, n):
        r = np.zeros(n)
        r[k] = mu2
        rows.append(r)
    for m in (a0, a1, ab, b0):
        m.setflags(write=False)
    return BlockMatrices(a0=a0, a1=a1, ab=ab, boundary=BoundaryBlocks(b0, tuple(rows)))


def phase_stationary_theta(params: QueueParameters, check=True):
    """Stationary vector of the phase generator ``A0 + A1 + Ab``.

    The chain on phases only ever visits 0 and b, so the closed form puts
    mass ``mu1/(mu1+mu2)`` on phase 0 and ``mu2/(mu1+mu2)`` on phase b.
    """
    mu1, mu2, b = params.mu1, params.mu2, params.b
    theta = np.zeros(b + 1)
    theta[0] += mu1 / (mu1 + mu2)
    theta[b] += mu2 / (mu1 + mu2)
    if check:
        a = build_block_matrices(params).phase_generator
        defect = float(np.max(np.abs(theta @ a)))
        if defect > 1e-12 * max(1.0, mu1 + mu2):
            raise ModelInconsistencyError(f"theta is not stationary for A (defect {defect:.3e})")
    return theta


@dataclass(frozen=True)
class StabilityReport:
    drift_up: float
    drift_down: float
    is_stable: bool
    utilization: float

    def to_dict(self):
        return {
            "drift_up": self.drift_up,
            "drift_down": self.drift_down,
            "is_stable": self.is_stable,
            "utilization": self.utilization,
        }


def _report(up, down):
    util = up / down
    if up == down or math.isclose(up, down, rel_tol=1e-15, abs_tol=0.0):
        return StabilityReport(up, down, False, 1.0)
    return StabilityReport(up, down, down > up, util)


def stability(params: QueueParameters) -> StabilityReport:
    """Mean-drift test: stable iff ``b*mu1*mu2/(mu1+mu2) > lam`` strictly."""
    down = params.b * params.mu1 * params.mu2 / (params.mu1 + params.mu2)
    return _report(params.lam, down)


def stability_from_blocks(matrices: BlockMatrices) -> StabilityReport:
    """Same drift comparison computed from the matrices alone.

    Upward drift is ``theta A0 e`` and downward drift ``b theta Ab e``, with
    ``theta`` the numerically solved stationary vector of ``A``.
    """
    theta = left_null_vector(matrices.phase_generator)
    e = np.ones(matrices.size)
    up = float(theta @ matrices.a0 @ e)
    down = float(matrices.block_size * (theta @ matrices.ab @ e))
    return _report(up, down)
