"""Discrete-event simulation of the two-stage batch-service queue.

Randomness comes from numpy's PCG64 bit generator, seeded through
``SeedSequence`` so independent replications can be spawned from a single
seed. Exponential holding times use inverse transform ``-log(1 - U)``.

At most one service stage is active at a time: generation runs while the
block is empty and the queue is not, building runs while the block is
nonempty. Arrivals always join the queue (FCFS), never an open block.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .exceptions import ParameterError
from .model import QueueParameters, stability

__all__ = ["SimConfig", "Estimate", "SimulationResult", "simulate", "spawn_seeds"]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    params: QueueParameters
    seed: int = 0
    horizon_events: int = 1_120_000
    warmup_events: int | None = None
    batch_count: int = 32

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if self.warmup_events is None:
            object.__setattr__(self, "warmup_events", self.horizon_events // 10)
        if self.batch_count < 10:
            raise ParameterError("batch_count must be >= 10")
        if not 0 <= self.warmup_events < self.horizon_events:
            raise ParameterError("need 0 <= warmup_events < horizon_events")
        if (self.horizon_events - self.warmup_events) < self.batch_count:
            raise ParameterError("fewer post-warmup confirmations than batches")

    @property
    def batch_size(self):
        return (self.horizon_events - self.warmup_events) // self.batch_count


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float

    def covers(self, target, widths=3.0):
        return abs(self.value - target) <= widths * self.half_width


@dataclass(frozen=True)
class SimulationResult:
    est_queue: Estimate
    est_block: Estimate
    est_confirmation: Estimate
    confirmed_count: int
    seed_used: int
    arrivals: int
    confirmed_total: int
    queue_at_end: int
    block_at_end: int
    sim_time: float
    unstable: bool
    degenerate: bool

    def to_dict(self):
        return asdict(self)


def spawn_seeds(seed, count):
    """Independent 64-bit seeds for ``count`` replications derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


class _Stream:
    """Chunked draws so the event loop indexes Python lists, not the generator."""

    def __init__(self, seed):
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self._fill()

    def _fill(self):
        u = self._rng.random((2, _CHUNK))
        self._exp = (-np.log1p(-u[0])).tolist()
        self._pick = u[1].tolist()
        self._pos = 0

    def draw(self):
        if self._pos == _CHUNK:
            self._fill()
        k = self._pos
        self._pos = k + 1
        return self._exp[k], self._pick[k]


def _batch_estimate(samples, point=None):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = float(samples.mean()) if point is None else float(point)
    sd = float(samples.std(ddof=1))
    half = float(stats.t.ppf(0.975, n - 1) * sd / math.sqrt(n))
    return Estimate(mean, half)


def simulate(config: SimConfig) -> SimulationResult:
    """Run one replication and return batch-means estimates of ``E[J]``, ``E[I]``, ``E[T]``.

    The first ``warmup_events`` confirmations are discarded; the rest are cut
    into ``batch_count`` equal batches (remainder dropped). Queue and block
    contents are time-averaged over the same windows the batches span.
    """
    p = config.params
    unstable = not stability(p).is_stable
    if unstable:
        warnings.warn("simulating an unstable parameter set; estimates are meaningless",
                      RuntimeWarning, stacklevel=2)
    lam, mu1, mu2, b = p.lam, p.mu1, p.mu2, p.b
    warmup = config.warmup_events
    size = config.batch_size
    stop = warmup + size * config.batch_count

    stream = _Stream(config.seed)
    draw = stream.draw
    queue = deque()
    block = []
    t = 0.0
    arrivals = 0
    confirmed = 0
    measuring = warmup == 0
    area_j = area_i = 0.0
    batch_start = 0.0
    soj_sum = 0.0
    in_batch = 0
    batch_t, batch_j, batch_i = [], [], []
    total_j = total_i = 0.0
    window_start = 0.0

    while confirmed < stop:
        nq = len(queue)
        nb = len(block)
        if nb:
            rate = lam + mu1
        elif nq:
            rate = lam + mu2
        else:
            rate = lam
        e, u = draw()
        dt = e / rate
        if measuring:
            area_j += nq * dt
            area_i += nb * dt
        t += dt
        if u * rate < lam:
            queue.append(t)
            arrivals += 1
        elif nb:
            for a in block:
                confirmed += 1
                if confirmed <= warmup:
                    if confirmed == warmup:
                        measuring = True
                        batch_start = window_start = t
                    continue
                if confirmed > stop:
                    continue
                soj_sum += t - a
                in_batch += 1
                if in_batch == size:
                    span = t - batch_start
                    batch_t.append(soj_sum / size)
                    batch_j.append(area_j / span if span > 0 else float("nan"))
                    batch_i.append(area_i / span if span > 0 else float("nan"))
                    total_j += area_j
                    total_i += area_i
                    area_j = area_i = soj_sum = 0.0
                    in_batch = 0
                    batch_start = t
            block = []
        else:
            take = nq if nq < b else b
            block = [queue.popleft() for _ in range(take)]

    span = t - window_start
    degenerate = not all(math.isfinite(x) for x in batch_j + batch_i)
    est_t = _batch_estimate(batch_t)
    est_j = _batch_estimate(batch_j, total_j / span)
    est_i = _batch_estimate(batch_i, total_i / span)
    if min(est_t.half_width, est_j.half_width, est_i.half_width) == 0.0:
        degenerate = True
    return SimulationResult(
        est_queue=est_j,
        est_block=est_i,
        est_confirmation=est_t,
        confirmed_count=size * config.batch_count,
        seed_used=config.seed,
        arrivals=arrivals,
        confirmed_total=confirmed,
        queue_at_end=len(queue),
        block_at_end=len(block),
        sim_time=t,
        unstable=unstable,
        degenerate=degenerate,
    )
