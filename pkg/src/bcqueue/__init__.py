"""Exact stationary measures of the two-stage batch-service blockchain queue.

Typical use::

    from bcqueue import QueueParameters, evaluate
    report = evaluate(QueueParameters(arrival_rate=0.3, build_rate=1.0,
                                      generate_rate=1.0, max_block_size=1))
    report.mean_confirmation_closed   # 4.25
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    BCQueueError,
    ConvergenceError,
    ModelInconsistencyError,
    ParameterError,
    UnstableModelError,
)
from .matgeom import MatGeomSolution, solve  # noqa: E402
from .measures import PerformanceReport, evaluate  # noqa: E402
from .model import QueueParameters, StabilityReport, build_block_matrices, stability  # noqa: E402
from .oracle import mg1_erlang_oracle, truncated_measures  # noqa: E402
from .sim import SimConfig, SimulationResult, simulate  # noqa: E402

__all__ = [
    "BCQueueError",
    "ConvergenceError",
    "ModelInconsistencyError",
    "ParameterError",
    "UnstableModelError",
    "MatGeomSolution",
    "solve",
    "PerformanceReport",
    "evaluate",
    "QueueParameters",
    "StabilityReport",
    "build_block_matrices",
    "stability",
    "mg1_erlang_oracle",
    "truncated_measures",
    "SimConfig",
    "SimulationResult",
    "simulate",
]
