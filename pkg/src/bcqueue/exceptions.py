"""Exception hierarchy shared by the solver, the oracles and the CLI."""


class BCQueueError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(BCQueueError, ValueError):
    """Queue parameters are out of their admissible range."""


class DimensionError(BCQueueError, ValueError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        shown = " and ".join(f"{s[0]}x{s[1]}" if len(s) == 2 else str(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class SingularMatrixError(BCQueueError, ArithmeticError):
    def __init__(self, pivot_index, pivot_value):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is singular to working precision (pivot {pivot_index} = {pivot_value:.3e})"
        )


class RankError(BCQueueError, ArithmeticError):
    """The null space is not one-dimensional."""


class NonMarkovError(BCQueueError, ArithmeticError):
    """A computed probability vector has materially negative entries."""


class ConvergenceError(BCQueueError, RuntimeError):
    """An iterative method did not reach its tolerance.

    ``last`` holds the final iterate and ``residual`` the last convergence
    measure, so callers can inspect how far off the run ended.
    """

    def __init__(self, message, last=None, residual=None, iterations=None):
        self.last = last
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class UnstableModelError(BCQueueError):
    """The queue is not positive recurrent, so stationary measures do not exist."""

    def __init__(self, message, stability=None):
        self.stability = stability
        super().__init__(message)


class ModelInconsistencyError(BCQueueError):
    """Matrices violate a structural identity they must satisfy (e.g. zero row sums)."""


class OracleSizeError(BCQueueError, ValueError):
    """A truncated oracle was requested beyond the dense-solve size limit."""


class TruncationError(BCQueueError):
    """Probability mass near the truncation cap is too large; increase the level cap."""

    def __init__(self, message, tail_mass=None):
        self.tail_mass = tail_mass
        super().__init__(message)
