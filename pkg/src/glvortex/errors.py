"""Exception types shared across the solver modules."""


class SizingError(ValueError):
    """Grid or resolution parameters outside the supported range."""


class LengthMismatchError(ValueError):
    """Sample array length does not match the grid."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DivergentEnergyError(ValueError):
    """Requested integral diverges for the given data (e.g. f(0) != 0 at N=2)."""


class BoundaryConditionError(ValueError):
    """Profile or test function violates required boundary data."""


class ConvergenceError(RuntimeError):
    """Iterative solve did not reach its tolerance.

    Carries the iteration count and the final residual when available.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BracketError(RuntimeError):
    """Sign conditions for a root bracket failed; endpoint values attached."""

    def __init__(self, message, lo_value=None, hi_value=None):
        super().__init__(message)
        self.lo_value = lo_value
        self.hi_value = hi_value


class NoThresholdError(ValueError):
    """The eigenvalue never changes sign, so no threshold exists (N >= 7)."""
