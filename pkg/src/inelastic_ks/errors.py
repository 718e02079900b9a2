"""Exception types shared across the package."""


class KSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KSError, ValueError):
    """Invalid model parameters or scenario configuration."""


class DomainError(KSError, ValueError):
    """Argument outside the range of an invertible map.

    ``max_value`` carries the largest value the map can represent on the
    truncated domain, when known.
    """

    def __init__(self, message, max_value=None):
        super().__init__(message)
        self.max_value = max_value


class NumericalError(KSError, RuntimeError):
    """A quadrature or root finder failed to converge."""


class ThresholdError(KSError):
    """Initial datum exceeds the small-data threshold."""

    def __init__(self, message, norm, admissible):
        super().__init__(message)
        self.norm = norm
        self.admissible = admissible


class ConvergenceError(KSError, RuntimeError):
    """The monotone iteration did not reach its tolerance."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConsistencyError(KSError, AssertionError):
    """An ordering or identity that must hold by construction was violated."""
