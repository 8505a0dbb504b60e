"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class SolverError(RuntimeError):
    """Raised when a numerical solver fails to converge; the message carries
    the diagnostic state (bracket endpoints, residuals) instead of returning
    a silently wrong answer."""
