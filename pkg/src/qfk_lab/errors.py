"""Exception types shared across the package."""


class ResourceError(RuntimeError):
    """Requested simulation exceeds the configured memory/qubit ceiling."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class FitError(ValueError):
    """Least-squares design is rank deficient for the requested model."""
