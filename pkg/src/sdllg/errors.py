"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or parameter combination."""


class MeshError(ValueError):
    """Rejected mesh input or degenerate element geometry."""


class ConstraintError(RuntimeError):
    """A nodewise constraint (unit modulus, tangency) was violated."""


class DomainError(ValueError):
    """A quantity was requested outside its valid domain."""


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
