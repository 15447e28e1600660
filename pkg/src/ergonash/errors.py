class ConfigurationError(ValueError):
    """Bad catalog tag, parameter or grid setting."""


class VelocityGridTooSmall(RuntimeError):
    """A minimizing/maximizing velocity sits on the edge of the velocity box."""


class SolverError(RuntimeError):
    """Numerical solver failed (iteration cap, infeasibility, singular system)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
