"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, solver or scan configuration."""


class DomainError(ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class ZeroModeError(ValueError):
    """A negative-order operator was applied to a field with nonzero mean."""


class StabilityError(RuntimeError):
    """The advective CFL bound is violated for the requested time step."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BlowUpError(RuntimeError):
    """NaN/Inf or a field exceeding the configured ceiling.

    ``series`` holds the diagnostics recorded before the halt, when available.
    """

    def __init__(self, message, t, series=None):
        super().__init__(message)
        self.t = t
        self.series = series


class OptimizationError(RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class MeanRemovedWarning(UserWarning):
    """Emitted when a nonzero mean is silently annihilated."""
