"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedRepresentationError(TypeError):
    """An operation was requested on a measure representation that cannot support it."""


class ExtrapolationError(ValueError):
    """A query point lies outside the domain of a grid density."""


class StabilityError(RuntimeError):
    """A time step exceeds the stability or positivity bound of the scheme."""


class DivergenceError(FloatingPointError):
    """A non-finite value appeared during time stepping."""


class ConvergenceError(RuntimeError):
    """An inner iteration hit its iteration limit."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvexityError(RuntimeError):
    """A Hessian that should be positive definite is not."""


class SingularFitError(RuntimeError):
    """A regression was posed on degenerate data."""


class InvalidSeriesError(ValueError):
    """A time series cannot be fitted (nonpositive values, too few points)."""


class ConfigError(ValueError):
    """A scenario configuration is malformed; the message names the offending key."""
