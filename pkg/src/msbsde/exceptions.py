"""Exception types raised by the solver and its helpers."""


class InvalidArgumentError(ValueError):
    """An argument is outside the range an operation accepts."""


class ResourceLimitError(RuntimeError):
    """A requested discretization would exceed a configured size cap."""


class SingularSystemError(ArithmeticError):
    """A zero pivot was met while eliminating a linear system."""


class NumericalDomainError(ArithmeticError):
    """A driver or terminal function returned non-finite values."""


class InsufficientDataError(ValueError):
    """Too few usable samples to fit a convergence rate."""


class ConfigError(ValueError):
    """A run configuration is malformed."""
