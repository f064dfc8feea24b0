"""Exception types raised across the package."""


class EnKBFError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(EnKBFError, ValueError):
    """An argument violates a documented precondition."""


class NotPSDError(InvalidArgumentError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class RankDeficiencyError(EnKBFError, ArithmeticError):
    """A covariance matrix that must be invertible is (numerically) singular."""


class DivergenceError(EnKBFError, ArithmeticError):
    """A trajectory produced non-finite values or blew up.

    ``step`` is the index of the step whose output failed the check.
    """

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NoConvergenceError(EnKBFError, ArithmeticError):
    """An iterative solver hit its iteration budget."""


class ConfigError(EnKBFError, ValueError):
    """A configuration file is malformed. ``key`` names the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class ExperimentError(EnKBFError, RuntimeError):
    """A batch experiment produced no usable cells."""
