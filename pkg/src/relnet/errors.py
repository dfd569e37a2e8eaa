"""Exception types shared across the package."""


class RelnetError(Exception):
    """Base class for all package errors."""


class ConfigError(RelnetError, ValueError):
    """Invalid model, topology or experiment configuration."""


class NumericalError(RelnetError, ArithmeticError):
    """A quantity is undefined or a numerical procedure did not converge."""


class UnsupportedPatternError(RelnetError, ValueError):
    """Pattern outside the analytic scope; use the Monte Carlo estimator."""
