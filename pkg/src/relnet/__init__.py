"""Reliability, temporal correlations and key rates of multiplexed quantum networks."""

from .errors import ConfigError, NumericalError, RelnetError, UnsupportedPatternError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "NumericalError",
    "RelnetError",
    "UnsupportedPatternError",
    "__version__",
]
