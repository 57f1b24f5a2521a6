"""Exception types shared across the package."""


class SonarBGError(Exception):
    """Base class for package errors."""


class ParameterError(SonarBGError, ValueError):
    """Invalid parameter value or configuration."""


class DimensionError(SonarBGError, ValueError):
    """Inconsistent array dimensions."""


class NumericalError(SonarBGError, ArithmeticError):
    """Factorization failure or non-finite result.

    ``ping_index`` is set when the failure happened inside a filter run.
    """

    def __init__(self, message, ping_index=None):
        super().__init__(message)
        self.ping_index = ping_index


class FitError(SonarBGError):
    """All optimizer restarts failed."""


class ConfigError(SonarBGError, ValueError):
    """Malformed or unknown configuration content."""
