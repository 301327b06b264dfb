"""Exception types shared across the package."""


class LabelShiftError(Exception):
    """Base class for all package errors."""


class DataValidationError(LabelShiftError):
    """Raised when an input dataset or file violates the expected schema."""


class ConfigError(LabelShiftError):
    """Raised when a configuration file or dictionary is invalid."""


class SupportError(LabelShiftError):
    """Raised when a query falls outside the effective support of the data.

    Typical cause: every kernel weight underflows to zero at the query, so a
    local average would be 0/0.
    """


class SingularSystemError(LabelShiftError):
    """Raised when a linear system is numerically singular."""


class ConvergenceError(LabelShiftError):
    """Raised when an iterative solver fails to converge.

    Carries the last iterate and residual norm for post-mortem inspection.
    """

    def __init__(self, message, last_iterate=None, residual_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
