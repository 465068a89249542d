"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so every error raised deliberately by the
package derives from one of three bases: usage problems (bad parameters),
ingestion problems (unreadable input) and numeric failures.
"""


class DonorSpinError(Exception):
    """Base class for all package errors."""


class UsageError(DonorSpinError, ValueError):
    """Invalid parameters supplied by the caller."""


class IngestionError(DonorSpinError):
    """Input data or configuration could not be parsed."""


class NumericError(DonorSpinError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class InvalidSpinError(UsageError):
    pass


class MatrixShapeError(UsageError):
    """Matrix is not square or not Hermitian within tolerance."""


class ConvergenceError(NumericError):
    pass


class TrackingError(NumericError):
    """Adiabatic state tracking became ambiguous; the grid needs refining."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class InvalidLineshapeError(UsageError):
    pass


class InsufficientDataError(UsageError):
    pass


class BackgroundFitError(UsageError):
    pass


class InvalidProfileError(UsageError):
    pass
