"""Exception hierarchy.

Each family maps onto one CLI exit code: input problems exit 3, numerical
problems exit 4. Usage errors (exit 2) are raised by the CLI itself.
"""


class SlabSmoothError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(SlabSmoothError, ValueError):
    """Malformed or out-of-contract input data."""

    exit_code = 3

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        if row is not None or column is not None:
            where = []
            if row is not None:
                where.append(f"row {row}")
            if column is not None:
                where.append(f"column {column!r}")
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SizeError(InputError):
    """Too few observations for the requested fit."""


class RankError(InputError):
    """Too few distinct covariate values for the requested degree."""


class PreconditionError(SlabSmoothError, ValueError):
    """An argument violates a documented precondition (e.g. non-orthogonal basis)."""

    exit_code = 4


class NumericalError(SlabSmoothError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""

    exit_code = 4


class DegenerateFitError(NumericalError):
    """The full model fits exactly, so the variance estimate is zero."""


class PrecisionError(NumericalError):
    """A quadrature failed its refinement check."""


class LocalFitError(NumericalError):
    """Too many target points failed during a local curve fit."""

    def __init__(self, message, failures=()):
        self.failures = list(failures)
        super().__init__(message)
