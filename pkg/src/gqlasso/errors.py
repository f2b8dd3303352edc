"""Exception hierarchy.

Every error raised on purpose by this package derives from ``GQLassoError``;
the command line maps the three families onto exit codes 1 (usage),
2 (data) and 3 (numerical).
"""


class GQLassoError(Exception):
    """Base class for package errors."""


class UsageError(GQLassoError, ValueError):
    """Bad arguments: wrong shapes, out-of-range indices, invalid settings."""


class DomainError(UsageError):
    """Non-finite input handed to a loss kernel."""


class DataError(GQLassoError, ValueError):
    """Input data that cannot be used as given."""


class ConstantColumnError(DataError):
    """A non-intercept predictor has zero variance."""

    def __init__(self, column, context=""):
        self.column = column
        msg = f"predictor column {column!r} is constant"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class InsufficientHistoryError(DataError):
    """Too few observations before the first forecast stamp."""


class NumericalError(GQLassoError, ArithmeticError):
    """Base class for numerical failures."""


class SolverDivergenceError(NumericalError):
    """The objective became non-finite during a solve."""

    def __init__(self, msg, lambda_index=None, stamp=None):
        self.lambda_index = lambda_index
        self.stamp = stamp
        super().__init__(msg)
