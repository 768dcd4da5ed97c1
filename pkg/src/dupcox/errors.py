"""Exception hierarchy shared across the package.

``DataError`` subclasses signal problems with the input cohort, ``ConfigError``
signals a bad run configuration, and ``EstimationError`` subclasses signal
numerical problems during fitting or testing.
"""


class DupcoxError(Exception):
    """Base class for all package errors."""


class ConfigError(DupcoxError):
    """Invalid run configuration (bad keys, bad values, impossible spec)."""


class DataError(DupcoxError):
    """Base class for problems with the input data."""


class SchemaError(DataError):
    """A declared column is missing or the schema itself is malformed."""


class ParseError(DataError):
    """A cell could not be parsed; carries the offending row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(DataError):
    """A loaded row violates a structural invariant (e.g. entry >= exit)."""


class EstimationError(DupcoxError):
    """Base class for numerical failures during estimation or testing."""


class SingularMatrixError(EstimationError):
    """A matrix that must be inverted is singular; carries the condition number."""

    def __init__(self, message: str, condition_number: float | None = None):
        super().__init__(message)
        self.condition_number = condition_number


class AliasedCoefficientError(EstimationError):
    """A coefficient required by a test was dropped for collinearity."""
