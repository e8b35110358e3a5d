"""Exception and warning types shared across the package."""


class RhoodError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RhoodError, ValueError):
    """An argument violates a documented precondition."""


class DuplicateKeyError(RhoodError):
    """Attempt to insert a key that is already live in the table."""


class TableFullError(RhoodError):
    """Attempt to insert into a table whose live cells equal its capacity."""


class EmptyTableError(RhoodError):
    """Operation requires at least one live key."""


class UnsupportedOperationError(RhoodError):
    """Operation not available in the table's current mode."""


class ConvergenceError(RhoodError):
    """An iterative solver failed to converge within its iteration cap."""


class TailTruncationWarning(UserWarning):
    """Tail mass reached the truncation depth; results may be clipped."""
