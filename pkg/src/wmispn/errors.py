"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, everything else
derived from WmispnError -> 2.
"""


class WmispnError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(WmispnError):
    """Bad flags, malformed query text, or an otherwise invalid request."""


class DataError(WmispnError):
    """Problems with input data files: ragged rows, empty files, bad schema."""


class ModelError(WmispnError):
    """Problems with model files: unsupported version, truncation, mismatch."""


class QuerySyntaxError(UsageError):
    """Query string failed to parse; carries the offending position."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UndefinedConditionalError(WmispnError):
    """Conditional probability requested against zero-probability evidence."""
