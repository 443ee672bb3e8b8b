"""
Error Hierarchy

Every failure the library raises derives from KnmfError and carries the
process exit code the CLI reports for it:
0 success, 2 usage/input, 3 numeric failure, 4 I/O.
"""

from typing import Optional


class KnmfError(Exception):
    """Base class for all knmf errors."""

    exit_code: int = 1

    def __init__(self, message: str, **context: object):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        """Convert to a loggable dictionary."""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            **{k: v for k, v in self.context.items() if not isinstance(v, list)},
        }


class InputError(KnmfError, ValueError):
    """Dimension mismatch, bad index or invalid parameter value."""

    exit_code = 2


class UnsupportedConfigurationError(KnmfError):
    """A combination of options the algorithms do not define."""

    exit_code = 2


class NumericError(KnmfError, ArithmeticError):
    """A function evaluation produced a non-finite value."""

    exit_code = 3


class SolverError(KnmfError):
    """An update rule precondition was violated during a sweep."""

    exit_code = 3


class DivergedRunError(SolverError):
    """The cost became non-finite; carries the trace recorded so far."""

    def __init__(self, message: str, cost_trace: list[float], iteration: int):
        super().__init__(message, iteration=iteration, cost_trace=cost_trace)
        self.cost_trace = cost_trace
        self.iteration = iteration


class CubeFormatError(KnmfError):
    """A cube or factor file is malformed."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        row: Optional[int] = None,
        column: Optional[int] = None,
    ):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        elif row is not None:
            message = f"{message} (row {row}, column {column})"
        super().__init__(message, offset=offset, row=row, column=column)
        self.offset = offset
        self.row = row
        self.column = column
