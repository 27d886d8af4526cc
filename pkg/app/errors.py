"""
Exception hierarchy.

Every error raised by the library carries the exit code the CLI should
return and a structured detail record, the same way the HTTP layer of a
web service pairs a status code with a detail message.
"""

from typing import Any, Optional

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


class ToolkitError(Exception):
    """Base class for all library errors."""

    exit_code = EXIT_ERROR

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def to_record(self) -> dict:
        """Structured error record written into the result document."""
        return {"type": type(self).__name__, "detail": self.detail, **self.context}


class ExpressionError(ToolkitError):
    """Polynomial expression could not be parsed or evaluated."""

    def __init__(self, detail: str, position: Optional[int] = None, **context: Any):
        super().__init__(detail, position=position, **context)
        self.position = position


class SchemaError(ToolkitError):
    """System-description document violates the file schema."""


class DimensionError(ToolkitError):
    """Matrix or vector dimensions are inconsistent."""


class FactorizationError(ToolkitError):
    """Gram matrix is not numerically positive semidefinite."""


class SolverError(ToolkitError):
    """SDP backend did not converge (distinct from proven infeasibility)."""


class InfeasibleError(ToolkitError):
    """The LMI conditions are infeasible: a valid negative answer."""

    exit_code = EXIT_VERDICT


class UnstableSystemError(ToolkitError):
    """System is not exponentially stable in the second moment."""

    exit_code = EXIT_VERDICT


class DivergenceError(ToolkitError):
    """Impulse-response energy series does not converge."""

    exit_code = EXIT_VERDICT


class NonFiniteStateError(ToolkitError):
    """A simulated state left the finite range."""


class OutputError(ToolkitError):
    """A result or trace file could not be written."""
