"""Structured error types for feed loading, preprocessing, queries and updates.

Every failure the engine raises on purpose is a ``TransitError``; the CLI maps
its ``ErrorType`` to an exit code and serializes it with ``ErrorReport``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any


class ErrorType(str, Enum):
    """Classification of error types for exit codes and reporting."""

    # Caller mistakes: exit 1
    RANGE = "range"
    LOOKUP = "lookup"

    # Bad data: exit 2
    LOAD = "load"
    RECORD = "record"
    SCHEMA = "schema"
    INVARIANT = "invariant"
    REJECTED_EDIT = "rejected_edit"

    # Cross-check failures: exit 3
    VERIFICATION = "verification"

    UNKNOWN = "unknown"


EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFICATION = 3

_EXIT_CODES = {
    ErrorType.RANGE: EXIT_USAGE,
    ErrorType.LOOKUP: EXIT_USAGE,
    ErrorType.LOAD: EXIT_DATA,
    ErrorType.RECORD: EXIT_DATA,
    ErrorType.SCHEMA: EXIT_DATA,
    ErrorType.INVARIANT: EXIT_DATA,
    ErrorType.REJECTED_EDIT: EXIT_DATA,
    ErrorType.VERIFICATION: EXIT_VERIFICATION,
    ErrorType.UNKNOWN: EXIT_DATA,
}


@dataclass
class ErrorContext:
    """Where a failure happened."""

    file: str = ""
    line: int = 0  # 1-based; 0 when not tied to a line
    record: str = ""
    trip: str = ""
    day: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def describe(self) -> str:
        parts = []
        if self.file:
            parts.append(f"{self.file}:{self.line}" if self.line else self.file)
        if self.record:
            parts.append(f"record {self.record}")
        if self.trip:
            parts.append(f"trip {self.trip}")
        if self.day is not None:
            parts.append(f"day {self.day}")
        return ", ".join(parts)


class TransitError(Exception):
    """Base class for every deliberate engine failure."""

    error_type = ErrorType.UNKNOWN

    def __init__(self, message: str, context: ErrorContext | None = None):
        self.context = context or ErrorContext()
        where = self.context.describe()
        super().__init__(f"{message} ({where})" if where else message)
        self.message = message


class HorizonRangeError(TransitError, ValueError):
    """A day, window, time or packed field lies outside its allowed range."""

    error_type = ErrorType.RANGE


class UnknownStopError(TransitError, LookupError):
    error_type = ErrorType.LOOKUP


class UnknownTripError(TransitError, LookupError):
    error_type = ErrorType.LOOKUP


class FeedLoadError(TransitError):
    """A required feed file is missing or unreadable."""

    error_type = ErrorType.LOAD


class FeedRecordError(TransitError):
    """A feed record references something that does not exist."""

    error_type = ErrorType.RECORD


class SchemaError(TransitError):
    error_type = ErrorType.SCHEMA


class InvariantError(TransitError):
    """A timetable or transfer invariant does not hold."""

    error_type = ErrorType.INVARIANT


class EditRejectedError(TransitError):
    error_type = ErrorType.REJECTED_EDIT


class VerificationError(TransitError):
    """Incremental state differs from a fresh rebuild, or engines disagree."""

    error_type = ErrorType.VERIFICATION


class OracleLimitError(HorizonRangeError):
    """The reference search refuses instances above its event limit."""


@dataclass
class ErrorReport:
    """JSON-serializable record of a failure, printed by the CLI under --json."""

    error_type: ErrorType
    message: str
    exit_code: int
    context: ErrorContext = field(default_factory=ErrorContext)
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    exception_type: str = ""

    @classmethod
    def from_exception(cls, exc: BaseException) -> ErrorReport:
        error_type = _classify_exception(exc)
        return cls(
            error_type=error_type,
            message=getattr(exc, "message", None) or str(exc),
            exit_code=_EXIT_CODES[error_type],
            context=getattr(exc, "context", None) or ErrorContext(),
            exception_type=type(exc).__name__,
        )

    def to_dict(self) -> dict[str, Any]:
        """Serialize for JSON output and logging."""
        return {
            "error_type": self.error_type.value,
            "message": self.message,
            "exit_code": self.exit_code,
            "timestamp": self.timestamp.isoformat(),
            "exception_type": self.exception_type,
            "context": {
                "file": self.context.file,
                "line": self.context.line,
                "record": self.context.record,
                "trip": self.context.trip,
                "day": self.context.day,
                **self.context.extra,
            },
        }


def _classify_exception(exc: BaseException) -> ErrorType:
    """Classify an exception into an ErrorType."""
    if isinstance(exc, TransitError):
        return exc.error_type
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return ErrorType.LOAD
    if isinstance(exc, LookupError):
        return ErrorType.LOOKUP
    if isinstance(exc, ValueError):
        return ErrorType.RANGE
    return ErrorType.UNKNOWN


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code (1 usage, 2 data, 3 verification)."""
    return _EXIT_CODES[_classify_exception(exc)]
