"""Tests for structured error handling."""

import json

import pytest

from tbhorizon.errors import (
    EXIT_DATA,
    EXIT_USAGE,
    EXIT_VERIFICATION,
    EditRejectedError,
    ErrorContext,
    ErrorReport,
    ErrorType,
    FeedLoadError,
    HorizonRangeError,
    OracleLimitError,
    SchemaError,
    TransitError,
    UnknownStopError,
    VerificationError,
    _classify_exception,
    exit_code_for,
)


class TestErrorClassification:
    """Test exception classification into ErrorType."""

    @pytest.mark.parametrize(
        "exc, expected",
        [
            (HorizonRangeError("day 9"), ErrorType.RANGE),
            (OracleLimitError("too big"), ErrorType.RANGE),
            (UnknownStopError("Q"), ErrorType.LOOKUP),
            (FeedLoadError("missing stops.txt"), ErrorType.LOAD),
            (SchemaError("bad line"), ErrorType.SCHEMA),
            (EditRejectedError("no such day"), ErrorType.REJECTED_EDIT),
            (VerificationError("differs"), ErrorType.VERIFICATION),
            (FileNotFoundError("x"), ErrorType.LOAD),
            (KeyError("k"), ErrorType.LOOKUP),
            (ValueError("v"), ErrorType.RANGE),
            (RuntimeError("r"), ErrorType.UNKNOWN),
        ],
    )
    def test_classify(self, exc, expected):
        assert _classify_exception(exc) == expected

    def test_exit_codes(self):
        assert exit_code_for(HorizonRangeError("x")) == EXIT_USAGE
        assert exit_code_for(SchemaError("x")) == EXIT_DATA
        assert exit_code_for(VerificationError("x")) == EXIT_VERIFICATION
        assert exit_code_for(RuntimeError("x")) == EXIT_DATA

    def test_range_errors_are_value_errors(self):
        assert isinstance(HorizonRangeError("x"), ValueError)
        assert isinstance(UnknownStopError("x"), LookupError)


class TestErrorContext:
    def test_describe(self):
        ctx = ErrorContext(file="feed.jsonl", line=12, trip="t7", day=3)
        assert ctx.describe() == "feed.jsonl:12, trip t7, day 3"

    def test_describe_empty(self):
        assert ErrorContext().describe() == ""

    def test_message_includes_location(self):
        exc = SchemaError("bad day string", ErrorContext(file="edits.jsonl", line=4))
        assert exc.message == "bad day string"
        assert str(exc) == "bad day string (edits.jsonl:4)"
        assert isinstance(exc, TransitError)


class TestErrorReport:
    def test_from_transit_error(self):
        ctx = ErrorContext(record="trip", extra={"edit": 2})
        report = ErrorReport.from_exception(EditRejectedError("trip does not run on day 4", ctx))
        d = report.to_dict()
        assert d["error_type"] == "rejected_edit"
        assert d["exit_code"] == EXIT_DATA
        assert d["message"] == "trip does not run on day 4"
        assert d["exception_type"] == "EditRejectedError"
        assert d["context"]["record"] == "trip"
        assert d["context"]["edit"] == 2
        json.dumps(d)

    def test_from_plain_exception(self):
        report = ErrorReport.from_exception(KeyError("missing"))
        assert report.error_type == ErrorType.LOOKUP
        assert report.exit_code == EXIT_USAGE
        assert report.context == ErrorContext()
