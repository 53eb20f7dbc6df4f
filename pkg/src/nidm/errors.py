"""Exception hierarchy shared across the toolkit.

Every domain failure derives from NidmError so callers (CLI, API) can map
"domain error" vs "programming error" to exit codes and HTTP statuses in one
place. Parsers attach a SourceSpan where one exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SourceSpan:
    """1-based position of a token in an input text."""

    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class NidmError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "Error"

    def payload(self) -> dict:
        """Machine-readable form used by the API error body."""
        return {"code": self.code, "message": str(self), "detail": None}


class ParseError(NidmError):
    """Malformed input text. Carries a span (line/column) when known."""

    code = "ParseError"

    def __init__(
        self,
        message: str,
        span: Optional[SourceSpan] = None,
        expected: Optional[str] = None,
        found: Optional[str] = None,
        path: Optional[str] = None,
    ):
        self.span = span
        self.expected = expected
        self.found = found
        self.path = path
        where = ""
        if span is not None:
            where = f" at {span}"
        elif path:
            where = f" at {path}"
        detail = ""
        if expected is not None:
            detail = f" (expected {expected}, found {found!r})"
        super().__init__(f"{message}{where}{detail}")

    def payload(self) -> dict:
        detail = {
            "line": self.span.line if self.span else None,
            "column": self.span.column if self.span else None,
            "expected": self.expected,
            "found": self.found,
            "path": self.path,
        }
        return {"code": self.code, "message": str(self), "detail": detail}


class UndeclaredPrefixError(ParseError):
    """A qualified name used a prefix with no namespace declaration."""

    code = "UndeclaredPrefix"

    def __init__(self, prefix: str, span: Optional[SourceSpan] = None):
        self.prefix = prefix
        super().__init__(f"undeclared namespace prefix {prefix!r}", span=span)


class DuplicateIdError(NidmError):
    """Two entity/activity/agent records share one local identifier."""

    code = "DuplicateId"

    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate record id {record_id!r}")


class UnknownIdError(NidmError):
    code = "UnknownId"

    def __init__(self, record_id: str, message: Optional[str] = None):
        self.record_id = record_id
        super().__init__(message or f"unknown record id {record_id!r}")


class InvalidDocumentError(NidmError):
    """Operation preconditions require a document that validates clean."""

    code = "InvalidDocument"

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)

    def payload(self) -> dict:
        detail = None
        if self.report is not None:
            detail = [
                {"recordIndex": v.record_index, "code": v.code, "message": v.message}
                for v in self.report.violations
            ]
        return {"code": self.code, "message": str(self), "detail": detail}


class NotACollectionError(NidmError):
    code = "NotACollection"

    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"entity {record_id!r} is not a prov:Collection")


class BadQueryError(NidmError):
    code = "BadQuery"


class CycleDetectedError(NidmError):
    code = "CycleDetected"


class UnknownCanonicalError(NidmError):
    code = "UnknownCanonical"

    def __init__(self, term: str):
        self.term = term
        super().__init__(f"mapping target {term} has no term definition")


class RuleError(NidmError):
    code = "RuleError"

    def __init__(self, message: str, rule_index: Optional[int] = None):
        self.rule_index = rule_index
        if rule_index is not None:
            message = f"rule #{rule_index}: {message}"
        super().__init__(message)


class UnbalancedStepError(NidmError):
    code = "UnbalancedStep"


class BindError(NidmError):
    code = "BindError"


class LoadError(NidmError):
    code = "LoadError"

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class NoEndpointsError(NidmError):
    code = "NoEndpoints"
