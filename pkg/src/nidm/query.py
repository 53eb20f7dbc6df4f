"""Declarative queries over provenance documents.

A query selects one record category and conjoins three filter classes:
type filters (matched against harmonized prov:type terms after mapping
resolution), attribute filters (=, !=, <, <=, >, >=, contains), and path
constraints (a chain of relation steps that must reach a record matching a
nested type/attribute filter). Disjunction is expressed by running several
queries.

Text form (grammar in docs/query-grammar.md)::

    select entity where type=neurolex:T1 and attr[prov:value]>6000
        and path(wasGeneratedBy.backward -> activity[type=fs:FreeSurfer])

Step directions are named per relation kind: ``forward`` follows the
subject-to-object arrow for every kind except wasGeneratedBy, whose names
flip so that ``wasGeneratedBy.backward`` walks from an entity back to its
generating activity (and ``.forward`` from an activity to its outputs).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Optional

from .errors import BadQueryError, ParseError, SourceSpan
from .model import (
    AttributeValue,
    QualifiedName,
    RELATION_KINDS,
    is_qualified_name,
    is_uri,
)

CATEGORIES = ("entity", "activity", "agent")
ORDERING_OPS = ("<", "<=", ">", ">=")
OPS = ("=", "!=", "<", "<=", ">", ">=", "contains")
DIRECTIONS = ("forward", "backward")

MAX_PATH_LENGTH = 8


@dataclass(frozen=True)
class AttrFilter:
    key: QualifiedName
    op: str
    value: AttributeValue

    def __post_init__(self) -> None:
        if self.op not in OPS:
            raise BadQueryError(f"unknown comparator {self.op!r}")
        if self.op in ORDERING_OPS and self.value.kind != "number":
            raise BadQueryError(
                f"ordering comparator {self.op!r} requires a Number, "
                f"got {self.value.kind}"
            )
        if self.op == "contains" and self.value.kind != "text":
            raise BadQueryError("contains requires a quoted text value")


@dataclass(frozen=True)
class PathStep:
    kind: str
    direction: str

    def __post_init__(self) -> None:
        if self.kind not in RELATION_KINDS:
            raise BadQueryError(f"unknown relation kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise BadQueryError(f"unknown direction {self.direction!r}")

    def subject_to_object(self) -> bool:
        """Whether this step walks relations subject -> object."""
        forward = self.direction == "forward"
        if self.kind == "wasGeneratedBy":
            return not forward
        return forward


@dataclass(frozen=True)
class PathConstraint:
    steps: tuple
    target_category: Optional[str] = None
    type_filters: tuple = ()
    attr_filters: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "type_filters", tuple(self.type_filters))
        object.__setattr__(self, "attr_filters", tuple(self.attr_filters))
        if not 1 <= len(self.steps) <= MAX_PATH_LENGTH:
            raise BadQueryError(
                f"path chains must have 1..{MAX_PATH_LENGTH} steps, "
                f"got {len(self.steps)}"
            )
        if self.target_category is not None and \
                self.target_category not in CATEGORIES:
            raise BadQueryError(
                f"unknown path target category {self.target_category!r}"
            )


@dataclass(frozen=True)
class Query:
    category: str
    type_filters: tuple = ()
    attr_filters: tuple = ()
    path_constraints: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "type_filters", tuple(self.type_filters))
        object.__setattr__(self, "attr_filters", tuple(self.attr_filters))
        object.__setattr__(self, "path_constraints", tuple(self.path_constraints))
        if self.category not in CATEGORIES:
            raise BadQueryError(f"unknown select category {self.category!r}")


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def values_equal(a: AttributeValue, b: AttributeValue) -> bool:
    """Equality with the number/text coercion: a Number compares equal to
    text in its canonical decimal form."""
    if a.kind == b.kind:
        return a.value == b.value
    pair = {a.kind, b.kind}
    if pair == {"number", "text"}:
        num, other = (a, b) if a.kind == "number" else (b, a)
        text = other.value
        try:
            return Decimal(text) == num.value
        except ArithmeticError:
            return False
    return False


def compare_values(attr: AttributeValue, op: str, wanted: AttributeValue) -> bool:
    if op == "=":
        return values_equal(attr, wanted)
    if op == "!=":
        return not values_equal(attr, wanted)
    if op == "contains":
        return wanted.value in attr.canonical_text()
    if attr.kind != "number":
        return False
    a, b = attr.value, wanted.value
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def attr_filter_holds(record, flt: AttrFilter) -> bool:
    """= / < / <= / > / >= / contains hold when some attribute with the key
    satisfies the comparator; != holds when the key is present and no value
    equals the operand."""
    values = record.attr_values(flt.key)
    if not values:
        return False
    if flt.op == "!=":
        return all(not values_equal(v, flt.value) for v in values)
    return any(compare_values(v, flt.op, flt.value) for v in values)


def type_filter_holds(
    record, wanted: QualifiedName, resolver: Callable[[QualifiedName], QualifiedName]
) -> bool:
    """A type filter matches when any (prov:type, term) attribute resolves
    to the same canonical term as the filter."""
    target = resolver(wanted)
    for term in record.type_terms():
        if term == wanted or resolver(term) == target:
            return True
    return False


def record_filters_hold(record, type_filters, attr_filters, resolver) -> bool:
    return all(type_filter_holds(record, t, resolver) for t in type_filters) and all(
        attr_filter_holds(record, f) for f in attr_filters
    )


# ---------------------------------------------------------------------------
# Text grammar
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<squote>'[^']*')
  | (?P<arrow>->)
  | (?P<op><=|>=|!=|<|>|=)
  | (?P<punct>[\[\](),.])
  | (?P<number>[+-]?(?:\d+(?:\.\d+)?|\.\d+))
  | (?P<name>[A-Za-z_][A-Za-z0-9_\-]*(?::[A-Za-z0-9_][A-Za-z0-9_.\-]*)?)
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(
                "unexpected character in query",
                span=SourceSpan(1, pos + 1),
                found=text[pos],
            )
        kind = match.lastgroup
        value = match.group()
        if kind != "ws":
            tokens.append((kind, value, SourceSpan(1, pos + 1, len(value))))
        pos = match.end()
    tokens.append(("eof", "", SourceSpan(1, pos + 1)))
    return tokens


class _QueryParser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.current
        if token[0] != "eof":
            self.index += 1
        return token

    def expect(self, kind: str, value: Optional[str] = None, what: str = ""):
        token = self.current
        if token[0] != kind or (value is not None and token[1] != value):
            raise ParseError(
                "malformed query",
                span=token[2],
                expected=what or (value or kind),
                found=token[1] or "end of query",
            )
        return self.advance()

    def keyword(self, word: str) -> None:
        self.expect("name", word, what=f"'{word}'")

    def at_keyword(self, word: str) -> bool:
        token = self.current
        return token[0] == "name" and token[1] == word

    def parse(self) -> Query:
        self.keyword("select")
        category = self._category()
        type_filters: list = []
        attr_filters: list = []
        paths: list = []
        if self.at_keyword("where"):
            self.advance()
            while True:
                self._term(type_filters, attr_filters, paths)
                if self.at_keyword("and"):
                    self.advance()
                    continue
                break
        self.expect("eof", what="end of query")
        return Query(category, tuple(type_filters), tuple(attr_filters), tuple(paths))

    def _category(self) -> str:
        token = self.expect("name", what="entity, activity, or agent")
        if token[1] not in CATEGORIES:
            raise ParseError(
                "unknown category",
                span=token[2],
                expected="entity, activity, or agent",
                found=token[1],
            )
        return token[1]

    def _term(self, type_filters, attr_filters, paths) -> None:
        if self.at_keyword("type"):
            self.advance()
            self.expect("op", "=", what="'='")
            type_filters.append(self._qname())
        elif self.at_keyword("attr"):
            attr_filters.append(self._attr_filter())
        elif self.at_keyword("path"):
            paths.append(self._path())
        else:
            token = self.current
            raise ParseError(
                "malformed query term",
                span=token[2],
                expected="type=, attr[...], or path(...)",
                found=token[1] or "end of query",
            )

    def _qname(self) -> QualifiedName:
        token = self.expect("name", what="prefix:local")
        if not is_qualified_name(token[1]):
            raise ParseError(
                "qualified name expected",
                span=token[2],
                expected="prefix:local",
                found=token[1],
            )
        return QualifiedName.parse(token[1])

    def _attr_filter(self) -> AttrFilter:
        self.keyword("attr")
        self.expect("punct", "[", what="'['")
        key = self._qname()
        self.expect("punct", "]", what="']'")
        token = self.current
        if token[0] == "op":
            op = self.advance()[1]
        elif self.at_keyword("contains"):
            self.advance()
            op = "contains"
        else:
            raise ParseError(
                "comparator expected",
                span=token[2],
                expected="=, !=, <, <=, >, >=, or contains",
                found=token[1] or "end of query",
            )
        value = self._value()
        try:
            return AttrFilter(key, op, value)
        except BadQueryError as exc:
            raise ParseError(str(exc), span=token[2]) from None

    def _value(self) -> AttributeValue:
        kind, text, span = self.current
        if kind == "number":
            self.advance()
            return AttributeValue.number(Decimal(text))
        if kind == "string":
            self.advance()
            body = text[1:-1]
            out = []
            i = 0
            while i < len(body):
                ch = body[i]
                if ch == "\\" and i + 1 < len(body) and body[i + 1] in _ESCAPES:
                    out.append(_ESCAPES[body[i + 1]])
                    i += 2
                else:
                    out.append(ch)
                    i += 1
            literal = "".join(out)
            # same literal rule as the notation: quoted absolute URIs are
            # Uri values, anything else quoted is Text
            if is_uri(literal):
                return AttributeValue.uri(literal)
            return AttributeValue.text(literal)
        if kind == "squote":
            self.advance()
            body = text[1:-1]
            if is_qualified_name(body):
                return AttributeValue.term(QualifiedName.parse(body))
            raise ParseError(
                "single quotes hold qualified names",
                span=span,
                expected="'prefix:local'",
                found=text,
            )
        if kind == "name" and is_qualified_name(text):
            # bare qualified names are Term values, quoting optional
            self.advance()
            return AttributeValue.term(QualifiedName.parse(text))
        raise ParseError(
            "malformed comparison value",
            span=span,
            expected="number, \"text\", or 'prefix:local'",
            found=text or "end of query",
        )

    def _path(self) -> PathConstraint:
        self.keyword("path")
        self.expect("punct", "(", what="'('")
        steps: list = []
        while True:
            kind_token = self.expect("name", what="relation kind")
            if kind_token[1] not in RELATION_KINDS:
                raise ParseError(
                    "unknown relation kind",
                    span=kind_token[2],
                    expected="|".join(RELATION_KINDS),
                    found=kind_token[1],
                )
            self.expect("punct", ".", what="'.'")
            dir_token = self.expect("name", what="forward or backward")
            if dir_token[1] not in DIRECTIONS:
                raise ParseError(
                    "unknown step direction",
                    span=dir_token[2],
                    expected="forward or backward",
                    found=dir_token[1],
                )
            steps.append(PathStep(kind_token[1], dir_token[1]))
            if self.current[:2] == ("punct", ","):
                self.advance()
                continue
            break
        self.expect("arrow", what="'->'")
        category = self._category()
        type_filters: list = []
        attr_filters: list = []
        if self.current[:2] == ("punct", "["):
            self.advance()
            if self.current[:2] != ("punct", "]"):
                while True:
                    if self.at_keyword("type"):
                        self.advance()
                        self.expect("op", "=", what="'='")
                        type_filters.append(self._qname())
                    elif self.at_keyword("attr"):
                        attr_filters.append(self._attr_filter())
                    else:
                        token = self.current
                        raise ParseError(
                            "malformed path target filter",
                            span=token[2],
                            expected="type= or attr[...]",
                            found=token[1] or "end of query",
                        )
                    if self.current[:2] == ("punct", ","):
                        self.advance()
                        continue
                    break
            self.expect("punct", "]", what="']'")
        self.expect("punct", ")", what="')'")
        try:
            return PathConstraint(
                tuple(steps), category, tuple(type_filters), tuple(attr_filters)
            )
        except BadQueryError as exc:
            raise ParseError(str(exc)) from None


def parse_query(text: str) -> Query:
    """Parse the query text form; ParseError spans index into the string."""
    return _QueryParser(text).parse()


# ---------------------------------------------------------------------------
# Text serialization (used by the mediator to forward queries)
# ---------------------------------------------------------------------------


def _value_to_text(value: AttributeValue) -> str:
    if value.kind == "number":
        return value.canonical_text()
    if value.kind == "term":
        return f"'{value.value}'"
    text = value.canonical_text()
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    escaped = escaped.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{escaped}"'


def _filters_to_text(type_filters, attr_filters) -> list:
    parts = [f"type={t}" for t in type_filters]
    for flt in attr_filters:
        op = f" {flt.op} " if flt.op == "contains" else flt.op
        parts.append(f"attr[{flt.key}]{op}{_value_to_text(flt.value)}")
    return parts


def query_to_text(query: Query) -> str:
    parts = _filters_to_text(query.type_filters, query.attr_filters)
    for constraint in query.path_constraints:
        steps = ", ".join(f"{s.kind}.{s.direction}" for s in constraint.steps)
        target = constraint.target_category or "entity"
        inner = ", ".join(
            _filters_to_text(constraint.type_filters, constraint.attr_filters)
        )
        parts.append(f"path({steps} -> {target}[{inner}])")
    text = f"select {query.category}"
    if parts:
        text += " where " + " and ".join(parts)
    return text
