"""PROV-Notation subset codec.

Covers exactly the statement forms used in the neuroimaging interchange
corpus: entity/activity/agent records, the eight-relation catalog, bracketed
attribute lists, a leading ``prefix <p> <uri>`` namespace block, and ``//``
line comments. Full W3C PROV-N (bundles, qualified generation, ...) is out
of scope. The grammar is documented in docs/provn-grammar.md.

Parsing is strict about namespaces: a qualified name whose prefix was never
declared raises UndeclaredPrefixError rather than inventing a namespace.
Serialization is deterministic, so equal documents always produce identical
bytes, and ``parse_provn(serialize_provn(d))`` reproduces ``d`` exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from decimal import Decimal
from typing import NamedTuple, Optional

from .errors import (
    InvalidDocumentError,
    ParseError,
    SourceSpan,
    UndeclaredPrefixError,
)
from .model import (
    Activity,
    Agent,
    Attribute,
    AttributeValue,
    DANGLING_REF,
    Document,
    Entity,
    QualifiedName,
    Relation,
    RELATION_KINDS,
    format_decimal,
    format_iso,
    is_qualified_name,
    is_uri,
    parse_timestamp,
    validate,
)

RECORD_KEYWORDS = ("entity", "activity", "agent")

# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

LPAREN = "LPAREN"
RPAREN = "RPAREN"
LBRACKET = "LBRACKET"
RBRACKET = "RBRACKET"
COMMA = "COMMA"
EQUALS = "EQUALS"
DASH = "DASH"
STRING = "STRING"
SQUOTED = "SQUOTED"
DATETIME = "DATETIME"
NUMBER = "NUMBER"
NAME = "NAME"
URIREF = "URIREF"
EOF = "EOF"

_PUNCT = {
    "(": LPAREN,
    ")": RPAREN,
    "[": LBRACKET,
    "]": RBRACKET,
    ",": COMMA,
    "=": EQUALS,
}

# one master alternation; strings/quoted values/uri refs exclude raw
# newlines so only whitespace tokens can move the line counter
_MASTER_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<datetime>\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2})
  | (?P<number>[+-]?(?:\d+(?:\.\d+)?|\.\d+))
  | (?P<name>[A-Za-z_][A-Za-z0-9_.\-]*(?::[A-Za-z0-9_][A-Za-z0-9_.\-]*)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<squoted>'[^'\n]*')
  | (?P<uriref><[^>\n]*>)
  | (?P<punct>[()\[\],=])
  | (?P<dash>-)
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_UNESCAPES = {"\n": "\\n", "\t": "\\t", "\r": "\\r", '"': '\\"', "\\": "\\\\"}

_KIND_BY_GROUP = {
    "datetime": DATETIME,
    "number": NUMBER,
    "name": NAME,
    "squoted": SQUOTED,
    "uriref": URIREF,
    "dash": DASH,
}


class Token(NamedTuple):
    kind: str
    value: str
    line: int
    col: int
    length: int = 1

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.col, self.length)


class _Lexer:
    def __init__(self, text: str):
        self.text = text

    def tokens(self) -> list:
        out = []
        text = self.text
        pos = 0
        line = 1
        line_start = 0
        length = len(text)
        while pos < length:
            match = _MASTER_RE.match(text, pos)
            if match is None:
                raise self._stuck(text, pos, line, line_start)
            group = match.lastgroup
            value = match.group()
            if group == "ws":
                newlines = value.count("\n")
                if newlines:
                    line += newlines
                    line_start = pos + value.rfind("\n") + 1
                pos = match.end()
                continue
            if group == "comment":
                pos = match.end()
                continue
            col = pos - line_start + 1
            if group == "punct":
                out.append(Token(_PUNCT[value], value, line, col))
            elif group == "string":
                unescaped = self._unescape(
                    value, SourceSpan(line, col, len(value))
                ) if "\\" in value else value[1:-1]
                out.append(Token(STRING, unescaped, line, col, len(value)))
            elif group in ("squoted", "uriref"):
                out.append(
                    Token(_KIND_BY_GROUP[group], value[1:-1], line, col, len(value))
                )
            else:
                out.append(
                    Token(_KIND_BY_GROUP[group], value, line, col, len(value))
                )
            pos = match.end()
        out.append(Token(EOF, "", line, pos - line_start + 1))
        return out

    def _unescape(self, raw: str, span: SourceSpan) -> str:
        body = raw[1:-1]
        if "\\" not in body:
            return body
        chars: list = []
        index = 0
        while index < len(body):
            ch = body[index]
            if ch == "\\":
                esc = body[index + 1]  # regex guarantees a following char
                if esc not in _ESCAPES:
                    raise ParseError(f"unsupported escape \\{esc}", span=span)
                chars.append(_ESCAPES[esc])
                index += 2
            else:
                chars.append(ch)
                index += 1
        return "".join(chars)

    def _stuck(self, text: str, pos: int, line: int, line_start: int) -> ParseError:
        span = SourceSpan(line, pos - line_start + 1)
        ch = text[pos]
        if ch == '"':
            return ParseError("unterminated string literal", span=span)
        if ch == "'":
            return ParseError("unterminated quoted value", span=span)
        if ch == "<":
            return ParseError("unterminated <uri> reference", span=span)
        return ParseError(
            f"unexpected character {ch!r}", span=span,
            found=text[pos : pos + 12],
        )


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Arg:
    """One positional statement argument, before per-kind interpretation."""

    kind: str  # "name" | "time" | "dash" | "attrs"
    value: object
    span: SourceSpan


class _Parser:
    def __init__(self, text: str):
        self.tokens = _Lexer(text).tokens()
        self.index = 0

    # -- token plumbing -------------------------------------------------

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.current
        if token.kind != EOF:
            self.index += 1
        return token

    def expect(self, kind: str, what: str) -> Token:
        token = self.current
        if token.kind != kind:
            raise ParseError(
                "malformed statement",
                span=token.span,
                expected=what,
                found=token.value or "end of input",
            )
        return self.advance()

    # -- document -------------------------------------------------------

    def parse_document(self) -> Document:
        namespaces: dict = {}
        while self.current.kind == NAME and self.current.value == "prefix":
            self.advance()
            name = self.expect(NAME, "namespace prefix")
            if ":" in name.value:
                raise ParseError(
                    "namespace prefix must be a plain name",
                    span=name.span,
                    found=name.value,
                )
            uri = self.expect(URIREF, "<uri>")
            if name.value in namespaces:
                raise ParseError(
                    f"duplicate declaration of prefix {name.value!r}", span=name.span
                )
            namespaces[name.value] = uri.value

        self.namespaces = namespaces
        records: list = []
        seen_ids: dict = {}
        while self.current.kind != EOF:
            head = self.expect(NAME, "statement keyword")
            record = self.parse_statement(head)
            if not isinstance(record, Relation):
                if record.id in seen_ids:
                    raise ParseError(
                        f"duplicate record id {record.id!r}", span=head.span
                    )
                seen_ids[record.id] = True
            records.append(record)
        return Document(namespaces, tuple(records))

    # -- statements -------------------------------------------------------

    def parse_statement(self, head: Token):
        keyword = head.value
        if ":" in keyword or (
            keyword not in RECORD_KEYWORDS and keyword not in RELATION_KINDS
        ):
            raise ParseError(
                "unknown statement",
                span=head.span,
                expected="entity, activity, agent, or a relation kind",
                found=keyword,
            )
        self.expect(LPAREN, "'('")
        args = []
        if self.current.kind != RPAREN:
            while True:
                args.append(self.parse_arg())
                if self.current.kind == COMMA:
                    self.advance()
                    continue
                break
        self.expect(RPAREN, "',' or ')'")
        if keyword == "entity":
            return self._entity(head, args, Entity)
        if keyword == "agent":
            return self._entity(head, args, Agent)
        if keyword == "activity":
            return self._activity(head, args)
        return self._relation(head, keyword, args)

    def parse_arg(self) -> _Arg:
        token = self.current
        if token.kind == NAME:
            self.advance()
            return _Arg("name", token.value, token.span)
        if token.kind == DATETIME:
            self.advance()
            try:
                return _Arg("time", parse_timestamp(token.value), token.span)
            except ValueError as exc:  # shape matched but e.g. month 13
                raise ParseError(str(exc), span=token.span) from None
        if token.kind == DASH:
            self.advance()
            return _Arg("dash", None, token.span)
        if token.kind == LBRACKET:
            return _Arg("attrs", self.parse_attrs(), token.span)
        if token.kind == STRING:
            # quoted timestamps cover the log-style "07-Jun-2012 14:06:39"
            # form, which cannot be a bare token
            self.advance()
            try:
                return _Arg("time", parse_timestamp(token.value), token.span)
            except ValueError:
                raise ParseError(
                    "malformed statement argument",
                    span=token.span,
                    expected="identifier, timestamp, '-', or [attributes]",
                    found=f'"{token.value}"',
                ) from None
        raise ParseError(
            "malformed statement argument",
            span=token.span,
            expected="identifier, timestamp, '-', or [attributes]",
            found=token.value or "end of input",
        )

    def parse_attrs(self) -> tuple:
        self.expect(LBRACKET, "'['")
        attrs: list = []
        if self.current.kind != RBRACKET:
            while True:
                attrs.append(self.parse_attr())
                if self.current.kind == COMMA:
                    self.advance()
                    continue
                break
        self.expect(RBRACKET, "',' or ']'")
        return tuple(attrs)

    def parse_attr(self) -> Attribute:
        token = self.expect(NAME, "attribute key (prefix:local)")
        if ":" not in token.value:
            raise ParseError(
                "attribute key must be qualified",
                span=token.span,
                expected="prefix:local",
                found=token.value,
            )
        key = QualifiedName.parse(token.value)
        self._check_prefix(key.prefix, token.span)
        self.expect(EQUALS, "'='")
        return Attribute(key, self.parse_value())

    def parse_value(self) -> AttributeValue:
        token = self.current
        if token.kind == SQUOTED:
            self.advance()
            return self._classify_squoted(token)
        if token.kind == STRING:
            self.advance()
            if is_uri(token.value):
                return AttributeValue.uri(token.value)
            return AttributeValue.text(token.value)
        if token.kind == NUMBER:
            self.advance()
            return AttributeValue.number(Decimal(token.value))
        raise ParseError(
            "malformed attribute value",
            span=token.span,
            expected="'term', \"string\", or number",
            found=token.value or "end of input",
        )

    def _classify_squoted(self, token: Token) -> AttributeValue:
        value = token.value
        if is_uri(value):
            return AttributeValue.uri(value)
        if re.fullmatch(r"[+-]?(\d+(\.\d+)?|\.\d+)", value):
            return AttributeValue.number(Decimal(value))
        if is_qualified_name(value):
            qn = QualifiedName.parse(value)
            self._check_prefix(qn.prefix, token.span)
            return AttributeValue.term(qn)
        return AttributeValue.text(value)

    def _check_prefix(self, prefix: str, span: SourceSpan) -> None:
        if prefix not in self.namespaces:
            raise UndeclaredPrefixError(prefix, span=span)

    # -- per-kind interpretation ----------------------------------------

    def _split_attrs(self, head: Token, args: list) -> tuple:
        attrs: tuple = ()
        if args and args[-1].kind == "attrs":
            attrs = args[-1].value
            args = args[:-1]
        for arg in args:
            if arg.kind == "attrs":
                raise ParseError(
                    "attribute list must be the final argument", span=arg.span
                )
        return args, attrs

    def _arity_error(self, head: Token, note: str) -> ParseError:
        return ParseError(
            f"wrong arguments for {head.value}",
            span=head.span,
            expected=note,
        )

    def _name(self, head: Token, arg: _Arg, role: str) -> str:
        if arg.kind != "name":
            raise ParseError(
                f"{head.value} {role} must be an identifier",
                span=arg.span,
                expected="identifier",
                found=str(arg.value),
            )
        if ":" in arg.value:
            raise ParseError(
                f"{head.value} {role} must be a local identifier",
                span=arg.span,
                found=arg.value,
            )
        return arg.value

    def _opt(self, head: Token, arg: _Arg, role: str) -> Optional[str]:
        if arg.kind == "dash":
            return None
        return self._name(head, arg, role)

    def _time(self, head: Token, arg: _Arg) -> Optional[datetime]:
        if arg.kind == "dash":
            return None
        if arg.kind != "time":
            raise ParseError(
                f"{head.value} timestamp expected",
                span=arg.span,
                expected="timestamp or '-'",
                found=str(arg.value),
            )
        return arg.value

    def _entity(self, head: Token, args: list, cls):
        args, attrs = self._split_attrs(head, args)
        if len(args) != 1:
            raise self._arity_error(head, f"{head.value}(id, [attributes])")
        return cls(self._name(head, args[0], "id"), attrs)

    def _activity(self, head: Token, args: list) -> Activity:
        args, attrs = self._split_attrs(head, args)
        if not 1 <= len(args) <= 3:
            raise self._arity_error(
                head, "activity(id, start, end, [attributes])"
            )
        start = self._time(head, args[1]) if len(args) >= 2 else None
        end = self._time(head, args[2]) if len(args) >= 3 else None
        return Activity(self._name(head, args[0], "id"), start, end, attrs)

    def _relation(self, head: Token, kind: str, args: list) -> Relation:
        args, attrs = self._split_attrs(head, args)
        rel_id = None
        plan = None
        time = None

        if kind in ("used", "wasGeneratedBy"):
            if len(args) == 2:
                subj, obj = args
            elif len(args) == 3 and args[2].kind in ("time", "dash"):
                subj, obj = args[0], args[1]
                time = self._time(head, args[2])
            elif len(args) == 3:
                rel_id = self._opt(head, args[0], "relation id")
                subj, obj = args[1], args[2]
            elif len(args) == 4:
                rel_id = self._opt(head, args[0], "relation id")
                subj, obj = args[1], args[2]
                time = self._time(head, args[3])
            else:
                raise self._arity_error(
                    head, f"{kind}(relId, subject, object, time, [attributes])"
                )
        elif kind == "wasAssociatedWith":
            if len(args) == 2:
                subj, obj = args
            elif len(args) == 3:
                subj, obj = args[0], args[1]
                plan = self._opt(head, args[2], "plan")
            elif len(args) == 4:
                rel_id = self._opt(head, args[0], "relation id")
                subj, obj = args[1], args[2]
                plan = self._opt(head, args[3], "plan")
            else:
                raise self._arity_error(
                    head,
                    "wasAssociatedWith(relId, activity, agent, plan, [attributes])",
                )
        else:
            if len(args) == 2:
                subj, obj = args
            elif len(args) == 3:
                rel_id = self._opt(head, args[0], "relation id")
                subj, obj = args[1], args[2]
            else:
                raise self._arity_error(
                    head, f"{kind}(relId, subject, object, [attributes])"
                )

        return Relation(
            kind=kind,
            subject=self._name(head, subj, "subject"),
            object=self._name(head, obj, "object"),
            rel_id=rel_id,
            plan=plan,
            time=time,
            attributes=attrs,
        )


def parse_provn(text: str) -> Document:
    """Parse PROV-Notation text into a Document.

    Raises ParseError (with a line:column span) on malformed input and
    UndeclaredPrefixError when a qualified name's prefix has no declaration.
    """
    return _Parser(text).parse_document()


# ---------------------------------------------------------------------------
# Serializer
# ---------------------------------------------------------------------------


def _escape(text: str) -> str:
    return "".join(_UNESCAPES.get(ch, ch) for ch in text)


def _value_text(value: AttributeValue) -> str:
    if value.kind == "term":
        return f"'{value.value}'"
    if value.kind == "number":
        return format_decimal(value.value)
    if value.kind == "uri":
        return f'"{value.value}"'
    return f'"{_escape(value.value)}"'


def _attrs_text(attributes: tuple) -> str:
    return "[" + ", ".join(f"{a.key}={_value_text(a.value)}" for a in attributes) + "]"


def _relation_text(rel: Relation) -> str:
    parts: list = []
    if rel.kind in ("used", "wasGeneratedBy"):
        if rel.rel_id is not None:
            parts = [rel.rel_id, rel.subject, rel.object]
            if rel.time is not None:
                parts.append(format_iso(rel.time))
        else:
            parts = [rel.subject, rel.object]
            if rel.time is not None:
                parts.append(format_iso(rel.time))
    elif rel.kind == "wasAssociatedWith":
        if rel.rel_id is not None:
            parts = [rel.rel_id, rel.subject, rel.object, rel.plan or "-"]
        elif rel.plan is not None:
            parts = [rel.subject, rel.object, rel.plan]
        else:
            parts = [rel.subject, rel.object]
    else:
        if rel.rel_id is not None:
            parts = [rel.rel_id, rel.subject, rel.object]
        else:
            parts = [rel.subject, rel.object]
    if rel.attributes:
        parts.append(_attrs_text(rel.attributes))
    return f"{rel.kind}({', '.join(parts)})"


def serialize_provn(doc: Document, check: bool = True) -> str:
    """Serialize a Document to canonical PROV-Notation text.

    Output is deterministic: namespace declarations in insertion order, one
    statement per record in document order, attributes in stored order, ISO
    timestamps. With check=True (the default and public contract) a document
    whose relations have dangling references is rejected.
    """
    if check:
        report = validate(doc)
        dangling = [v for v in report.violations if v.code == DANGLING_REF]
        if dangling:
            raise InvalidDocumentError(
                f"document has {len(dangling)} dangling reference(s)", report
            )
    lines = [f"prefix {prefix} <{uri}>" for prefix, uri in doc.namespaces.items()]
    if lines:
        lines.append("")
    for record in doc.records:
        if isinstance(record, Entity):
            lines.append(f"entity({record.id}, {_attrs_text(record.attributes)})")
        elif isinstance(record, Agent):
            lines.append(f"agent({record.id}, {_attrs_text(record.attributes)})")
        elif isinstance(record, Activity):
            start = format_iso(record.start) if record.start else "-"
            end = format_iso(record.end) if record.end else "-"
            lines.append(
                f"activity({record.id}, {start}, {end}, "
                f"{_attrs_text(record.attributes)})"
            )
        else:
            if record.time is not None and record.kind not in (
                "used",
                "wasGeneratedBy",
            ):
                raise InvalidDocumentError(
                    f"{record.kind} cannot carry a timestamp in the notation"
                )
            lines.append(_relation_text(record))
    return "\n".join(lines) + "\n"
