"""Terminology registry: namespaces, term definitions, and the directed
source-term to canonical-term mappings used to harmonize documents.

Registry files are line oriented (``#`` comments allowed)::

    ns   <prefix> <uri>
    term <qname> <datatype> "label" "definition" [url]
    map  <source-qname> <canonical-qname>

Datatypes: string, integer, decimal, datetime, uri, term. Mapping chains
(site term -> consortium term -> lexicon term) are allowed but must be
acyclic, every mapping target must have a term definition, and a source maps
to at most one canonical term. Registries are immutable after load and safe
to share across threads.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import (
    CycleDetectedError,
    ParseError,
    SourceSpan,
    UndeclaredPrefixError,
    UnknownCanonicalError,
)
from .model import (
    Attribute,
    AttributeValue,
    Document,
    PROV_ROLE,
    PROV_TYPE,
    QualifiedName,
)

DATATYPES = ("string", "integer", "decimal", "datetime", "uri", "term")


@dataclass(frozen=True)
class TermDefinition:
    term: QualifiedName
    label: str
    definition: str
    datatype: str
    source_url: Optional[str] = None


@dataclass(frozen=True)
class TermMapping:
    source: QualifiedName
    canonical: QualifiedName


@dataclass(frozen=True)
class Registry:
    """Immutable set of namespaces, definitions, and mappings."""

    namespaces: dict = field(default_factory=dict)
    definitions: dict = field(default_factory=dict)  # term -> TermDefinition
    mappings: dict = field(default_factory=dict)  # source -> canonical

    def resolve(self, term: QualifiedName) -> QualifiedName:
        """Follow mappings to fixpoint; identity for unmapped terms."""
        seen = {term}
        current = term
        while current in self.mappings:
            current = self.mappings[current]
            if current in seen:  # load/merge reject cycles; guard anyway
                raise CycleDetectedError(f"mapping cycle through {current}")
            seen.add(current)
        return current

    def definition(self, term: QualifiedName) -> Optional[TermDefinition]:
        return self.definitions.get(term)

    def merged(self, overlay: "Registry") -> "Registry":
        """Layer another registry on top; overlay mappings win on conflict."""
        namespaces = {**self.namespaces, **overlay.namespaces}
        definitions = {**self.definitions, **overlay.definitions}
        mappings = {**self.mappings, **overlay.mappings}
        _check_mappings(mappings, definitions, require_definitions=False)
        return Registry(namespaces, definitions, mappings)


EMPTY_REGISTRY = Registry()


def _check_mappings(mappings: dict, definitions: dict, require_definitions: bool) -> None:
    for source, canonical in mappings.items():
        if require_definitions and canonical not in definitions:
            raise UnknownCanonicalError(str(canonical))
    for start in mappings:
        seen = {start}
        current = start
        while current in mappings:
            current = mappings[current]
            if current in seen:
                raise CycleDetectedError(
                    f"mapping cycle detected through {current}"
                )
            seen.add(current)


def _qname(token: str, namespaces: dict, line_no: int) -> QualifiedName:
    try:
        qn = QualifiedName.parse(token)
    except ValueError as exc:
        raise ParseError(str(exc), span=SourceSpan(line_no, 1)) from None
    if qn.prefix not in namespaces:
        raise UndeclaredPrefixError(qn.prefix, span=SourceSpan(line_no, 1))
    return qn


def parse_registry(text: str) -> Registry:
    namespaces: dict = {}
    definitions: dict = {}
    mappings: dict = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        try:
            fields = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ParseError(str(exc), span=SourceSpan(line_no, 1)) from None
        if not fields:
            continue
        keyword, args = fields[0], fields[1:]
        span = SourceSpan(line_no, 1)
        if keyword == "ns":
            if len(args) != 2:
                raise ParseError("ns takes <prefix> <uri>", span=span)
            namespaces[args[0]] = args[1]
        elif keyword == "term":
            if not 4 <= len(args) <= 5:
                raise ParseError(
                    'term takes <qname> <datatype> "label" "definition" [url]',
                    span=span,
                )
            term = _qname(args[0], namespaces, line_no)
            if args[1] not in DATATYPES:
                raise ParseError(
                    f"unknown datatype {args[1]!r}", span=span,
                    expected="|".join(DATATYPES), found=args[1],
                )
            if term in definitions:
                raise ParseError(f"term {term} defined twice", span=span)
            definitions[term] = TermDefinition(
                term=term,
                datatype=args[1],
                label=args[2],
                definition=args[3],
                source_url=args[4] if len(args) == 5 else None,
            )
        elif keyword == "map":
            if len(args) != 2:
                raise ParseError("map takes <source-qname> <canonical-qname>", span=span)
            source = _qname(args[0], namespaces, line_no)
            canonical = _qname(args[1], namespaces, line_no)
            if source in mappings and mappings[source] != canonical:
                raise ParseError(
                    f"{source} already maps to {mappings[source]}", span=span
                )
            mappings[source] = canonical
        else:
            raise ParseError(
                "unknown registry line", span=span,
                expected="ns, term, or map", found=keyword,
            )

    _check_mappings(mappings, definitions, require_definitions=True)
    return Registry(namespaces, definitions, mappings)


def load_registry(path: Union[str, Path]) -> Registry:
    return parse_registry(Path(path).read_text(encoding="utf-8"))


def resolve(registry: Registry, term: QualifiedName) -> QualifiedName:
    return registry.resolve(term)


def _harmonize_attrs(attributes: tuple, registry: Registry, keys: tuple) -> tuple:
    extra: list = []
    present = {
        (a.key, a.value.value)
        for a in attributes
        if a.key in keys and a.value.kind == "term"
    }
    for attr in attributes:
        if attr.key not in keys or attr.value.kind != "term":
            continue
        canonical = registry.resolve(attr.value.value)
        if canonical == attr.value.value:
            continue
        if (attr.key, canonical) in present:
            continue
        present.add((attr.key, canonical))
        extra.append(Attribute(attr.key, AttributeValue.term(canonical)))
    if not extra:
        return attributes
    return attributes + tuple(extra)


def harmonize(
    registry: Registry, doc: Document, include_roles: bool = False
) -> Document:
    """Append canonical (prov:type, term) attributes wherever a record is
    typed with a mapped source term and lacks the canonical one.

    Existing attributes are never removed or reordered, so the operation is
    idempotent and record counts are preserved. With include_roles=True the
    same treatment extends to prov:role values (off by default; roles in the
    corpus already use canonical terms).
    """
    keys = (PROV_TYPE, PROV_ROLE) if include_roles else (PROV_TYPE,)
    records: list = []
    needed_prefixes: set = set()
    for record in doc.records:
        attrs = _harmonize_attrs(record.attributes, registry, keys)
        if attrs is record.attributes:
            records.append(record)
        else:
            for attr in attrs[len(record.attributes):]:
                needed_prefixes.add(attr.value.value.prefix)
            records.append(_with_attributes(record, attrs))
    namespaces = dict(doc.namespaces)
    for prefix in sorted(needed_prefixes):
        # appended canonical terms must stay resolvable in the output
        if prefix not in namespaces and prefix in registry.namespaces:
            namespaces[prefix] = registry.namespaces[prefix]
    return Document(namespaces, tuple(records))


def _with_attributes(record, attributes: tuple):
    from dataclasses import replace

    return replace(record, attributes=attributes)
