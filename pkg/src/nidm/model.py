"""Core provenance data model: qualified names, attributed records, documents.

The model mirrors the W3C PROV-DM core structures (entity, activity, agent,
plus a fixed relation catalog) extended with neuroimaging attribute
vocabularies. Documents are immutable after construction and all operations
here are pure functions, so instances are safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import DuplicateIdError, UnknownIdError

# Relation kinds in the catalog, and the record categories their endpoints
# must resolve to (subject category, object category).
RELATION_KINDS = (
    "used",
    "wasGeneratedBy",
    "wasDerivedFrom",
    "wasInformedBy",
    "wasAssociatedWith",
    "actedOnBehalfOf",
    "wasAttributedTo",
    "hadMember",
)

ENDPOINT_CATEGORIES = {
    "used": ("activity", "entity"),
    "wasGeneratedBy": ("entity", "activity"),
    "wasDerivedFrom": ("entity", "entity"),
    "wasInformedBy": ("activity", "activity"),
    "wasAssociatedWith": ("activity", "agent"),
    "actedOnBehalfOf": ("agent", "agent"),
    "wasAttributedTo": ("entity", "agent"),
    "hadMember": ("entity", "entity"),
}

# Relation kinds that may carry a timestamp in the notation.
TIMED_KINDS = ("used", "wasGeneratedBy")

PROV_URI = "http://www.w3.org/ns/prov#"
NIDM_URI = "http://nidm.nidash.org/"

_NAME_BAD = re.compile(r"[\s'\":]")


@dataclass(frozen=True)
class QualifiedName:
    """A namespaced term identifier, written prefix:local.

    Both parts are non-empty and contain no whitespace, quotes, or the
    ':' separator. Equality is exact string equality on (prefix, local).
    """

    prefix: str
    local: str

    def __post_init__(self) -> None:
        for part, name in ((self.prefix, "prefix"), (self.local, "local")):
            if not part:
                raise ValueError(f"qualified name {name} must be non-empty")
            if _NAME_BAD.search(part):
                raise ValueError(
                    f"qualified name {name} {part!r} contains whitespace, quotes, or ':'"
                )

    @classmethod
    def parse(cls, text: str) -> "QualifiedName":
        prefix, sep, local = text.partition(":")
        if not sep:
            raise ValueError(f"{text!r} is not of the form prefix:local")
        return cls(prefix, local)

    def __str__(self) -> str:
        return f"{self.prefix}:{self.local}"


def is_qualified_name(text: str) -> bool:
    """True when text is lexically a prefix:local name."""
    prefix, sep, local = text.partition(":")
    if not sep or not prefix or not local:
        return False
    return not (_NAME_BAD.search(prefix) or _NAME_BAD.search(local))


_URI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*://\S+$")
_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d+)?|\.\d+)$")


def is_uri(text: str) -> bool:
    """Absolute-URI sniff used to tell Uri values apart from Text."""
    return bool(_URI_RE.match(text))


def is_decimal(text: str) -> bool:
    return bool(_DECIMAL_RE.match(text))


def format_decimal(value: Decimal) -> str:
    """Canonical lexical form: no exponent, no trailing fraction zeros."""
    text = format(value, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", "+0", ""):
        text = "0"
    return text


TEXT = "text"
NUMBER = "number"
TERM = "term"
URI = "uri"


@dataclass(frozen=True)
class AttributeValue:
    """Tagged attribute value: Text, Number (decimal), Term, or Uri.

    Numbers are stored as Decimal and compare by numeric value, so a value
    read as "2.0" equals one read as "2"; its canonical text is the trimmed
    decimal form.
    """

    kind: str
    value: Union[str, Decimal, QualifiedName]

    @classmethod
    def text(cls, value: str) -> "AttributeValue":
        return cls(TEXT, value)

    @classmethod
    def number(cls, value: Union[Decimal, int, str]) -> "AttributeValue":
        if not isinstance(value, Decimal):
            try:
                value = Decimal(str(value))
            except InvalidOperation as exc:
                raise ValueError(f"{value!r} is not a decimal number") from exc
        return cls(NUMBER, value)

    @classmethod
    def term(cls, value: Union[QualifiedName, str]) -> "AttributeValue":
        if isinstance(value, str):
            value = QualifiedName.parse(value)
        return cls(TERM, value)

    @classmethod
    def uri(cls, value: str) -> "AttributeValue":
        if not is_uri(value):
            raise ValueError(f"{value!r} is not an absolute URI")
        return cls(URI, value)

    @classmethod
    def classify(cls, text: str) -> "AttributeValue":
        """Value classification shared by the codecs: URI, then decimal,
        then plain text. (Term classification is syntax-driven and stays
        in the parsers.)"""
        if is_uri(text):
            return cls(URI, text)
        if is_decimal(text):
            return cls(NUMBER, Decimal(text))
        return cls(TEXT, text)

    def canonical_text(self) -> str:
        if self.kind == NUMBER:
            return format_decimal(self.value)
        return str(self.value)


@dataclass(frozen=True)
class Attribute:
    """One key/value pair. The same key may repeat within a record
    (multiple prov:type entries are legal and common)."""

    key: QualifiedName
    value: AttributeValue


PROV_TYPE = QualifiedName("prov", "type")
PROV_LABEL = QualifiedName("prov", "label")
PROV_VALUE = QualifiedName("prov", "value")
PROV_ROLE = QualifiedName("prov", "role")
PROV_COLLECTION = QualifiedName("prov", "Collection")


def _freeze_attrs(attributes: Iterable[Attribute]) -> tuple:
    attrs = tuple(attributes)
    for a in attrs:
        if not isinstance(a, Attribute):
            raise TypeError(f"expected Attribute, got {type(a).__name__}")
    return attrs


class _Attributed:
    """Mixin for records carrying an attribute list."""

    attributes: tuple

    def attr_values(self, key: QualifiedName) -> list:
        return [a.value for a in self.attributes if a.key == key]

    def type_terms(self) -> list:
        """QualifiedName values of all (prov:type, Term) attributes."""
        return [
            a.value.value
            for a in self.attributes
            if a.key == PROV_TYPE and a.value.kind == TERM
        ]

    def has_type(self, term: QualifiedName) -> bool:
        return term in self.type_terms()


@dataclass(frozen=True)
class Entity(_Attributed):
    """A thing with fixed aspects; a Collection when typed prov:Collection."""

    id: str
    attributes: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _freeze_attrs(self.attributes))

    @property
    def is_collection(self) -> bool:
        return self.has_type(PROV_COLLECTION)


@dataclass(frozen=True)
class Activity(_Attributed):
    """Something that occurs over a period of time and acts on entities.

    start/end are optional UTC timestamps at second precision.
    """

    id: str
    start: Optional[datetime] = None
    end: Optional[datetime] = None
    attributes: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _freeze_attrs(self.attributes))


@dataclass(frozen=True)
class Agent(_Attributed):
    """Something bearing responsibility for an activity or entity."""

    id: str
    attributes: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _freeze_attrs(self.attributes))


@dataclass(frozen=True)
class Relation(_Attributed):
    """A directed statement between two records.

    rel_id is decorative: stored and serialized but never used for identity
    (the notation this model was built against reuses ids across distinct
    statements). plan is only meaningful for wasAssociatedWith; time only
    for used/wasGeneratedBy.
    """

    kind: str
    subject: str
    object: str
    rel_id: Optional[str] = None
    plan: Optional[str] = None
    time: Optional[datetime] = None
    attributes: tuple = ()

    def __post_init__(self) -> None:
        if self.kind not in ENDPOINT_CATEGORIES:
            raise ValueError(f"unknown relation kind {self.kind!r}")
        object.__setattr__(self, "attributes", _freeze_attrs(self.attributes))


Record = Union[Entity, Activity, Agent, Relation]


def record_category(record: Record) -> str:
    if isinstance(record, Entity):
        return "entity"
    if isinstance(record, Activity):
        return "activity"
    if isinstance(record, Agent):
        return "agent"
    if isinstance(record, Relation):
        return "relation"
    raise TypeError(f"not a record: {type(record).__name__}")


@dataclass(frozen=True, eq=False)
class Document:
    """A namespace context plus an ordered set of records.

    The interchange unit for every codec and API in the toolkit. Equality
    compares namespaces and the per-category record sequences (attribute
    order included); the interleaving of categories is preserved for
    serialization but not significant for equality, since the JSON mapping
    groups records by category.
    """

    namespaces: Mapping[str, str]
    records: tuple = ()
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "namespaces", dict(self.namespaces))
        object.__setattr__(self, "records", tuple(self.records))
        index: dict = {}
        for record in self.records:
            if isinstance(record, Relation):
                continue
            if record.id in index:
                raise DuplicateIdError(record.id)
            index[record.id] = record
        object.__setattr__(self, "_index", index)

    # -- views ---------------------------------------------------------

    @property
    def entities(self) -> tuple:
        return tuple(r for r in self.records if isinstance(r, Entity))

    @property
    def activities(self) -> tuple:
        return tuple(r for r in self.records if isinstance(r, Activity))

    @property
    def agents(self) -> tuple:
        return tuple(r for r in self.records if isinstance(r, Agent))

    @property
    def relations(self) -> tuple:
        return tuple(r for r in self.records if isinstance(r, Relation))

    def get(self, record_id: str) -> Optional[Record]:
        """Entity/activity/agent lookup by local id (relations have none)."""
        return self._index.get(record_id)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return (
            dict(self.namespaces) == dict(other.namespaces)
            and self.entities == other.entities
            and self.activities == other.activities
            and self.agents == other.agents
            and self.relations == other.relations
        )


def build_document(
    namespaces: Mapping[str, str], records: Iterable[Record]
) -> Document:
    """Assemble a Document preserving record order. No validation happens
    here beyond id uniqueness (DuplicateIdError)."""
    return Document(namespaces, tuple(records))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

DANGLING_REF = "DanglingRef"
KIND_MISMATCH = "KindMismatch"
NOT_A_COLLECTION = "NotACollection"
BAD_INTERVAL = "BadInterval"
UNDECLARED_PREFIX = "UndeclaredPrefix"


@dataclass(frozen=True)
class Violation:
    record_index: int
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "valid (0 violations)"
        lines = [
            f"record {v.record_index}: {v.code}: {v.message}"
            for v in self.violations
        ]
        return "\n".join(lines)


def validate(doc: Document) -> ValidationReport:
    """Check a document and report every violation; the document itself is
    never modified and violations are data, not failures.

    Checks: unresolved relation endpoints (DanglingRef), endpoints of the
    wrong category (KindMismatch), hadMember subjects that are not
    collections (NotACollection), activities with start > end (BadInterval),
    and qualified-name prefixes missing from the namespace map
    (UndeclaredPrefix). Resolution is order-insensitive: a relation may
    precede the records it references.
    """
    violations: list = []

    def check_prefix(index: int, qn: QualifiedName) -> None:
        if qn.prefix not in doc.namespaces:
            violations.append(
                Violation(
                    index,
                    UNDECLARED_PREFIX,
                    f"prefix {qn.prefix!r} of {qn} is not declared",
                )
            )

    def check_endpoint(index: int, rel: Relation, role: str, ref: str, want: str) -> None:
        target = doc.get(ref)
        if target is None:
            violations.append(
                Violation(
                    index,
                    DANGLING_REF,
                    f"{rel.kind} {role} {ref!r} does not resolve",
                )
            )
            return
        got = record_category(target)
        if got != want:
            violations.append(
                Violation(
                    index,
                    KIND_MISMATCH,
                    f"{rel.kind} {role} {ref!r} is an {got}, expected {want}",
                )
            )
        elif rel.kind == "hadMember" and role == "subject":
            if not target.is_collection:
                violations.append(
                    Violation(
                        index,
                        NOT_A_COLLECTION,
                        f"hadMember subject {ref!r} lacks (prov:type, prov:Collection)",
                    )
                )

    for index, record in enumerate(doc.records):
        for attr in record.attributes:
            check_prefix(index, attr.key)
            if attr.value.kind == TERM:
                check_prefix(index, attr.value.value)

        if isinstance(record, Activity):
            if record.start and record.end and record.start > record.end:
                violations.append(
                    Violation(
                        index,
                        BAD_INTERVAL,
                        f"activity {record.id!r} starts after it ends",
                    )
                )
        elif isinstance(record, Relation):
            want_subj, want_obj = ENDPOINT_CATEGORIES[record.kind]
            check_endpoint(index, record, "subject", record.subject, want_subj)
            check_endpoint(index, record, "object", record.object, want_obj)
            if record.plan is not None:
                if record.kind != "wasAssociatedWith":
                    violations.append(
                        Violation(
                            index,
                            KIND_MISMATCH,
                            f"{record.kind} does not take a plan",
                        )
                    )
                else:
                    check_endpoint(index, record, "plan", record.plan, "entity")

    return ValidationReport(tuple(violations))


# ---------------------------------------------------------------------------
# Provenance closure
# ---------------------------------------------------------------------------

def provenance_closure(doc: Document, entity_id: str) -> Document:
    """Transitive ancestry subgraph of one entity.

    Starting from the entity, the closure repeatedly pulls in (until
    fixpoint): generating activities via wasGeneratedBy, the entities those
    activities used, agents and plans via wasAssociatedWith and
    wasAttributedTo, derivation sources via wasDerivedFrom, informing
    activities via wasInformedBy, delegation targets via actedOnBehalfOf,
    and members of included collections via hadMember. The result keeps
    every relation whose endpoints (plan included) all landed in the
    closure, in original document order.
    """
    start = doc.get(entity_id)
    if start is None or not isinstance(start, Entity):
        raise UnknownIdError(entity_id, f"{entity_id!r} is not an entity in the document")

    # Every relation kind points subject -> ancestry (generator, inputs,
    # agents, sources, informers, responsibles, members), so one uniform
    # pull rule covers the whole catalog.
    included = {entity_id}
    changed = True
    while changed:
        changed = False
        for rel in doc.relations:
            if rel.subject not in included:
                continue
            pulled = [rel.object]
            if rel.plan is not None:
                pulled.append(rel.plan)
            for ref in pulled:
                if ref not in included and doc.get(ref) is not None:
                    included.add(ref)
                    changed = True

    kept: list = []
    for record in doc.records:
        if isinstance(record, Relation):
            endpoints = [record.subject, record.object]
            if record.plan is not None:
                endpoints.append(record.plan)
            if all(ref in included for ref in endpoints):
                kept.append(record)
        elif record.id in included:
            kept.append(record)
    return Document(doc.namespaces, tuple(kept))


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------

_MONTHS = (
    "Jan", "Feb", "Mar", "Apr", "May", "Jun",
    "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
)
_SPM_RE = re.compile(r"^(\d{2})-([A-Za-z]{3})-(\d{4}) (\d{2}):(\d{2}):(\d{2})$")
_ISO_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})$")


def parse_timestamp(text: str) -> datetime:
    """Accept both timestamp forms used in the wild: ISO
    "2001-01-01T00:00:00" and the analysis-log form "07-Jun-2012 14:06:39"
    (English month abbreviations). The canonical internal form is a naive
    UTC datetime at second precision."""
    match = _ISO_RE.match(text)
    if match:
        return datetime(*(int(g) for g in match.groups()))
    match = _SPM_RE.match(text)
    if match:
        day, mon, year, hh, mm, ss = match.groups()
        try:
            month = _MONTHS.index(mon.capitalize()) + 1
        except ValueError:
            raise ValueError(f"unknown month abbreviation {mon!r}") from None
        return datetime(int(year), month, int(day), int(hh), int(mm), int(ss))
    raise ValueError(f"unrecognized timestamp {text!r}")


def format_iso(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S")


def format_spm(ts: datetime) -> str:
    # Locale-independent: %b would follow the host locale.
    return f"{ts.day:02d}-{_MONTHS[ts.month - 1]}-{ts.year:04d} " \
           f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}"
