"""In-memory provenance graph store with a declarative query engine.

Documents are validated, harmonized against a terminology registry, and kept
as immutable per-source snapshots. Ingesting a source tag again replaces its
snapshot atomically: readers grab the source map once per operation and see
either the old or the new state, never a mix. Writes serialize through one
lock; reads take none.

Each snapshot carries a resolved-type index (canonical term -> record ids)
used to prune query candidates, and per-kind adjacency maps used to walk
path constraints. The match predicate itself lives in query.py so that a
naive full-scan evaluator can apply the identical semantics.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import (
    InvalidDocumentError,
    NotACollectionError,
    UnknownIdError,
)
from .model import (
    Activity,
    Agent,
    Document,
    Entity,
    Relation,
    record_category,
    validate,
)
from .query import Query, record_filters_hold
from .terminology import EMPTY_REGISTRY, Registry, harmonize

DEFAULT_MAX_RESULTS = 10_000


@dataclass(frozen=True)
class IngestSummary:
    source: str
    entities: int
    collections: int
    activities: int
    agents: int
    relations: int

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "entities": self.entities,
            "collections": self.collections,
            "activities": self.activities,
            "agents": self.agents,
            "relations": self.relations,
        }


@dataclass(frozen=True)
class Row:
    source: str
    record_id: str
    record: object


@dataclass(frozen=True)
class ResultSet:
    """Deduplicated rows in deterministic (source, id) order."""

    rows: tuple
    total: int


def _relation_key(index: int) -> str:
    # zero-padded so lexicographic row order equals document order
    return f"rel-{index:06d}"


class _Source:
    """Immutable view of one ingested document plus its indexes."""

    def __init__(self, tag: str, document: Document, registry: Registry):
        self.tag = tag
        self.document = document
        self.relations = document.relations
        self.relation_keys = {
            _relation_key(i): rel for i, rel in enumerate(self.relations)
        }
        # resolved canonical type term -> set of record ids
        self.type_index: dict = {}
        for record in document.records:
            if isinstance(record, Relation):
                continue
            for term in record.type_terms():
                canonical = registry.resolve(term)
                self.type_index.setdefault(canonical, set()).add(record.id)
                if canonical != term:
                    self.type_index.setdefault(term, set()).add(record.id)
        # (kind, subject_to_object) -> {id: [neighbor ids]}
        self.adjacency: dict = {}
        for rel in self.relations:
            self.adjacency.setdefault((rel.kind, True), {}) \
                .setdefault(rel.subject, []).append(rel.object)
            self.adjacency.setdefault((rel.kind, False), {}) \
                .setdefault(rel.object, []).append(rel.subject)

    def step(self, ids: set, kind: str, subject_to_object: bool) -> set:
        table = self.adjacency.get((kind, subject_to_object), {})
        out: set = set()
        for record_id in ids:
            out.update(table.get(record_id, ()))
        return out

    def category_records(self, category: str) -> Iterable:
        wanted = {"entity": Entity, "activity": Activity, "agent": Agent}[category]
        return (r for r in self.document.records if isinstance(r, wanted))


class Store:
    def __init__(
        self,
        registry: Registry = EMPTY_REGISTRY,
        max_results: int = DEFAULT_MAX_RESULTS,
        max_path_length: int = 8,
    ):
        self.registry = registry
        self.max_results = max_results
        self.max_path_length = max_path_length
        self._write_lock = threading.Lock()
        self._sources: dict = {}

    # -- ingest ----------------------------------------------------------

    def ingest(
        self, source_tag: str, doc: Document, registry: Optional[Registry] = None
    ) -> IngestSummary:
        """Validate, harmonize, and store a document under a source tag,
        replacing any previous snapshot for that tag atomically."""
        reg = registry if registry is not None else self.registry
        report = validate(doc)
        if not report.ok:
            raise InvalidDocumentError(
                f"document for source {source_tag!r} has "
                f"{len(report.violations)} violation(s)",
                report,
            )
        harmonized = harmonize(reg, doc)
        # the index must resolve with the same registry run_query uses, so a
        # per-ingest override only ever affects harmonization
        snapshot = _Source(source_tag, harmonized, self.registry)
        with self._write_lock:
            sources = dict(self._sources)
            sources[source_tag] = snapshot
            self._sources = sources
        entities = harmonized.entities
        return IngestSummary(
            source=source_tag,
            entities=len(entities),
            collections=sum(1 for e in entities if e.is_collection),
            activities=len(harmonized.activities),
            agents=len(harmonized.agents),
            relations=len(harmonized.relations),
        )

    def drop(self, source_tag: str) -> bool:
        with self._write_lock:
            if source_tag not in self._sources:
                return False
            sources = dict(self._sources)
            del sources[source_tag]
            self._sources = sources
            return True

    # -- reads -----------------------------------------------------------

    def snapshot(self) -> dict:
        return self._sources

    def source_tags(self) -> list:
        return sorted(self._sources)

    def counts(self) -> dict:
        out: dict = {}
        for tag, source in sorted(self.snapshot().items()):
            doc = source.document
            out[tag] = {
                "entities": len(doc.entities),
                "activities": len(doc.activities),
                "agents": len(doc.agents),
                "relations": len(doc.relations),
            }
        return out

    def document(self, source_tag: str) -> Document:
        source = self.snapshot().get(source_tag)
        if source is None:
            raise UnknownIdError(source_tag, f"no source tagged {source_tag!r}")
        return source.document

    # -- query -----------------------------------------------------------

    def _candidates(self, source: _Source, query: Query) -> Iterable:
        if query.type_filters:
            sets = []
            for wanted in query.type_filters:
                canonical = self.registry.resolve(wanted)
                ids = source.type_index.get(canonical, set())
                if wanted != canonical:
                    ids = ids | source.type_index.get(wanted, set())
                sets.append(ids)
            ids = set.intersection(*sets) if sets else set()
            records = (source.document.get(i) for i in ids)
            return (
                r for r in records if record_category(r) == query.category
            )
        return source.category_records(query.category)

    def _path_holds(self, source: _Source, record, constraint) -> bool:
        if len(constraint.steps) > self.max_path_length:
            return False
        frontier = {record.id}
        for step in constraint.steps:
            frontier = source.step(frontier, step.kind, step.subject_to_object())
            if not frontier:
                return False
        for target_id in frontier:
            target = source.document.get(target_id)
            if target is None:
                continue
            if constraint.target_category is not None and \
                    record_category(target) != constraint.target_category:
                continue
            if record_filters_hold(
                target,
                constraint.type_filters,
                constraint.attr_filters,
                self.registry.resolve,
            ):
                return True
        return False

    def matches(self, source: _Source, record, query: Query) -> bool:
        if not record_filters_hold(
            record, query.type_filters, query.attr_filters, self.registry.resolve
        ):
            return False
        return all(
            self._path_holds(source, record, c) for c in query.path_constraints
        )

    def run_query(self, query: Query) -> ResultSet:
        rows: list = []
        snap = self.snapshot()  # one grab: sees a consistent source map
        for tag in sorted(snap):
            source = snap[tag]
            for record in self._candidates(source, query):
                if self.matches(source, record, query):
                    rows.append(Row(tag, record.id, record))
        rows.sort(key=lambda row: (row.source, row.record_id))
        total = len(rows)
        return ResultSet(tuple(rows[: self.max_results]), total)

    # -- record access ----------------------------------------------------

    def members(self, collection_id: str, source: Optional[str] = None) -> ResultSet:
        snap = self.snapshot()
        tag, record = self._find("entity", collection_id, source, snap)
        if not record.is_collection:
            raise NotACollectionError(collection_id)
        src = snap[tag]
        rows = [
            Row(tag, member_id, src.document.get(member_id))
            for member_id in sorted(src.step({collection_id}, "hadMember", True))
        ]
        return ResultSet(tuple(rows), len(rows))

    def closure(self, entity_id: str, source: Optional[str] = None) -> Document:
        from .model import provenance_closure

        snap = self.snapshot()
        tag, record = self._find("entity", entity_id, source, snap)
        return provenance_closure(snap[tag].document, entity_id)

    def _find(self, category: str, record_id: str, source: Optional[str],
              snap: Optional[dict] = None):
        if snap is None:
            snap = self.snapshot()
        tags = [source] if source is not None else sorted(snap)
        hits = []
        for tag in tags:
            src = snap.get(tag)
            if src is None:
                continue
            if category == "relation":
                rel = src.relation_keys.get(record_id)
                if rel is not None:
                    hits.append((tag, rel))
                continue
            record = src.document.get(record_id)
            if record is not None and record_category(record) == category:
                hits.append((tag, record))
        if not hits:
            raise UnknownIdError(record_id, f"no {category} with id {record_id!r}")
        if len(hits) > 1:
            tags_text = ", ".join(tag for tag, _ in hits)
            raise UnknownIdError(
                record_id,
                f"id {record_id!r} is ambiguous across sources ({tags_text}); "
                f"pass an explicit source",
            )
        return hits[0]

    def get_record(self, category: str, record_id: str, source: Optional[str] = None):
        return self._find(category, record_id, source)

    def list_rows(
        self,
        category: str,
        type_filters: tuple = (),
        attr_filters: tuple = (),
    ) -> ResultSet:
        """Paged-listing backend: entity/activity/agent rows via the query
        predicate, relation rows keyed by their stable ordinal."""
        if category == "relation":
            rows = []
            snap = self.snapshot()
            for tag in sorted(snap):
                src = snap[tag]
                for index, rel in enumerate(src.relations):
                    if record_filters_hold(
                        rel, type_filters, attr_filters, self.registry.resolve
                    ):
                        rows.append(Row(tag, _relation_key(index), rel))
            rows.sort(key=lambda row: (row.source, row.record_id))
            return ResultSet(tuple(rows[: self.max_results]), len(rows))
        query = Query(category, tuple(type_filters), tuple(attr_filters), ())
        return self.run_query(query)
