"""Federated query mediation over API-conformant endpoints.

One query fans out to every configured endpoint concurrently, each request
bounded by its endpoint's deadline. Responses are parsed with the JSON
codec, harmonized through the endpoint's registry overlay (layered over the
global registry, overlay mappings winning), and merged in deterministic
(tag, id) order. A slow or dead endpoint is reported in per_source and never
fails the whole call: partial failure is success-with-report.

Rows from different sources are kept distinct even when they describe the
same logical record; cross-source entity resolution is out of scope.

Federation files are line oriented (# comments)::

    endpoint <tag> <url> [deadlineMs] [overlay-registry-path]
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import httpx

from .errors import NoEndpointsError, ParseError, SourceSpan
from .json_codec import record_from_obj
from .model import Attribute, AttributeValue, PROV_TYPE
from .query import Query, query_to_text
from .store import Row
from .terminology import EMPTY_REGISTRY, Registry, load_registry

DEFAULT_DEADLINE_MS = 5_000


@dataclass(frozen=True)
class EndpointDescriptor:
    tag: str
    base_url: str
    deadline_ms: int = DEFAULT_DEADLINE_MS
    overlay: Optional[Registry] = None

    def __post_init__(self) -> None:
        if self.deadline_ms <= 0:
            raise ValueError("deadline must be positive")


@dataclass(frozen=True)
class SourceStatus:
    ok: bool
    row_count: int = 0
    error: Optional[str] = None
    warnings: tuple = ()

    def as_dict(self) -> dict:
        out: dict = {"ok": self.ok}
        if self.ok:
            out["rows"] = self.row_count
        else:
            out["error"] = self.error
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


@dataclass(frozen=True)
class FederatedResult:
    rows: tuple
    per_source: dict
    elapsed_ms: dict


@dataclass(frozen=True)
class ProbeReport:
    tag: str
    reachable: bool
    elapsed_ms: float
    formats: tuple = ()
    counts: dict = field(default_factory=dict)
    error: Optional[str] = None


def load_federation(path: Union[str, Path]) -> list:
    """Parse a federation file into endpoint descriptors."""
    endpoints: list = []
    tags: set = set()
    base = Path(path).parent
    for line_no, raw in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        span = SourceSpan(line_no, 1)
        if fields[0] != "endpoint" or not 3 <= len(fields) <= 5:
            raise ParseError(
                "endpoint lines look like: endpoint <tag> <url> "
                "[deadlineMs] [overlay-registry-path]",
                span=span,
            )
        tag, url = fields[1], fields[2]
        if tag in tags:
            raise ParseError(f"duplicate endpoint tag {tag!r}", span=span)
        tags.add(tag)
        deadline = DEFAULT_DEADLINE_MS
        overlay = None
        if len(fields) >= 4:
            if not fields[3].isdigit() or int(fields[3]) <= 0:
                raise ParseError("deadlineMs must be a positive integer", span=span)
            deadline = int(fields[3])
        if len(fields) == 5:
            overlay_path = Path(fields[4])
            if not overlay_path.is_absolute():
                overlay_path = base / overlay_path
            overlay = load_registry(overlay_path)
        endpoints.append(EndpointDescriptor(tag, url, deadline, overlay))
    return endpoints


def _harmonize_record(record, registry: Registry):
    """Row-level harmonization: append canonical prov:type terms the record
    lacks (same rule the store applies at ingest)."""
    extra: list = []
    present = {
        a.value.value
        for a in record.attributes
        if a.key == PROV_TYPE and a.value.kind == "term"
    }
    for attr in record.attributes:
        if attr.key != PROV_TYPE or attr.value.kind != "term":
            continue
        canonical = registry.resolve(attr.value.value)
        if canonical != attr.value.value and canonical not in present:
            present.add(canonical)
            extra.append(Attribute(PROV_TYPE, AttributeValue.term(canonical)))
    if not extra:
        return record
    from dataclasses import replace

    return replace(record, attributes=record.attributes + tuple(extra))


def _datatype_conflicts(registry: Registry, overlay: Registry) -> tuple:
    """Terms the global registry and an endpoint overlay define with
    different datatypes. Rows are surfaced unmodified; the disagreement is
    only flagged in the per-source report."""
    return tuple(
        f"datatype conflict for {term}: "
        f"{registry.definitions[term].datatype} (global) vs "
        f"{overlay.definitions[term].datatype} (overlay)"
        for term in sorted(overlay.definitions, key=str)
        if term in registry.definitions
        and overlay.definitions[term].datatype != registry.definitions[term].datatype
    )


def _query_endpoint(
    endpoint: EndpointDescriptor, query_text: str, registry: Registry
) -> list:
    """POST the query and follow next-page tokens until exhausted; the
    per-endpoint deadline bounds each request, and the whole walk is capped
    at the first ten thousand rows (the store-side result bound)."""
    timeout = endpoint.deadline_ms / 1000.0
    url = endpoint.base_url.rstrip("/") + "/v1/query"
    reg = registry
    if endpoint.overlay is not None:
        reg = registry.merged(endpoint.overlay)
    rows: list = []
    page = 1
    while True:
        response = httpx.post(
            url,
            content=query_text.encode("utf-8"),
            headers={"content-type": "text/plain; charset=utf-8"},
            params={"format": "json", "page": str(page), "pageSize": "10000"},
            timeout=timeout,
        )
        response.raise_for_status()
        payload = response.json()
        for index, row in enumerate(payload.get("rows", [])):
            record = record_from_obj(
                row.get("category", "entity"), row.get("record", {}),
                f"/rows/{index}",
            )
            rows.append(
                Row(endpoint.tag, row.get("id", ""), _harmonize_record(record, reg))
            )
        next_page = payload.get("nextPage")
        if not next_page or len(rows) >= 10_000:
            return rows
        page = int(next_page)


def federated_query(
    endpoints: list,
    query: Union[Query, str],
    registry: Registry = EMPTY_REGISTRY,
    strict: bool = False,
) -> FederatedResult:
    """Send one query to every endpoint concurrently and merge the rows.

    Sources that fail or exceed their deadline appear in per_source with an
    error description; their rows are simply absent. With strict=True an
    empty endpoint list is an error instead of an empty result.
    """
    if not endpoints:
        if strict:
            raise NoEndpointsError("no endpoints configured")
        return FederatedResult((), {}, {})
    query_text = query if isinstance(query, str) else query_to_text(query)

    per_source: dict = {}
    elapsed: dict = {}
    merged: list = []

    def call(endpoint: EndpointDescriptor):
        warnings = ()
        if endpoint.overlay is not None:
            warnings = _datatype_conflicts(registry, endpoint.overlay)
        started = time.monotonic()
        try:
            rows = _query_endpoint(endpoint, query_text, registry)
            return endpoint.tag, rows, None, warnings, \
                (time.monotonic() - started) * 1000
        except Exception as exc:  # deadline, connection, bad payload, ...
            return (
                endpoint.tag,
                [],
                f"{type(exc).__name__}: {exc}",
                warnings,
                (time.monotonic() - started) * 1000,
            )

    with ThreadPoolExecutor(max_workers=len(endpoints)) as pool:
        for tag, rows, error, warnings, ms in pool.map(call, endpoints):
            elapsed[tag] = ms
            if error is None:
                per_source[tag] = SourceStatus(True, len(rows), warnings=warnings)
                merged.extend(rows)
            else:
                per_source[tag] = SourceStatus(False, error=error, warnings=warnings)

    merged.sort(key=lambda row: (row.source, row.record_id))
    deduped: list = []
    seen: set = set()
    for row in merged:
        key = (row.source, row.record_id)
        if key not in seen:
            seen.add(key)
            deduped.append(row)
    return FederatedResult(tuple(deduped), per_source, elapsed)


def probe(endpoint: EndpointDescriptor) -> ProbeReport:
    """Lightweight capability probe; never raises on dead endpoints."""
    started = time.monotonic()
    try:
        response = httpx.get(
            endpoint.base_url.rstrip("/") + "/v1/",
            timeout=endpoint.deadline_ms / 1000.0,
        )
        response.raise_for_status()
        payload = response.json()
        return ProbeReport(
            tag=endpoint.tag,
            reachable=True,
            elapsed_ms=(time.monotonic() - started) * 1000,
            formats=tuple(payload.get("formats", ())),
            counts=payload.get("sources", {}),
        )
    except Exception as exc:
        return ProbeReport(
            tag=endpoint.tag,
            reachable=False,
            elapsed_ms=(time.monotonic() - started) * 1000,
            error=f"{type(exc).__name__}: {exc}",
        )
