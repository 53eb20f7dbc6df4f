"""Deterministic JSON mapping for documents.

Top-level keys are fixed: "namespaces", "entities", "activities", "agents",
"relations". Attributes are arrays of {key, valueKind, value} objects with
the value always carried as its canonical text (numbers included, so no
float round-off can creep in). The mapping groups records by category;
document equality is defined the same way, so the round trip is exact.

Parse errors carry a JSON-pointer-style path to the offending node.
"""

from __future__ import annotations

import json

from .errors import ParseError
from .model import (
    Activity,
    Agent,
    Attribute,
    AttributeValue,
    Document,
    Entity,
    QualifiedName,
    Relation,
    RELATION_KINDS,
    format_iso,
    parse_timestamp,
)

_VALUE_KINDS = ("text", "number", "term", "uri")


def _attr_obj(attr: Attribute) -> dict:
    return {
        "key": str(attr.key),
        "valueKind": attr.value.kind,
        "value": attr.value.canonical_text(),
    }


def record_to_obj(record) -> dict:
    """Single-record mapping, shared with the API's result rows."""
    if isinstance(record, Entity):
        return {"id": record.id, "attributes": [_attr_obj(a) for a in record.attributes]}
    if isinstance(record, Agent):
        return {"id": record.id, "attributes": [_attr_obj(a) for a in record.attributes]}
    if isinstance(record, Activity):
        return {
            "id": record.id,
            "start": format_iso(record.start) if record.start else None,
            "end": format_iso(record.end) if record.end else None,
            "attributes": [_attr_obj(a) for a in record.attributes],
        }
    if isinstance(record, Relation):
        return {
            "kind": record.kind,
            "relId": record.rel_id,
            "subject": record.subject,
            "object": record.object,
            "plan": record.plan,
            "time": format_iso(record.time) if record.time else None,
            "attributes": [_attr_obj(a) for a in record.attributes],
        }
    raise TypeError(f"not a record: {type(record).__name__}")


def serialize_json(doc: Document) -> str:
    obj = {
        "namespaces": dict(doc.namespaces),
        "entities": [record_to_obj(r) for r in doc.entities],
        "activities": [record_to_obj(r) for r in doc.activities],
        "agents": [record_to_obj(r) for r in doc.agents],
        "relations": [record_to_obj(r) for r in doc.relations],
    }
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _need(obj: dict, key: str, types, path: str, optional: bool = False):
    if key not in obj:
        if optional:
            return None
        raise ParseError(f"missing key {key!r}", path=path)
    value = obj[key]
    if value is None and optional:
        return None
    if not isinstance(value, types):
        raise ParseError(
            f"{key!r} has wrong type {type(value).__name__}", path=f"{path}/{key}"
        )
    return value


def _parse_attr(obj, path: str) -> Attribute:
    if not isinstance(obj, dict):
        raise ParseError("attribute must be an object", path=path)
    key_text = _need(obj, "key", str, path)
    kind = _need(obj, "valueKind", str, path)
    raw = obj.get("value")
    if kind not in _VALUE_KINDS:
        raise ParseError(f"unknown valueKind {kind!r}", path=f"{path}/valueKind")
    try:
        key = QualifiedName.parse(key_text)
    except ValueError as exc:
        raise ParseError(str(exc), path=f"{path}/key") from None
    try:
        if kind == "number":
            if not isinstance(raw, (str, int, float)):
                raise ValueError(f"{raw!r} is not a number")
            value = AttributeValue.number(str(raw))
        elif not isinstance(raw, str):
            raise ValueError("value must be a string")
        elif kind == "term":
            value = AttributeValue.term(QualifiedName.parse(raw))
        elif kind == "uri":
            value = AttributeValue.uri(raw)
        else:
            value = AttributeValue.text(raw)
    except (ValueError, ArithmeticError) as exc:
        raise ParseError(str(exc), path=f"{path}/value") from None
    return Attribute(key, value)


def _parse_attrs(obj: dict, path: str) -> tuple:
    raw = _need(obj, "attributes", list, path)
    return tuple(
        _parse_attr(item, f"{path}/attributes/{i}") for i, item in enumerate(raw)
    )


def _parse_time(obj: dict, key: str, path: str):
    raw = _need(obj, key, str, path, optional=True)
    if raw is None:
        return None
    try:
        return parse_timestamp(raw)
    except ValueError as exc:
        raise ParseError(str(exc), path=f"{path}/{key}") from None


def parse_json(text: str) -> Document:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", path=f"line {exc.lineno}, column {exc.colno}"
        ) from None
    if not isinstance(obj, dict):
        raise ParseError("document must be a JSON object", path="/")

    namespaces = _need(obj, "namespaces", dict, "/")
    for prefix, uri in namespaces.items():
        if not isinstance(prefix, str) or not isinstance(uri, str):
            raise ParseError("namespaces must map strings to strings",
                             path=f"/namespaces/{prefix}")

    records: list = []
    for i, item in enumerate(_need(obj, "entities", list, "/")):
        path = f"/entities/{i}"
        if not isinstance(item, dict):
            raise ParseError("entity must be an object", path=path)
        records.append(Entity(_need(item, "id", str, path), _parse_attrs(item, path)))
    for i, item in enumerate(_need(obj, "activities", list, "/")):
        path = f"/activities/{i}"
        if not isinstance(item, dict):
            raise ParseError("activity must be an object", path=path)
        records.append(
            Activity(
                _need(item, "id", str, path),
                _parse_time(item, "start", path),
                _parse_time(item, "end", path),
                _parse_attrs(item, path),
            )
        )
    for i, item in enumerate(_need(obj, "agents", list, "/")):
        path = f"/agents/{i}"
        if not isinstance(item, dict):
            raise ParseError("agent must be an object", path=path)
        records.append(Agent(_need(item, "id", str, path), _parse_attrs(item, path)))
    for i, item in enumerate(_need(obj, "relations", list, "/")):
        records.append(relation_from_obj(item, f"/relations/{i}"))

    return Document(namespaces, tuple(records))


def relation_from_obj(item, path: str = "/") -> Relation:
    if not isinstance(item, dict):
        raise ParseError("relation must be an object", path=path)
    kind = _need(item, "kind", str, path)
    if kind not in RELATION_KINDS:
        raise ParseError(f"unknown relation kind {kind!r}", path=f"{path}/kind")
    return Relation(
        kind=kind,
        subject=_need(item, "subject", str, path),
        object=_need(item, "object", str, path),
        rel_id=_need(item, "relId", str, path, optional=True),
        plan=_need(item, "plan", str, path, optional=True),
        time=_parse_time(item, "time", path),
        attributes=_parse_attrs(item, path),
    )


def record_from_obj(category: str, item: dict, path: str = "/") -> object:
    """Inverse of record_to_obj for one record of a known category."""
    if category == "relation":
        return relation_from_obj(item, path)
    if not isinstance(item, dict):
        raise ParseError(f"{category} must be an object", path=path)
    record_id = _need(item, "id", str, path)
    attrs = _parse_attrs(item, path)
    if category == "entity":
        return Entity(record_id, attrs)
    if category == "agent":
        return Agent(record_id, attrs)
    if category == "activity":
        return Activity(
            record_id,
            _parse_time(item, "start", path),
            _parse_time(item, "end", path),
            attrs,
        )
    raise ValueError(f"unknown record category {category!r}")
