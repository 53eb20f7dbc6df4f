"""Provenance-XML codec.

One root ``prov:document`` element declares every namespace; activities
carry ``prov:startTime``/``prov:endTime``/attribute children, entities and
agents carry one child element per attribute (``prov:type`` and friends with
an ``xsi:type``), and relations hold reference children with ``prov:ref``
attributes, subject first.

Two writer modes:

* ``canonical`` - ISO timestamps, prefixes exactly as stored. This mode
  round-trips: ``parse_xml(serialize_xml(d, "canonical")) == d`` for any
  document in which each namespace URI is bound to a single prefix (the XML
  data model resolves names to URIs, so a second prefix on the same URI
  cannot survive a round trip).
* ``spm-legacy`` - timestamps in the analysis-log form
  ("07-Jun-2012 14:06:39"), every value typed ``xsd:string``, and any prefix
  bound to the NIDM namespace rewritten to ``ni``, reproducing the format
  emitted by the SPM batch tracer.

The parser accepts both modes; it never resolves dangling references (that
is validate()'s job).
"""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .errors import InvalidDocumentError, ParseError, UndeclaredPrefixError
from .model import (
    Activity,
    Agent,
    Attribute,
    AttributeValue,
    Document,
    Entity,
    NIDM_URI,
    PROV_URI,
    QualifiedName,
    Relation,
    RELATION_KINDS,
    format_iso,
    format_spm,
    parse_timestamp,
    record_category,
    validate,
)

XSI_URI = "http://www.w3.org/2001/XMLSchema-instance"
XSD_URI = "http://www.w3.org/2001/XMLSchema"

CANONICAL = "canonical"
SPM_LEGACY = "spm-legacy"

_XSD_BY_KIND = {
    "text": "xsd:string",
    "number": "xsd:decimal",
    "term": "xsd:QName",
    "uri": "xsd:anyURI",
}

# Subject-first reference children per relation kind; the third slot is the
# wasAssociatedWith plan.
_REF_ELEMENTS = {
    "used": ("prov:activity", "prov:entity"),
    "wasGeneratedBy": ("prov:entity", "prov:activity"),
    "wasDerivedFrom": ("prov:entity", "prov:entity"),
    "wasInformedBy": ("prov:activity", "prov:activity"),
    "wasAssociatedWith": ("prov:activity", "prov:agent"),
    "actedOnBehalfOf": ("prov:agent", "prov:agent"),
    "wasAttributedTo": ("prov:entity", "prov:agent"),
    "hadMember": ("prov:entity", "prov:entity"),
}


class UnknownElementError(ParseError):
    code = "UnknownElement"

    def __init__(self, path: str):
        super().__init__("unrecognized element", path=path)


# ---------------------------------------------------------------------------
# Serializer
# ---------------------------------------------------------------------------


def _prefix_map(doc: Document, mode: str) -> dict:
    if mode == SPM_LEGACY:
        return {
            p: ("ni" if uri == NIDM_URI else p) for p, uri in doc.namespaces.items()
        }
    return {p: p for p in doc.namespaces}


def serialize_xml(doc: Document, mode: str = CANONICAL, check: bool = True) -> str:
    """Serialize a valid Document to provenance XML (deterministic bytes).

    check=False skips validation; the API uses it for single-record views
    whose relation endpoints live elsewhere in the store.
    """
    if mode not in (CANONICAL, SPM_LEGACY):
        raise ValueError(f"unknown XML mode {mode!r}")
    if check:
        report = validate(doc)
        if not report.ok:
            raise InvalidDocumentError(
                f"document has {len(report.violations)} violation(s)", report
            )
    for reserved, uri in (("xsi", XSI_URI), ("xsd", XSD_URI)):
        if doc.namespaces.get(reserved, uri) != uri:
            raise InvalidDocumentError(
                f"prefix {reserved!r} is reserved for {uri}"
            )
    if doc.namespaces.get("prov", PROV_URI) != PROV_URI:
        raise InvalidDocumentError(f"prefix 'prov' is reserved for {PROV_URI}")

    prefixes = _prefix_map(doc, mode)
    fmt_time = format_spm if mode == SPM_LEGACY else format_iso

    def emit_key(qn: QualifiedName) -> str:
        return f"{prefixes.get(qn.prefix, qn.prefix)}:{qn.local}"

    def value_parts(value: AttributeValue) -> tuple:
        text = value.canonical_text()
        if value.kind == "term":
            term = value.value
            text = f"{prefixes.get(term.prefix, term.prefix)}:{term.local}"
        xsd = "xsd:string" if mode == SPM_LEGACY else _XSD_BY_KIND[value.kind]
        if value.kind == "term":
            xsd = "xsd:QName"
        return xsd, text

    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    decls: dict = {}
    for prefix, uri in doc.namespaces.items():
        decls.setdefault(prefixes[prefix], uri)
    decls.setdefault("prov", PROV_URI)
    decls["xsi"] = XSI_URI
    decls["xsd"] = XSD_URI
    xmlns = " ".join(f"xmlns:{p}={quoteattr(u)}" for p, u in decls.items())
    lines.append(f"<prov:document {xmlns}>")

    def esc_text(text: str) -> str:
        # \r must ride as a character reference or XML parsing folds it
        # into \n and the round trip loses it
        return escape(text, {"\r": "&#13;"})

    def attr_line(attr: Attribute, indent: str) -> str:
        key = emit_key(attr.key)
        if attr.key.prefix == "prov" and attr.key.local == "label":
            return f"{indent}<{key}>{esc_text(attr.value.canonical_text())}</{key}>"
        xsd, text = value_parts(attr.value)
        return f'{indent}<{key} xsi:type="{xsd}">{esc_text(text)}</{key}>'

    for record in doc.records:
        if isinstance(record, Relation):
            name = f"prov:{record.kind}"
            head = f"  <{name}"
            if record.rel_id is not None:
                head += f" prov:id={quoteattr(record.rel_id)}"
            lines.append(head + ">")
            subj_el, obj_el = _REF_ELEMENTS[record.kind]
            lines.append(f"    <{subj_el} prov:ref={quoteattr(record.subject)}/>")
            lines.append(f"    <{obj_el} prov:ref={quoteattr(record.object)}/>")
            if record.plan is not None:
                lines.append(f"    <prov:plan prov:ref={quoteattr(record.plan)}/>")
            if record.time is not None:
                lines.append(f"    <prov:time>{fmt_time(record.time)}</prov:time>")
            for attr in record.attributes:
                lines.append(attr_line(attr, "    "))
            lines.append(f"  </{name}>")
            continue

        name = f"prov:{record_category(record)}"
        head = f"  <{name} prov:id={quoteattr(record.id)}"
        children: list = []
        if isinstance(record, Activity):
            if record.start is not None:
                children.append(
                    f"    <prov:startTime>{fmt_time(record.start)}</prov:startTime>"
                )
            if record.end is not None:
                children.append(
                    f"    <prov:endTime>{fmt_time(record.end)}</prov:endTime>"
                )
        for attr in record.attributes:
            children.append(attr_line(attr, "    "))
        if children:
            lines.append(head + ">")
            lines.extend(children)
            lines.append(f"  </{name}>")
        else:
            lines.append(head + "/>")

    lines.append("</prov:document>")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _load_tree(text: str):
    source = io.StringIO(text)
    namespaces: dict = {}
    iterator = ET.iterparse(source, events=("start-ns", "end"))
    try:
        for event, payload in iterator:
            if event == "start-ns":
                prefix, uri = payload
                namespaces.setdefault(prefix, uri)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ParseError(
            f"not well-formed XML: {exc.msg}" if hasattr(exc, "msg") else str(exc),
            path=f"line {line}, column {column}",
        ) from exc
    return iterator.root, namespaces


def _split_tag(tag: str) -> tuple:
    if tag.startswith("{"):
        uri, _, local = tag[1:].partition("}")
        return uri, local
    return "", tag


class _XmlReader:
    def __init__(self, text: str):
        self.root, declared = _load_tree(text)
        self.uri_to_prefix: dict = {}
        self.namespaces: dict = {}
        for prefix, uri in declared.items():
            if not prefix:
                raise ParseError("default (unprefixed) namespaces are not supported")
            if prefix in ("xsi", "xsd"):
                continue
            self.namespaces[prefix] = uri
            self.uri_to_prefix.setdefault(uri, prefix)

    def qualify(self, tag: str, path: str) -> QualifiedName:
        uri, local = _split_tag(tag)
        prefix = self.uri_to_prefix.get(uri)
        if prefix is None:
            raise ParseError(f"element namespace {uri!r} has no prefix", path=path)
        return QualifiedName(prefix, local)

    def term_from_text(self, text: str, path: str) -> AttributeValue:
        prefix, sep, local = text.partition(":")
        if not sep or not prefix or not local:
            raise ParseError(f"{text!r} is not a qualified name", path=path)
        if prefix not in self.namespaces:
            raise UndeclaredPrefixError(prefix)
        return AttributeValue.term(QualifiedName(prefix, local))

    def read_document(self) -> Document:
        uri, local = _split_tag(self.root.tag)
        if uri != PROV_URI or local != "document":
            raise UnknownElementError(f"/{self.root.tag}")
        records: list = []
        for index, element in enumerate(self.root):
            records.append(self.read_record(element, f"/prov:document/*[{index}]"))
        return Document(self.namespaces, tuple(records))

    def read_record(self, element, path: str):
        uri, local = _split_tag(element.tag)
        if uri != PROV_URI:
            raise UnknownElementError(f"{path} ({element.tag})")
        if local in ("entity", "agent", "activity"):
            return self.read_node(element, local, path)
        if local in RELATION_KINDS:
            return self.read_relation(element, local, path)
        raise UnknownElementError(f"{path} (prov:{local})")

    def _record_id(self, element, path: str) -> str:
        record_id = element.get(f"{{{PROV_URI}}}id")
        if record_id is None:
            raise ParseError("missing prov:id attribute", path=path)
        return record_id

    def _attribute(self, child, path: str) -> Attribute:
        key = self.qualify(child.tag, path)
        text = child.text or ""
        xsi_type = child.get(f"{{{XSI_URI}}}type")
        if key.prefix == "prov" and key.local == "label":
            value = AttributeValue.text(text)
        elif xsi_type is None:
            value = AttributeValue.text(text)
        elif xsi_type == "xsd:string":
            value = AttributeValue.text(text)
        elif xsi_type == "xsd:decimal":
            try:
                value = AttributeValue.number(text)
            except ValueError:
                raise ParseError(f"{text!r} is not a decimal", path=path) from None
        elif xsi_type == "xsd:QName":
            value = self.term_from_text(text, path)
        elif xsi_type == "xsd:anyURI":
            try:
                value = AttributeValue.uri(text)
            except ValueError:
                raise ParseError(f"{text!r} is not an absolute URI", path=path) from None
        else:
            raise ParseError(f"unsupported xsi:type {xsi_type!r}", path=path)
        return Attribute(key, value)

    def _time_text(self, child, path: str):
        try:
            return parse_timestamp((child.text or "").strip())
        except ValueError as exc:
            raise ParseError(str(exc), path=path) from None

    def read_node(self, element, category: str, path: str):
        record_id = self._record_id(element, path)
        start = end = None
        attributes: list = []
        for child in element:
            child_uri, child_local = _split_tag(child.tag)
            child_path = f"{path}/{child_local}"
            if category == "activity" and child_uri == PROV_URI and \
                    child_local in ("startTime", "endTime"):
                when = self._time_text(child, child_path)
                if child_local == "startTime":
                    start = when
                else:
                    end = when
                continue
            attributes.append(self._attribute(child, child_path))
        if category == "entity":
            return Entity(record_id, tuple(attributes))
        if category == "agent":
            return Agent(record_id, tuple(attributes))
        return Activity(record_id, start, end, tuple(attributes))

    def read_relation(self, element, kind: str, path: str) -> Relation:
        rel_id = element.get(f"{{{PROV_URI}}}id")
        refs: list = []
        time = None
        attributes: list = []
        for child in element:
            child_uri, child_local = _split_tag(child.tag)
            child_path = f"{path}/{child_local}"
            ref = child.get(f"{{{PROV_URI}}}ref")
            if ref is not None:
                refs.append((child_local, ref))
                continue
            if child_uri == PROV_URI and child_local == "time":
                time = self._time_text(child, child_path)
                continue
            attributes.append(self._attribute(child, child_path))
        plan = None
        if kind == "wasAssociatedWith" and len(refs) == 3 and refs[2][0] == "plan":
            plan = refs[2][1]
            refs = refs[:2]
        if len(refs) != 2:
            raise ParseError(
                f"{kind} needs exactly two prov:ref children (plus an optional plan)",
                path=path,
            )
        return Relation(
            kind=kind,
            subject=refs[0][1],
            object=refs[1][1],
            rel_id=rel_id,
            plan=plan,
            time=time,
            attributes=tuple(attributes),
        )


def parse_xml(text: str) -> Document:
    """Parse provenance XML (either writer mode) into a Document."""
    return _XmlReader(text).read_document()
