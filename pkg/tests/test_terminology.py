from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nidm.errors import (
    CycleDetectedError,
    ParseError,
    UndeclaredPrefixError,
    UnknownCanonicalError,
)
from nidm.model import (
    Attribute,
    AttributeValue,
    Entity,
    QualifiedName,
    build_document,
    validate,
)
from nidm.terminology import harmonize, parse_registry

qn = QualifiedName.parse

HEADER = "ns a http://e/a#\nns b http://e/b#\nns c http://e/c#\n"


def deftext(term: str) -> str:
    return f'term {term} string "label" "definition"\n'


def test_shipped_registry(registry):
    assert len(registry.mappings) >= 8
    assert len(registry.definitions) >= 3
    tr = registry.definitions[qn("neurolex:Repetition_Time")]
    assert tr.datatype == "decimal"
    handed = registry.definitions[qn("neurolex:Handedness")]
    assert handed.source_url == "http://neurolex.org/wiki/Handedness"


def test_resolve_fixture_pairs(registry):
    assert registry.resolve(qn("hid:Edinburgh_Handedness")) == qn("neurolex:Handedness")
    assert registry.resolve(qn("xnat:mprage")) == qn("neurolex:T1")
    assert registry.resolve(qn("xnata:mprage")) == qn("neurolex:T1")
    assert registry.resolve(qn("unknown:thing")) == qn("unknown:thing")


def test_resolve_idempotent(registry):
    for source in registry.mappings:
        once = registry.resolve(source)
        assert registry.resolve(once) == once


def test_empty_registry_text():
    registry = parse_registry("")
    assert not registry.namespaces and not registry.mappings


def test_mapping_cycle_detected():
    text = HEADER + deftext("a:x") + deftext("b:y") + "map a:x b:y\nmap b:y a:x\n"
    with pytest.raises(CycleDetectedError):
        parse_registry(text)


def test_unknown_canonical():
    text = HEADER + "map a:x b:undefined\n"
    with pytest.raises(UnknownCanonicalError):
        parse_registry(text)


def test_chain_resolves_to_fixpoint():
    text = (
        HEADER
        + deftext("b:mid")
        + deftext("c:final")
        + "map a:start b:mid\nmap b:mid c:final\n"
    )
    registry = parse_registry(text)
    assert registry.resolve(qn("a:start")) == qn("c:final")


def test_duplicate_definition_rejected():
    with pytest.raises(ParseError):
        parse_registry(HEADER + deftext("a:x") + deftext("a:x"))


def test_conflicting_mapping_rejected():
    text = HEADER + deftext("b:y") + deftext("c:z") + "map a:x b:y\nmap a:x c:z\n"
    with pytest.raises(ParseError):
        parse_registry(text)


def test_bad_datatype_rejected():
    with pytest.raises(ParseError):
        parse_registry(HEADER + 'term a:x blob "l" "d"\n')


def test_undeclared_prefix_rejected():
    with pytest.raises(UndeclaredPrefixError):
        parse_registry('term nope:x string "l" "d"\n')


def test_overlay_merge_wins():
    base = parse_registry(HEADER + deftext("b:y") + "map a:x b:y\n")
    overlay = parse_registry(HEADER + deftext("c:z") + "map a:x c:z\n")
    merged = base.merged(overlay)
    assert merged.resolve(qn("a:x")) == qn("c:z")


# ---------------------------------------------------------------------------
# Harmonization
# ---------------------------------------------------------------------------


def entity_with_types(*types: str) -> Entity:
    return Entity(
        "e_1",
        tuple(
            Attribute(QualifiedName("prov", "type"), AttributeValue.term(t))
            for t in types
        ),
    )


NSMAP = {
    "prov": "http://www.w3.org/ns/prov#",
    "hid": "http://www.birncommunity.org/hid#",
    "neurolex": "http://neurolex.org/wiki/",
}


def test_harmonize_appends_canonical(registry):
    doc = build_document(NSMAP, [entity_with_types("hid:spgr")])
    out = harmonize(registry, doc)
    types = [str(t) for t in out.get("e_1").type_terms()]
    assert types == ["hid:spgr", "neurolex:T1"]
    assert validate(out).ok


def test_harmonize_leaves_complete_records_alone(registry):
    doc = build_document(
        NSMAP, [entity_with_types("hid:spgr", "neurolex:T1")]
    )
    out = harmonize(registry, doc)
    assert out == doc


def test_harmonize_empty_document(registry):
    doc = build_document({}, [])
    assert harmonize(registry, doc) == doc


def test_harmonize_idempotent(registry, worked_example):
    once = harmonize(registry, worked_example)
    assert harmonize(registry, once) == once


def test_harmonize_preserves_existing_attributes(registry, worked_example):
    out = harmonize(registry, worked_example)
    assert len(out.records) == len(worked_example.records)
    for before, after in zip(worked_example.records, out.records):
        assert after.attributes[: len(before.attributes)] == before.attributes


def test_harmonize_declares_needed_namespace(registry):
    nsmap = {k: v for k, v in NSMAP.items() if k != "neurolex"}
    doc = build_document(nsmap, [entity_with_types("hid:spgr")])
    out = harmonize(registry, doc)
    assert out.namespaces["neurolex"] == "http://neurolex.org/wiki/"
    assert validate(out).ok


def test_harmonize_roles_flag(registry):
    role_attr = Attribute(
        QualifiedName("prov", "role"), AttributeValue.term("hid:tr")
    )
    doc = build_document(NSMAP, [Entity("e_1", (role_attr,))])
    assert harmonize(registry, doc) == doc  # default leaves roles alone
    out = harmonize(registry, doc, include_roles=True)
    roles = out.get("e_1").attr_values(QualifiedName("prov", "role"))
    assert [str(v.value) for v in roles] == ["hid:tr", "neurolex:Repetition_Time"]


# ---------------------------------------------------------------------------
# Properties over generated mapping chains
# ---------------------------------------------------------------------------


@st.composite
def chained_registries(draw):
    """Random acyclic mapping forests over one namespace: each of n terms
    may map to a strictly higher-numbered term."""
    count = draw(st.integers(min_value=2, max_value=24))
    lines = ["ns t http://example.org/terms#"]
    for i in range(count):
        lines.append(f'term t:x{i} string "x{i}" "generated"')
    for i in range(count - 1):
        if draw(st.booleans()):
            target = draw(st.integers(min_value=i + 1, max_value=count - 1))
            lines.append(f"map t:x{i} t:x{target}")
    return parse_registry("\n".join(lines)), count


@settings(max_examples=80, deadline=None)
@given(chained_registries())
def test_resolve_is_idempotent_and_terminal(reg_and_count):
    registry, count = reg_and_count
    for i in range(count):
        term = qn(f"t:x{i}")
        resolved = registry.resolve(term)
        assert registry.resolve(resolved) == resolved
        assert resolved not in registry.mappings  # fixpoints are unmapped


@settings(max_examples=40, deadline=None)
@given(chained_registries())
def test_harmonize_is_idempotent_on_typed_records(reg_and_count):
    registry, count = reg_and_count
    nsmap = {"prov": "http://www.w3.org/ns/prov#", "t": "http://example.org/terms#"}
    doc = build_document(
        nsmap,
        [
            Entity(
                f"e_{i}",
                (Attribute(QualifiedName("prov", "type"),
                           AttributeValue.term(f"t:x{i}")),),
            )
            for i in range(min(count, 5))
        ],
    )
    once = harmonize(registry, doc)
    assert harmonize(registry, once) == once
    assert len(once.records) == len(doc.records)
    assert validate(once).ok
