from __future__ import annotations

import random
import xml.etree.ElementTree as ET

import pytest

from nidm.errors import InvalidDocumentError, ParseError
from nidm.model import (
    Activity,
    Attribute,
    AttributeValue,
    Entity,
    QualifiedName,
    Relation,
    build_document,
    parse_timestamp,
    validate,
)
from nidm.xml_codec import UnknownElementError, parse_xml, serialize_xml
from docgen import random_document

PROV = {"prov": "http://www.w3.org/ns/prov#"}
NIDM = {"prov": "http://www.w3.org/ns/prov#", "nidm": "http://nidm.nidash.org/"}


def normalized(element):
    """Recursive (tag, attrib, text, children) shape with whitespace-only
    text dropped, for whitespace-insensitive comparisons."""
    text = (element.text or "").strip() or None
    return (
        element.tag,
        dict(element.attrib),
        text,
        [normalized(child) for child in element],
    )


def wrap(snippet: str) -> str:
    return (
        '<prov:document xmlns:prov="http://www.w3.org/ns/prov#" '
        'xmlns:ni="http://nidm.nidash.org/" '
        'xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" '
        'xmlns:xsd="http://www.w3.org/2001/XMLSchema">'
        f"{snippet}</prov:document>"
    )


# The three reference blocks the SPM batch tracer emits for a one-step
# slice-timing run; the legacy writer must reproduce them exactly.
ACTIVITY_BLOCK = """
<prov:activity prov:id="a_1">
  <prov:startTime>07-Jun-2012 14:06:39</prov:startTime>
  <prov:endTime>07-Jun-2012 14:09:00</prov:endTime>
  <prov:label>matlabbatch{2}.spm.temporal.st</prov:label>
</prov:activity>
"""

ENTITY_BLOCK = """
<prov:entity prov:id="e_30">
  <prov:type xsi:type="xsd:string">parameter</prov:type>
  <ni:name xsi:type="xsd:string">par: tr</ni:name>
  <ni:value xsi:type="xsd:string">2</ni:value>
</prov:entity>
"""

USED_BLOCK = """
<prov:used prov:id="u_20">
  <prov:activity prov:ref="a_1"/>
  <prov:entity prov:ref="e_30"/>
</prov:used>
"""


def spm_reference_document():
    return build_document(
        NIDM,
        [
            Activity(
                "a_1",
                parse_timestamp("07-Jun-2012 14:06:39"),
                parse_timestamp("07-Jun-2012 14:09:00"),
                (
                    Attribute(
                        QualifiedName("prov", "label"),
                        AttributeValue.text("matlabbatch{2}.spm.temporal.st"),
                    ),
                ),
            ),
            Entity(
                "e_30",
                (
                    Attribute(
                        QualifiedName("prov", "type"), AttributeValue.text("parameter")
                    ),
                    Attribute(
                        QualifiedName("nidm", "name"), AttributeValue.text("par: tr")
                    ),
                    Attribute(
                        QualifiedName("nidm", "value"), AttributeValue.number("2")
                    ),
                ),
            ),
            Relation("used", "a_1", "e_30", rel_id="u_20"),
        ],
    )


def test_spm_legacy_blocks_match_reference():
    text = serialize_xml(spm_reference_document(), "spm-legacy")
    got = ET.fromstring(text)
    want = ET.fromstring(wrap(ACTIVITY_BLOCK + ENTITY_BLOCK + USED_BLOCK))
    assert normalized(got) == normalized(want)


def test_spm_legacy_uses_ni_prefix_and_log_timestamps():
    text = serialize_xml(spm_reference_document(), "spm-legacy")
    assert 'xmlns:ni="http://nidm.nidash.org/"' in text
    assert "<ni:name" in text and "<ni:value" in text
    assert "07-Jun-2012 14:06:39" in text
    assert "xsd:decimal" not in text  # legacy types everything as strings


def test_canonical_uses_stored_prefix_and_iso_timestamps():
    text = serialize_xml(spm_reference_document(), "canonical")
    assert "<nidm:name" in text
    assert "2012-06-07T14:06:39" in text
    assert 'xsi:type="xsd:decimal">2<' in text


def test_parse_reference_blocks():
    doc = parse_xml(wrap(ACTIVITY_BLOCK + ENTITY_BLOCK + USED_BLOCK))
    assert len(doc.activities) == 1
    assert len(doc.entities) == 1
    assert len(doc.relations) == 1
    activity = doc.activities[0]
    assert activity.id == "a_1"
    assert activity.start == parse_timestamp("07-Jun-2012 14:06:39")
    used = doc.relations[0]
    assert used.kind == "used" and used.rel_id == "u_20"
    assert used.subject == "a_1" and used.object == "e_30"
    assert validate(doc).ok


def test_parse_root_only_is_empty():
    doc = parse_xml(wrap(""))
    assert len(doc.records) == 0


def test_parse_dangling_ref_then_validate():
    doc = parse_xml(wrap(USED_BLOCK))
    assert len(doc.relations) == 1
    codes = {v.code for v in validate(doc).violations}
    assert codes == {"DanglingRef"}


def test_unknown_element_error():
    with pytest.raises(UnknownElementError) as err:
        parse_xml(wrap("<prov:banana/>"))
    assert "banana" in str(err.value)


def test_unknown_xsi_type_rejected():
    snippet = '<prov:entity prov:id="e"><prov:type xsi:type="xsd:float">2</prov:type></prov:entity>'
    with pytest.raises(ParseError):
        parse_xml(wrap(snippet))


def test_not_well_formed_is_parse_error():
    with pytest.raises(ParseError):
        parse_xml("<prov:document")


def test_missing_id_is_parse_error():
    with pytest.raises(ParseError) as err:
        parse_xml(wrap("<prov:entity/>"))
    assert "prov:id" in str(err.value)


def test_serialize_rejects_invalid_document():
    doc = build_document(PROV, [Relation("used", "a", "e")])
    with pytest.raises(InvalidDocumentError):
        serialize_xml(doc)


def test_association_with_plan_round_trips(worked_example):
    text = serialize_xml(worked_example)
    again = parse_xml(text)
    assert again == worked_example
    assert serialize_xml(again) == text


def test_random_round_trips():
    rng = random.Random(4242)
    for _ in range(40):
        doc = random_document(rng, max_records=50)
        text = serialize_xml(doc, "canonical")
        again = parse_xml(text)
        assert again == doc
        assert serialize_xml(again, "canonical") == text


def test_term_values_round_trip_as_qnames():
    doc = build_document(
        {**PROV, "neurolex": "http://neurolex.org/wiki/"},
        [
            Entity(
                "e_1",
                (
                    Attribute(
                        QualifiedName("prov", "type"),
                        AttributeValue.term("neurolex:T1"),
                    ),
                ),
            )
        ],
    )
    text = serialize_xml(doc)
    assert 'xsi:type="xsd:QName">neurolex:T1<' in text
    assert parse_xml(text) == doc
