from __future__ import annotations

import json
import random

import pytest

from nidm.errors import ParseError
from nidm.json_codec import parse_json, record_to_obj, serialize_json
from nidm.model import build_document
from docgen import random_document


def test_empty_document_schema():
    text = serialize_json(build_document({}, []))
    assert json.loads(text) == {
        "namespaces": {},
        "entities": [],
        "activities": [],
        "agents": [],
        "relations": [],
    }


def test_golden_round_trip(worked_example):
    text = serialize_json(worked_example)
    again = parse_json(text)
    assert again == worked_example
    assert serialize_json(again) == text


def test_agent_mapping(worked_example):
    obj = json.loads(serialize_json(worked_example))
    person = next(a for a in obj["agents"] if a["id"] == "person_1")
    assert person["attributes"] == [
        {"key": "prov:type", "valueKind": "term", "value": "prov:Person"},
        {"key": "prov:label", "valueKind": "text", "value": "Person"},
    ]


def test_relation_mapping(worked_example):
    obj = json.loads(serialize_json(worked_example))
    assoc = obj["relations"][0]
    assert assoc == {
        "kind": "wasAssociatedWith",
        "relId": "wAW_1",
        "subject": "acquisition_1",
        "object": "person_1",
        "plan": "plan_1",
        "time": None,
        "attributes": [
            {
                "key": "prov:role",
                "valueKind": "term",
                "value": "neurolex:NP_Test_Administrator",
            }
        ],
    }


def test_numbers_ride_as_canonical_text(worked_example):
    obj = json.loads(serialize_json(worked_example))
    tr = next(e for e in obj["entities"] if e["id"] == "value_4")
    value_attr = tr["attributes"][-1]
    assert value_attr == {"key": "prov:value", "valueKind": "number", "value": "2"}


def test_serialization_is_deterministic(worked_example):
    assert serialize_json(worked_example) == serialize_json(worked_example)


def test_random_round_trips():
    rng = random.Random(777)
    for _ in range(40):
        doc = random_document(rng, max_records=50)
        text = serialize_json(doc)
        assert parse_json(text) == doc


# ---------------------------------------------------------------------------
# Diagnostics carry JSON-pointer paths
# ---------------------------------------------------------------------------


def test_invalid_json_reports_position():
    with pytest.raises(ParseError) as err:
        parse_json("{nope}")
    assert "line 1" in str(err.value)


def test_missing_top_level_key():
    with pytest.raises(ParseError) as err:
        parse_json('{"namespaces": {}}')
    assert "entities" in str(err.value)


def test_bad_value_kind_path():
    text = json.dumps(
        {
            "namespaces": {},
            "entities": [
                {"id": "e", "attributes": [
                    {"key": "p:k", "valueKind": "blob", "value": "x"}
                ]}
            ],
            "activities": [],
            "agents": [],
            "relations": [],
        }
    )
    with pytest.raises(ParseError) as err:
        parse_json(text)
    assert "/entities/0/attributes/0/valueKind" in str(err.value)


def test_bad_relation_kind_path():
    text = json.dumps(
        {
            "namespaces": {},
            "entities": [],
            "activities": [],
            "agents": [],
            "relations": [
                {"kind": "ate", "subject": "a", "object": "b", "attributes": []}
            ],
        }
    )
    with pytest.raises(ParseError) as err:
        parse_json(text)
    assert "/relations/0/kind" in str(err.value)


def test_record_to_obj_rejects_non_records():
    with pytest.raises(TypeError):
        record_to_obj("not a record")
