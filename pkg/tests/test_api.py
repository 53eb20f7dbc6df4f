from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

import nidm
from nidm.api import ApiConfig, create_app, load_store, serve, split_bind_address
from nidm.errors import BindError
from nidm.model import record_category
from conftest import FIXTURES, fixture_text


@pytest.fixture()
def client(dual_store):
    app = create_app(dual_store, ApiConfig())
    return TestClient(app, raise_server_exceptions=False)


def test_service_info(client):
    payload = client.get("/v1/").json()
    assert payload["formats"] == ["provn", "xml", "json"]
    assert payload["sources"]["hid"]["entities"] == 5
    assert payload["sources"]["xnat"]["agents"] == 2


def test_list_agents_by_type(client):
    payload = client.get("/v1/agents", params={"type": "prov:Person"}).json()
    assert payload["total"] == 4
    ids = [row["id"] for row in payload["rows"]]
    assert ids == ["person_1", "person_2", "person_3", "person_4"]


def test_list_t1_entities(client):
    payload = client.get("/v1/entities", params={"type": "neurolex:T1"}).json()
    assert payload["total"] == 4
    assert [row["id"] for row in payload["rows"]] == [
        "collection_1", "value_3", "collection_2", "value_5",
    ]


def test_attr_filter_param(client):
    payload = client.get(
        "/v1/entities", params={"attr.prov:value": "'neurolex:right_handed'"}
    ).json()
    assert [row["id"] for row in payload["rows"]] == ["value_1", "value_2"]


def test_pagination_stable(client):
    pages = []
    for _ in range(2):  # traverse twice; order must repeat
        ids = []
        page = 1
        while True:
            payload = client.get(
                "/v1/entities",
                params={"type": "neurolex:T1", "page": page, "pageSize": 1},
            ).json()
            assert payload["total"] == 4
            ids.extend(row["id"] for row in payload["rows"])
            if payload["nextPage"] is None:
                break
            page = int(payload["nextPage"])
        pages.append(ids)
    assert pages[0] == pages[1]
    assert len(pages[0]) == 4


def test_get_record_provn(client):
    response = client.get("/v1/entities/plan_1", params={"format": "provn"})
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/provenance-notation")
    doc = nidm.parse_provn(response.text)
    assert doc.get("plan_1") is not None
    assert "entity(plan_1, [prov:type='prov:Plan'" in response.text


def test_get_record_not_found(client):
    response = client.get("/v1/entities/nonexistent")
    assert response.status_code == 404
    payload = response.json()
    assert payload["code"] == "UnknownId"
    assert "nonexistent" in payload["message"]


def test_unknown_category(client):
    assert client.get("/v1/things").status_code == 404


def test_unknown_format(client):
    response = client.get("/v1/entities", params={"format": "rdf"})
    assert response.status_code == 400


def test_accept_header_negotiation(client):
    response = client.get(
        "/v1/entities/plan_1", headers={"accept": "application/xml"}
    )
    assert response.headers["content-type"].startswith("application/xml")
    doc = nidm.parse_xml(response.text)
    assert doc.get("plan_1") is not None


def test_format_agreement_across_codecs(client, dual_store):
    """provn, xml, and json views of every golden record parse back to the
    same record."""
    for tag in dual_store.source_tags():
        doc = dual_store.document(tag)
        for record in doc.records:
            category = record_category(record)
            if category == "relation":
                continue
            plural = {"entity": "entities", "activity": "activities",
                      "agent": "agents"}[category]
            views = {}
            for fmt in ("provn", "xml", "json"):
                response = client.get(
                    f"/v1/{plural}/{record.id}",
                    params={"format": fmt, "source": tag},
                )
                assert response.status_code == 200, (tag, record.id, fmt)
                parsed = {
                    "provn": nidm.parse_provn,
                    "xml": nidm.parse_xml,
                    "json": nidm.parse_json,
                }[fmt](response.text)
                views[fmt] = parsed.get(record.id)
            assert views["provn"] == views["xml"] == views["json"] == record


def test_relations_listing_and_get(client):
    payload = client.get("/v1/relations", params={"source": "hid"}).json()
    assert payload["total"] == 16  # both sources
    first = payload["rows"][0]
    response = client.get(
        f"/v1/relations/{first['id']}",
        params={"format": "provn", "source": first["source"]},
    )
    assert response.status_code == 200
    doc = nidm.parse_provn(response.text)
    assert len(doc.relations) == 1


def test_provenance_endpoint_matches_local(client, dual_store):
    response = client.get(
        "/v1/entities/collection_1/provenance", params={"format": "provn"}
    )
    assert response.status_code == 200
    remote = nidm.parse_provn(response.text)
    local = dual_store.closure("collection_1")
    assert remote == local


def test_members_endpoint(client):
    payload = client.get("/v1/collections/collection_2/members").json()
    assert [row["id"] for row in payload["rows"]] == ["value_5", "value_6"]


def test_members_of_non_collection(client):
    assert client.get("/v1/collections/value_1/members").status_code == 400


def test_post_query_matches_local(client, dual_store):
    text = (
        "select entity where type=neurolex:Handedness "
        "and attr[prov:value]='neurolex:right_handed'"
    )
    response = client.post("/v1/query", content=text)
    assert response.status_code == 200
    payload = response.json()
    local = dual_store.run_query(nidm.parse_query(text))
    assert [(r["source"], r["id"]) for r in payload["rows"]] == [
        (row.source, row.record_id) for row in local.rows
    ]
    # JSON body form
    response = client.post("/v1/query", json={"query": text})
    assert response.json()["rows"] == payload["rows"]


def test_post_query_putamen_parity(derived_reg, derived_fixture):
    """The flagship derived-data query returns identical rows through the
    API and the local engine."""
    from nidm.query import query_to_text
    from nidm.store import Store
    from corpus import putamen_query

    docs, planted = derived_fixture
    store = Store(derived_reg)
    for tag, doc in docs.items():
        store.ingest(tag, doc)
    local = store.run_query(putamen_query())
    api_client = TestClient(create_app(store, ApiConfig(max_page_size=10_000)))
    payload = api_client.post(
        "/v1/query",
        content=query_to_text(putamen_query()),
        params={"pageSize": 10_000},
    ).json()
    assert [(r["source"], r["id"]) for r in payload["rows"]] == [
        (row.source, row.record_id) for row in local.rows
    ]
    assert set((r["source"], r["id"]) for r in payload["rows"]) == planted["putamen"]


def test_post_query_empty_match(client):
    payload = client.post(
        "/v1/query", content="select agent where type=neurolex:T1"
    ).json()
    assert payload["rows"] == [] and payload["total"] == 0


def test_post_query_malformed(client):
    response = client.post("/v1/query", content="select banana where")
    assert response.status_code == 400
    payload = response.json()
    assert payload["code"] == "ParseError"
    assert payload["detail"]["expected"]


def test_post_document_then_query(client, registry):
    body = fixture_text("worked-example-hid.provn")
    response = client.post(
        "/v1/documents", params={"source": "hid2"}, content=body
    )
    assert response.status_code == 200
    assert response.json()["entities"] == 5
    payload = client.post(
        "/v1/query",
        content="select entity where type=neurolex:Handedness "
        "and attr[prov:value]='neurolex:right_handed'",
    ).json()
    sources = [row["source"] for row in payload["rows"]]
    assert sources == ["hid", "hid2", "xnat"]


def test_post_document_idempotent(client):
    body = fixture_text("worked-example-hid.provn")
    for _ in range(2):
        client.post("/v1/documents", params={"source": "hid"}, content=body)
    payload = client.get("/v1/entities", params={"type": "neurolex:T1"}).json()
    assert payload["total"] == 4


def test_post_empty_document(client):
    response = client.post(
        "/v1/documents",
        params={"source": "void", "format": "json"},
        content=nidm.serialize_json(nidm.build_document({}, [])),
    )
    assert response.json()["entities"] == 0


def test_post_document_with_dangling_ref(client):
    body = (
        "prefix prov <http://www.w3.org/ns/prov#>\n"
        "entity(value_1, [])\n"
        "wasGeneratedBy(value_1, missing_act, 2001-01-01T00:00:00)\n"
    )
    response = client.post("/v1/documents", params={"source": "bad"}, content=body)
    assert response.status_code == 422
    payload = response.json()
    assert payload["code"] == "InvalidDocument"
    assert payload["detail"][0]["code"] == "DanglingRef"


def test_post_document_requires_source(client):
    assert client.post("/v1/documents", content="").status_code == 400


def test_post_document_xml_body(client, worked_example):
    response = client.post(
        "/v1/documents",
        params={"source": "golden"},
        content=nidm.serialize_xml(worked_example),
        headers={"content-type": "application/xml"},
    )
    assert response.json()["entities"] == 10


# ---------------------------------------------------------------------------
# Startup guards
# ---------------------------------------------------------------------------


def test_refuses_external_bind(tmp_path):
    config = ApiConfig(bind_address="0.0.0.0:8123")
    with pytest.raises(BindError):
        serve(config)


def test_split_bind_address():
    assert split_bind_address("127.0.0.1:81") == ("127.0.0.1", 81)
    with pytest.raises(BindError):
        split_bind_address("no-port")


def test_load_store_from_paths(registry):
    config = ApiConfig(
        store_paths=(
            f"hid={FIXTURES / 'worked-example-hid.provn'}",
            str(FIXTURES / "worked-example-xnat.provn"),
        ),
        registry_path=str(FIXTURES / "registry.txt"),
    )
    store = load_store(config)
    assert store.source_tags() == ["hid", "worked-example-xnat"]


def test_load_store_missing_file():
    from nidm.errors import LoadError

    config = ApiConfig(store_paths=("nope=/does/not/exist.provn",))
    with pytest.raises(LoadError):
        load_store(config)
