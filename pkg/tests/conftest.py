from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import nidm

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def worked_example() -> nidm.Document:
    return nidm.parse_provn(fixture_text("worked-example.provn"))


@pytest.fixture(scope="session")
def hid_half() -> nidm.Document:
    return nidm.parse_provn(fixture_text("worked-example-hid.provn"))


@pytest.fixture(scope="session")
def xnat_half() -> nidm.Document:
    return nidm.parse_provn(fixture_text("worked-example-xnat.provn"))


@pytest.fixture(scope="session")
def registry() -> nidm.Registry:
    return nidm.load_registry(FIXTURES / "registry.txt")


@pytest.fixture()
def dual_store(registry, hid_half, xnat_half) -> nidm.Store:
    store = nidm.Store(registry)
    store.ingest("hid", hid_half)
    store.ingest("xnat", xnat_half)
    return store


@pytest.fixture(scope="session")
def derived_fixture():
    from corpus import build_derived_fixture

    return build_derived_fixture()


@pytest.fixture(scope="session")
def derived_reg():
    from corpus import derived_registry

    return derived_registry()
