"""REST service exposing a Store: record listings, single-record views in
three formats, provenance closures, collection membership, query execution,
and document ingest.

Content negotiation: the ``format`` query parameter wins, then the Accept
header, then the configured default. Error bodies are always JSON of the
shape {code, message, detail}. There is no authentication; the service
refuses to bind to a non-loopback address unless allow_external is set.
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import json_codec, provn, xml_codec
from .errors import (
    BadQueryError,
    BindError,
    LoadError,
    NidmError,
    ParseError,
    UnknownIdError,
)
from .model import Document, QualifiedName, record_category
from .query import AttrFilter, parse_query
from .store import ResultSet, Store
from .terminology import EMPTY_REGISTRY, load_registry

log = logging.getLogger("nidm.api")

FORMATS = ("provn", "xml", "json")
MEDIA_TYPES = {
    "provn": "text/provenance-notation; charset=utf-8",
    "xml": "application/xml",
    "json": "application/json",
}

_CATEGORIES = {
    "entities": "entity",
    "activities": "activity",
    "agents": "agent",
    "relations": "relation",
}


@dataclass
class ApiConfig:
    bind_address: str = "127.0.0.1:8000"
    default_format: str = "json"
    max_page_size: int = 200
    store_paths: tuple = ()  # "tag=path" entries; bare paths use the stem
    registry_path: Optional[str] = None
    allow_external: bool = False

    def __post_init__(self) -> None:
        if self.default_format not in FORMATS:
            raise ValueError(f"unknown default format {self.default_format!r}")
        if self.max_page_size < 1:
            raise ValueError("max_page_size must be >= 1")


def _error_response(exc: NidmError, status: int) -> JSONResponse:
    return JSONResponse(exc.payload(), status_code=status)


_STATUS_BY_CODE = {
    "ParseError": 400,
    "UndeclaredPrefix": 400,
    "BadQuery": 400,
    "NotACollection": 400,
    "UnknownId": 404,
    "InvalidDocument": 422,
    "DuplicateId": 422,
}


def negotiate_format(request: Request, config: ApiConfig) -> str:
    requested = request.query_params.get("format")
    if requested is not None:
        if requested not in FORMATS:
            raise BadQueryError(
                f"unknown format {requested!r}; expected one of {', '.join(FORMATS)}"
            )
        return requested
    accept = request.headers.get("accept", "")
    for token, fmt in (
        ("text/provenance-notation", "provn"),
        ("application/xml", "xml"),
        ("text/xml", "xml"),
        ("application/json", "json"),
    ):
        if token in accept:
            return fmt
    return config.default_format


def encode_document(doc: Document, fmt: str, check: bool = True) -> Response:
    if fmt == "provn":
        body = provn.serialize_provn(doc, check=check)
    elif fmt == "xml":
        body = xml_codec.serialize_xml(doc, check=check)
    else:
        body = json_codec.serialize_json(doc)
    return Response(content=body, media_type=MEDIA_TYPES[fmt])


def decode_document(body: bytes, content_type: str, fmt_param: Optional[str]) -> Document:
    text = body.decode("utf-8")
    fmt = fmt_param
    if fmt is None:
        if "json" in content_type:
            fmt = "json"
        elif "xml" in content_type:
            fmt = "xml"
        elif "provenance-notation" in content_type:
            fmt = "provn"
    if fmt is None:
        head = text.lstrip()[:1]
        fmt = "json" if head == "{" else "xml" if head == "<" else "provn"
    if fmt == "json":
        return json_codec.parse_json(text)
    if fmt == "xml":
        return xml_codec.parse_xml(text)
    return provn.parse_provn(text)


def _page_params(request: Request, config: ApiConfig) -> tuple:
    def positive(name: str, default: int, cap: Optional[int] = None) -> int:
        raw = request.query_params.get(name)
        if raw is None:
            value = default
        else:
            try:
                value = int(raw)
            except ValueError:
                raise BadQueryError(f"{name} must be an integer") from None
        if value < 1:
            raise BadQueryError(f"{name} must be >= 1")
        if cap is not None:
            value = min(value, cap)
        return value

    page = positive("page", 1)
    page_size = positive(
        "pageSize", min(50, config.max_page_size), config.max_page_size
    )
    return page, page_size


def _parse_filter_params(request: Request) -> tuple:
    """type=<qname> (repeatable) and attr.<key>=<value> equality filters."""
    type_filters: list = []
    attr_filters: list = []
    for key, raw in request.query_params.multi_items():
        if key == "type":
            try:
                type_filters.append(QualifiedName.parse(raw))
            except ValueError as exc:
                raise BadQueryError(str(exc)) from None
        elif key.startswith("attr."):
            try:
                attr_key = QualifiedName.parse(key[5:])
            except ValueError as exc:
                raise BadQueryError(str(exc)) from None
            attr_filters.append(AttrFilter(attr_key, "=", _param_value(raw)))
    return tuple(type_filters), tuple(attr_filters)


def _param_value(raw: str):
    from .model import AttributeValue, is_decimal, is_qualified_name, is_uri

    if len(raw) >= 2 and raw[0] == "'" and raw[-1] == "'" and \
            is_qualified_name(raw[1:-1]):
        return AttributeValue.term(QualifiedName.parse(raw[1:-1]))
    if is_decimal(raw):
        return AttributeValue.number(raw)
    if is_uri(raw):
        return AttributeValue.uri(raw)
    if is_qualified_name(raw):
        return AttributeValue.term(QualifiedName.parse(raw))
    return AttributeValue.text(raw)


def _page_rows(results: ResultSet, page: int, page_size: int) -> tuple:
    start = (page - 1) * page_size
    rows = results.rows[start : start + page_size]
    next_page = str(page + 1) if start + page_size < results.total else None
    return rows, next_page


def _row_obj(row) -> dict:
    return {
        "source": row.source,
        "id": row.record_id,
        "category": record_category(row.record),
        "record": json_codec.record_to_obj(row.record),
    }


def _result_response(
    store: Store, results: ResultSet, fmt: str, page: int, page_size: int
) -> Response:
    rows, next_page = _page_rows(results, page, page_size)
    if fmt == "json":
        return JSONResponse(
            {
                "total": results.total,
                "page": page,
                "pageSize": page_size,
                "nextPage": next_page,
                "rows": [_row_obj(row) for row in rows],
            }
        )
    # non-JSON listings return a document of the page's records with the
    # paging data in headers
    namespaces: dict = {}
    records: list = []
    seen: set = set()
    for row in rows:
        namespaces.update(store.document(row.source).namespaces)
        key = (row.source, row.record_id)
        if key not in seen:
            seen.add(key)
            records.append(row.record)
    doc = Document(namespaces, tuple(records))
    response = encode_document(doc, fmt, check=False)
    response.headers["X-Total-Count"] = str(results.total)
    if next_page is not None:
        response.headers["X-Next-Page"] = next_page
    return response


def create_app(store: Store, config: Optional[ApiConfig] = None) -> FastAPI:
    config = config or ApiConfig()
    app = FastAPI(title="nidm metadata service", docs_url=None, redoc_url=None)

    @app.exception_handler(NidmError)
    async def handle_domain_error(request: Request, exc: NidmError):
        return _error_response(exc, _STATUS_BY_CODE.get(exc.code, 400))

    @app.get("/v1/")
    def service_info() -> dict:
        return {
            "service": "nidm",
            "formats": list(FORMATS),
            "defaultFormat": config.default_format,
            "sources": store.counts(),
        }

    @app.get("/v1/entities/{record_id}/provenance")
    def provenance(record_id: str, request: Request) -> Response:
        fmt = negotiate_format(request, config)
        source = request.query_params.get("source")
        closure = store.closure(record_id, source=source)
        return encode_document(closure, fmt)

    @app.get("/v1/collections/{record_id}/members")
    def members(record_id: str, request: Request) -> Response:
        fmt = negotiate_format(request, config)
        page, page_size = _page_params(request, config)
        source = request.query_params.get("source")
        results = store.members(record_id, source=source)
        return _result_response(store, results, fmt, page, page_size)

    @app.get("/v1/{category}")
    def list_records(category: str, request: Request) -> Response:
        if category not in _CATEGORIES:
            raise UnknownIdError(category, f"no such resource /v1/{category}")
        fmt = negotiate_format(request, config)
        page, page_size = _page_params(request, config)
        type_filters, attr_filters = _parse_filter_params(request)
        results = store.list_rows(_CATEGORIES[category], type_filters, attr_filters)
        return _result_response(store, results, fmt, page, page_size)

    @app.get("/v1/{category}/{record_id}")
    def get_record(category: str, record_id: str, request: Request) -> Response:
        if category not in _CATEGORIES:
            raise UnknownIdError(category, f"no such resource /v1/{category}")
        fmt = negotiate_format(request, config)
        source = request.query_params.get("source")
        tag, record = store.get_record(_CATEGORIES[category], record_id, source)
        doc = Document(store.document(tag).namespaces, (record,))
        return encode_document(doc, fmt, check=False)

    @app.post("/v1/query")
    async def run_query(request: Request) -> Response:
        fmt = negotiate_format(request, config)
        page, page_size = _page_params(request, config)
        body = (await request.body()).decode("utf-8")
        text = body
        if request.headers.get("content-type", "").startswith("application/json"):
            import json as _json

            try:
                payload = _json.loads(body)
            except ValueError as exc:
                raise ParseError(f"invalid JSON body: {exc}") from None
            if not isinstance(payload, dict) or not isinstance(
                payload.get("query"), str
            ):
                raise ParseError('JSON query bodies look like {"query": "..."}')
            text = payload["query"]
        query = parse_query(text)
        results = store.run_query(query)
        return _result_response(store, results, fmt, page, page_size)

    @app.post("/v1/documents")
    async def post_document(request: Request) -> JSONResponse:
        source = request.query_params.get("source")
        if not source:
            raise BadQueryError("the source query parameter is required")
        body = await request.body()
        doc = decode_document(
            body,
            request.headers.get("content-type", ""),
            request.query_params.get("format"),
        )
        summary = store.ingest(source, doc)
        log.info("ingested %s: %s records", source, len(doc.records))
        return JSONResponse(summary.as_dict())

    return app


# ---------------------------------------------------------------------------
# Startup
# ---------------------------------------------------------------------------


def _is_loopback(host: str) -> bool:
    if host in ("localhost", ""):
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def split_bind_address(bind_address: str) -> tuple:
    host, _, port_text = bind_address.rpartition(":")
    if not host or not port_text.isdigit():
        raise BindError(f"bind address {bind_address!r} is not host:port")
    return host, int(port_text)


def load_store(config: ApiConfig) -> Store:
    registry = EMPTY_REGISTRY
    if config.registry_path:
        try:
            registry = load_registry(config.registry_path)
        except OSError as exc:
            raise LoadError(str(config.registry_path), str(exc)) from None
    store = Store(registry)
    for entry in config.store_paths:
        tag, _, path_text = entry.partition("=")
        if not path_text:
            path_text, tag = entry, Path(entry).stem
        path = Path(path_text)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise LoadError(str(path), str(exc)) from None
        try:
            doc = _parse_by_suffix(path, text)
        except NidmError as exc:
            raise LoadError(str(path), str(exc)) from None
        store.ingest(tag, doc)
    return store


def _parse_by_suffix(path: Path, text: str) -> Document:
    name = path.name
    if name.endswith(".provn"):
        return provn.parse_provn(text)
    if name.endswith(".xml"):
        return xml_codec.parse_xml(text)
    if name.endswith(".json"):
        return json_codec.parse_json(text)
    head = text.lstrip()[:1]
    if head == "<":
        return xml_codec.parse_xml(text)
    if head == "{":
        return json_codec.parse_json(text)
    return provn.parse_provn(text)


def serve(config: ApiConfig) -> None:
    """Load fixtures, bind, and run until signalled. Raises BindError when
    asked to listen on a non-loopback address without allow_external."""
    import uvicorn

    host, port = split_bind_address(config.bind_address)
    if not config.allow_external and not _is_loopback(host):
        raise BindError(
            f"refusing to bind {host!r}: pass --allow-external for "
            f"non-loopback addresses (the service has no authentication)"
        )
    store = load_store(config)
    app = create_app(store, config)
    log.info("serving on %s:%s (sources: %s)", host, port, store.source_tags())
    uvicorn.run(app, host=host, port=port, log_level="info")
