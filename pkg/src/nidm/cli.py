"""Command-line entry point: validate, convert, extract, query, closure,
terms, serve, mediate, probe.

Every subcommand is a thin composition of module operations. Data goes to
stdout, diagnostics to stderr; tables are tab-separated with a header row.
Exit codes: 0 success, 1 domain error (parse/validation failures), 2 usage
error. The NIDM_REGISTRY environment variable supplies the default
terminology registry path.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

from . import json_codec, provn, xml_codec
from .errors import NidmError
from .extractors import (
    extract_spm_batch,
    extract_with_rules,
    load_rules,
    replay_plan,
)
from .mediator import EndpointDescriptor, federated_query, load_federation, probe
from .model import Document, QualifiedName, record_category, validate
from .query import parse_query
from .store import Store
from .terminology import EMPTY_REGISTRY, load_registry

FORMATS = ("provn", "xml", "json")


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _sniff_format(path: str, text: str, forced: Optional[str]) -> str:
    if forced and forced != "auto":
        return forced
    if path.endswith(".provn"):
        return "provn"
    if path.endswith(".xml"):
        return "xml"
    if path.endswith(".json"):
        return "json"
    head = text.lstrip()[:1]
    return "json" if head == "{" else "xml" if head == "<" else "provn"


def _parse_document(text: str, fmt: str) -> Document:
    if fmt == "provn":
        return provn.parse_provn(text)
    if fmt == "xml":
        return xml_codec.parse_xml(text)
    return json_codec.parse_json(text)


def _encode_document(doc: Document, fmt: str, xml_mode: str = "canonical") -> str:
    if fmt == "provn":
        return provn.serialize_provn(doc)
    if fmt == "xml":
        return xml_codec.serialize_xml(doc, xml_mode)
    return json_codec.serialize_json(doc)


def _registry(args) -> "Registry":
    path = getattr(args, "registry", None) or os.environ.get("NIDM_REGISTRY")
    if not path:
        return EMPTY_REGISTRY
    return load_registry(path)


def _load_store(args) -> Store:
    store = Store(_registry(args))
    for entry in args.store:
        tag, _, path_text = entry.partition("=")
        if not path_text:
            path_text, tag = entry, Path(entry).stem
        paths = [Path(path_text)]
        if paths[0].is_dir():
            paths = sorted(paths[0].glob("*.provn")) + \
                sorted(paths[0].glob("*.prov.xml")) + \
                sorted(paths[0].glob("*.prov.json"))
        for path in paths:
            text = path.read_text(encoding="utf-8")
            fmt = _sniff_format(str(path), text, None)
            doc = _parse_document(text, fmt)
            store.ingest(path.stem if len(paths) > 1 else tag, doc)
    return store


def _print_rows(rows) -> None:
    print("source\tid\tcategory")
    for row in rows:
        print(f"{row.source}\t{row.record_id}\t{record_category(row.record)}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    text = _read_input(args.file)
    doc = _parse_document(text, _sniff_format(args.file, text, args.format))
    report = validate(doc)
    if report.ok:
        print(f"{args.file}: valid ({len(doc.records)} records)")
        return 0
    print(str(report), file=sys.stderr)
    return 1


def cmd_convert(args) -> int:
    text = _read_input(args.file)
    doc = _parse_document(text, _sniff_format(args.file, text, args.from_format))
    sys.stdout.write(_encode_document(doc, args.to_format, args.xml_mode))
    return 0


def cmd_extract(args) -> int:
    text = _read_input(args.log)
    if args.kind == "spm":
        doc = extract_spm_batch(text)
    else:
        if not args.rules:
            print("extract rules requires --rules <file>", file=sys.stderr)
            return 2
        result = extract_with_rules(text, load_rules(args.rules))
        doc = result.document
        print(
            f"matched {result.matched_lines} line(s), "
            f"ignored {result.unmatched_lines}",
            file=sys.stderr,
        )
    if args.replay:
        for line in replay_plan(doc):
            print(line)
        return 0
    sys.stdout.write(_encode_document(doc, args.format, args.xml_mode))
    return 0


def cmd_query(args) -> int:
    store = _load_store(args)
    results = store.run_query(parse_query(args.query))
    if args.format == "table":
        _print_rows(results.rows)
        print(f"total\t{results.total}", file=sys.stderr)
        return 0
    namespaces: dict = {}
    for tag in store.source_tags():
        namespaces.update(store.document(tag).namespaces)
    # rows from several sources live in one id space only after prefixing
    from dataclasses import replace

    tags = {row.source for row in results.rows}
    records = tuple(
        row.record if len(tags) <= 1 else replace(row.record, id=f"{row.source}__{row.record_id}")
        for row in results.rows
    )
    doc = Document(namespaces, records)
    fmt = args.format
    sys.stdout.write(
        provn.serialize_provn(doc, check=False)
        if fmt == "provn"
        else _encode_document(doc, fmt, "canonical")
    )
    return 0


def cmd_closure(args) -> int:
    text = _read_input(args.file)
    doc = _parse_document(text, _sniff_format(args.file, text, None))
    from .model import provenance_closure

    closure = provenance_closure(doc, args.entity)
    if args.format == "dot":
        sys.stdout.write(_to_dot(closure))
    else:
        sys.stdout.write(_encode_document(closure, args.format, args.xml_mode))
    return 0


def _to_dot(doc: Document) -> str:
    """Plain-text DOT digraph of a closure (entities as boxes, activities
    as ellipses, agents as houses)."""
    shapes = {"entity": "box", "activity": "ellipse", "agent": "house"}
    lines = ["digraph provenance {"]
    for record in doc.records:
        if record_category(record) == "relation":
            label = record.kind
            lines.append(
                f'  "{record.subject}" -> "{record.object}" [label="{label}"];'
            )
            if record.plan is not None:
                lines.append(
                    f'  "{record.subject}" -> "{record.plan}" [label="plan" style=dashed];'
                )
        else:
            shape = shapes[record_category(record)]
            lines.append(f'  "{record.id}" [shape={shape}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_terms(args) -> int:
    registry = _registry(args)
    if args.action == "resolve":
        if not args.term:
            print("terms resolve requires a prefix:local term", file=sys.stderr)
            return 2
        print(registry.resolve(QualifiedName.parse(args.term)))
        return 0
    print("kind\tterm\tdatatype\tmaps_to\tlabel")
    for term in sorted(registry.definitions, key=str):
        definition = registry.definitions[term]
        print(f"term\t{term}\t{definition.datatype}\t-\t{definition.label}")
    for source in sorted(registry.mappings, key=str):
        print(f"map\t{source}\t-\t{registry.mappings[source]}\t-")
    return 0


def cmd_serve(args) -> int:
    from .api import ApiConfig, serve

    config = ApiConfig(
        bind_address=args.bind,
        default_format=args.default_format,
        max_page_size=args.max_page_size,
        store_paths=tuple(args.store),
        registry_path=args.registry or os.environ.get("NIDM_REGISTRY"),
        allow_external=args.allow_external,
    )
    serve(config)
    return 0


def cmd_mediate(args) -> int:
    endpoints = load_federation(args.federation)
    result = federated_query(
        endpoints, args.query, registry=_registry(args), strict=args.strict
    )
    _print_rows(result.rows)
    for tag in sorted(result.per_source):
        status = result.per_source[tag]
        ms = result.elapsed_ms.get(tag, 0.0)
        detail = f"rows={status.row_count}" if status.ok else f"error={status.error}"
        print(f"{tag}\t{'ok' if status.ok else 'failed'}\t{detail}\t{ms:.0f}ms",
              file=sys.stderr)
        for warning in status.warnings:
            print(f"{tag}\twarning\t{warning}", file=sys.stderr)
    return 0


def cmd_probe(args) -> int:
    if args.url:
        endpoints = [EndpointDescriptor(args.tag or "endpoint", args.url,
                                        args.deadline_ms)]
    elif args.federation:
        endpoints = load_federation(args.federation)
    else:
        print("probe requires --url or --federation", file=sys.stderr)
        return 2
    print("tag\treachable\telapsed_ms\tformats\tcounts")
    all_up = True
    for endpoint in endpoints:
        report = probe(endpoint)
        all_up = all_up and report.reachable
        formats = ",".join(report.formats) or "-"
        counts = (
            ";".join(
                f"{tag}:{sum(c.values())}" for tag, c in sorted(report.counts.items())
            )
            or "-"
        )
        status = "yes" if report.reachable else f"no ({report.error})"
        print(f"{report.tag}\t{status}\t{report.elapsed_ms:.0f}\t{formats}\t{counts}")
    return 0 if all_up else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nidm",
        description="Provenance metadata toolkit: validate, convert, extract, "
        "query, serve, and federate provenance documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a document and report violations")
    p.add_argument("file", help="document path or - for stdin")
    p.add_argument("--format", choices=("auto",) + FORMATS, default="auto")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="convert a document between formats")
    p.add_argument("file", help="document path or - for stdin")
    p.add_argument("--from", dest="from_format", choices=("auto",) + FORMATS,
                   default="auto")
    p.add_argument("--to", dest="to_format", choices=FORMATS, required=True)
    p.add_argument("--xml-mode", choices=("canonical", "spm-legacy"),
                   default="canonical")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("extract", help="turn an analysis log into provenance")
    p.add_argument("kind", choices=("spm", "rules"))
    p.add_argument("log", help="log path or - for stdin")
    p.add_argument("--rules", help="rule file for the rules extractor")
    p.add_argument("--format", choices=FORMATS, default="xml")
    p.add_argument("--xml-mode", choices=("canonical", "spm-legacy"),
                   default="canonical")
    p.add_argument("--replay", action="store_true",
                   help="print the replay plan instead of a document")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("query", help="run a query over document files")
    p.add_argument("query", help="query text, e.g. 'select entity where ...'")
    p.add_argument("--store", action="append", required=True,
                   metavar="TAG=PATH|PATH|DIR",
                   help="document file (repeatable); bare paths tag by stem")
    p.add_argument("--registry", help="terminology registry path")
    p.add_argument("--format", choices=("table",) + FORMATS, default="table")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("closure", help="transitive provenance of an entity")
    p.add_argument("file", help="document path or - for stdin")
    p.add_argument("entity", help="entity id")
    p.add_argument("--format", choices=FORMATS + ("dot",), default="provn")
    p.add_argument("--xml-mode", choices=("canonical", "spm-legacy"),
                   default="canonical")
    p.set_defaults(func=cmd_closure)

    p = sub.add_parser("terms", help="inspect the terminology registry")
    p.add_argument("action", choices=("resolve", "list"))
    p.add_argument("term", nargs="?", help="prefix:local term for resolve")
    p.add_argument("--registry", help="terminology registry path")
    p.set_defaults(func=cmd_terms)

    p = sub.add_parser("serve", help="run the REST metadata service")
    p.add_argument("--bind", default="127.0.0.1:8000", metavar="HOST:PORT")
    p.add_argument("--store", action="append", default=[],
                   metavar="TAG=PATH", help="document to load (repeatable)")
    p.add_argument("--registry", help="terminology registry path")
    p.add_argument("--default-format", choices=FORMATS, default="json")
    p.add_argument("--max-page-size", type=int, default=200)
    p.add_argument("--allow-external", action="store_true",
                   help="permit binding non-loopback addresses")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("mediate", help="fan a query out to federated endpoints")
    p.add_argument("query", help="query text")
    p.add_argument("--federation", required=True, help="federation file path")
    p.add_argument("--registry", help="global terminology registry path")
    p.add_argument("--strict", action="store_true",
                   help="fail when no endpoints are configured")
    p.set_defaults(func=cmd_mediate)

    p = sub.add_parser("probe", help="report endpoint capabilities and liveness")
    p.add_argument("--federation", help="federation file path")
    p.add_argument("--url", help="probe a single endpoint URL")
    p.add_argument("--tag", help="tag for --url probes")
    p.add_argument("--deadline-ms", type=int, default=5000)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NidmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
