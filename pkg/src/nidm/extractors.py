"""Log-to-provenance extractors.

Two front ends produce the same record shapes:

* extract_spm_batch - fixed grammar for the synthetic SPM batch log
  (docs/spm-log-format.md): one BEGIN/END pair per batch step with PARAM,
  IN, and OUT lines between them, plus optional COUNTER directives that
  seed the deterministic id counters (a step excerpted from a larger batch
  keeps its original numbering).
* extract_with_rules - first-matching-rule-wins line scanner driven by a
  RuleSet, for FSL/FreeSurfer-style logs.

Per step one activity is emitted; parameters and input files become
entities attached with used relations, output files become entities
attached with wasGeneratedBy relations. File entities are deduplicated by
path, so a step consuming an earlier step's output shares its entity and
the provenance chain is connected. Ids are assigned in emission order
(a_1, e_1, u_1, g_1, ...), making extraction a pure function of the log
bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import (
    ParseError,
    RuleError,
    SourceSpan,
    UnbalancedStepError,
)
from .model import (
    Activity,
    Attribute,
    AttributeValue,
    Document,
    Entity,
    NIDM_URI,
    PROV_LABEL,
    PROV_TYPE,
    PROV_URI,
    QualifiedName,
    Relation,
    parse_timestamp,
)

EMIT_KINDS = (
    "activity-start",
    "activity-end",
    "parameter",
    "input-file",
    "output-file",
)

# named captures each emit kind requires in its line pattern
_REQUIRED_CAPTURES = {
    "activity-start": ("label",),
    "activity-end": (),
    "parameter": ("name", "value"),
    "input-file": ("path",),
    "output-file": ("path",),
}

SPM_NAMESPACES = {"prov": PROV_URI, "nidm": NIDM_URI}

NIDM_NAME = QualifiedName("nidm", "name")
NIDM_VALUE = QualifiedName("nidm", "value")


@dataclass(frozen=True)
class ExtractionRule:
    line_pattern: str
    emit: str
    type_tag: QualifiedName
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.emit not in EMIT_KINDS:
            raise RuleError(f"unknown emit kind {self.emit!r}")
        try:
            compiled = re.compile(self.line_pattern)
        except re.error as exc:
            raise RuleError(f"bad pattern /{self.line_pattern}/: {exc}") from None
        missing = [
            name
            for name in _REQUIRED_CAPTURES[self.emit]
            if name not in compiled.groupindex
        ]
        if missing:
            raise RuleError(
                f"{self.emit} pattern lacks named capture(s): {', '.join(missing)}"
            )
        object.__setattr__(self, "regex", compiled)


@dataclass(frozen=True)
class RuleSet:
    name: str
    rules: tuple
    namespaces: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        if not any(rule.emit == "activity-start" for rule in self.rules):
            raise RuleError("a rule set needs at least one activity-start rule")
        for index, rule in enumerate(self.rules):
            if rule.type_tag.prefix not in self.namespaces:
                raise RuleError(
                    f"type tag {rule.type_tag} uses an undeclared prefix",
                    rule_index=index,
                )


def load_rules(path: Union[str, Path]) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"), Path(path).stem)


def parse_rules(text: str, name: str = "rules") -> RuleSet:
    """Rule files are line oriented: ``ns <prefix> <uri>`` and
    ``rule <emit-kind> <type-qname> /<regex>/`` with ``#`` comments."""
    namespaces: dict = {}
    rules: list = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        span = SourceSpan(line_no, 1)
        if line.startswith("ns "):
            fields = line.split()
            if len(fields) != 3:
                raise ParseError("ns takes <prefix> <uri>", span=span)
            namespaces[fields[1]] = fields[2]
            continue
        if not line.startswith("rule "):
            raise ParseError(
                "unknown rule-file line", span=span,
                expected="ns or rule", found=line.split()[0],
            )
        match = re.match(r"rule\s+(\S+)\s+(\S+)\s+/(.*)/\s*$", line)
        if match is None:
            raise ParseError(
                "rule takes <emit-kind> <type-qname> /<regex>/", span=span
            )
        emit, tag_text, pattern = match.groups()
        try:
            tag = QualifiedName.parse(tag_text)
            rules.append(ExtractionRule(pattern, emit, tag))
        except (ValueError, RuleError) as exc:
            raise ParseError(str(exc), span=span) from None
    return RuleSet(name, tuple(rules), namespaces)


@dataclass(frozen=True)
class ExtractionResult:
    document: Document
    matched_lines: int
    unmatched_lines: int


class _Builder:
    """Shared record-emission state for both extractor front ends."""

    def __init__(self, namespaces: dict):
        self.namespaces = dict(namespaces)
        self.records: list = []
        self.counters = {"activity": 1, "entity": 1, "used": 1, "generated": 1}
        self.files: dict = {}  # path -> entity id
        self.current: Optional[dict] = None

    def next_id(self, kind: str, prefix: str) -> str:
        value = self.counters[kind]
        self.counters[kind] = value + 1
        return f"{prefix}{value}"

    def start_activity(self, label: str, start, type_tag=None) -> None:
        attrs = [Attribute(PROV_LABEL, AttributeValue.text(label))]
        if type_tag is not None:
            attrs.insert(0, Attribute(PROV_TYPE, AttributeValue.term(type_tag)))
        self.current = {
            "id": self.next_id("activity", "a_"),
            "label": label,
            "start": start,
            "end": None,
            "attrs": tuple(attrs),
            "index": len(self.records),
        }
        self.records.append(None)  # placeholder keeps emission order

    def end_activity(self, end) -> None:
        step = self.current
        self.records[step["index"]] = Activity(
            step["id"], step["start"], end, step["attrs"]
        )
        self.current = None

    def finish_open_activity(self) -> None:
        if self.current is not None:
            self.end_activity(None)

    def parameter(self, name: str, value: str, type_tag=None) -> None:
        entity_id = self.next_id("entity", "e_")
        type_attr = (
            Attribute(PROV_TYPE, AttributeValue.term(type_tag))
            if type_tag is not None
            else Attribute(PROV_TYPE, AttributeValue.text("parameter"))
        )
        self.records.append(
            Entity(
                entity_id,
                (
                    type_attr,
                    Attribute(NIDM_NAME, AttributeValue.text(f"par: {name}")),
                    Attribute(NIDM_VALUE, AttributeValue.classify(value)),
                ),
            )
        )
        self._used(entity_id)

    def file_entity(self, path: str, type_tag=None) -> str:
        if path in self.files:
            return self.files[path]
        entity_id = self.next_id("entity", "e_")
        type_attr = (
            Attribute(PROV_TYPE, AttributeValue.term(type_tag))
            if type_tag is not None
            else Attribute(PROV_TYPE, AttributeValue.text("file"))
        )
        self.records.append(
            Entity(
                entity_id,
                (
                    type_attr,
                    Attribute(NIDM_NAME, AttributeValue.text(f"file: {path}")),
                ),
            )
        )
        self.files[path] = entity_id
        return entity_id

    def input_file(self, path: str, type_tag=None) -> None:
        self._used(self.file_entity(path, type_tag))

    def output_file(self, path: str, type_tag=None) -> None:
        entity_id = self.file_entity(path, type_tag)
        self.records.append(
            Relation(
                kind="wasGeneratedBy",
                subject=entity_id,
                object=self.current["id"],
                rel_id=self.next_id("generated", "g_"),
            )
        )

    def _used(self, entity_id: str) -> None:
        self.records.append(
            Relation(
                kind="used",
                subject=self.current["id"],
                object=entity_id,
                rel_id=self.next_id("used", "u_"),
            )
        )

    def document(self) -> Document:
        return Document(self.namespaces, tuple(self.records))


# ---------------------------------------------------------------------------
# SPM batch logs
# ---------------------------------------------------------------------------


def _spm_time(text: str, line_no: int):
    try:
        return parse_timestamp(text.strip())
    except ValueError as exc:
        raise ParseError(str(exc), span=SourceSpan(line_no, 1)) from None


def extract_spm_batch(log: str) -> Document:
    """Convert a synthetic SPM batch log into a provenance document.

    Raises ParseError (with the line number) on malformed lines and
    UnbalancedStepError for BEGIN without END or stray END/PARAM/IN/OUT.
    """
    builder = _Builder(SPM_NAMESPACES)
    for line_no, raw in enumerate(log.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        keyword, _, rest = line.partition(" ")
        span = SourceSpan(line_no, 1)
        if keyword == "COUNTER":
            fields = rest.split()
            if len(fields) != 2 or fields[0] not in builder.counters or \
                    not fields[1].isdigit():
                raise ParseError(
                    "COUNTER takes <activity|entity|used|generated> <n>", span=span
                )
            if builder.current is not None:
                raise ParseError("COUNTER is only allowed between steps", span=span)
            builder.counters[fields[0]] = int(fields[1])
        elif keyword == "BEGIN":
            if builder.current is not None:
                raise UnbalancedStepError(
                    f"line {line_no}: BEGIN while step "
                    f"{builder.current['label']!r} is still open"
                )
            module, _, stamp = rest.partition(" ")
            if not module or not stamp.strip():
                raise ParseError("BEGIN takes <module-path> <timestamp>", span=span)
            builder.start_activity(module, _spm_time(stamp, line_no))
        elif keyword == "END":
            if builder.current is None:
                raise UnbalancedStepError(f"line {line_no}: END without BEGIN")
            if not rest.strip():
                raise ParseError("END takes <timestamp>", span=span)
            builder.end_activity(_spm_time(rest, line_no))
        elif keyword in ("PARAM", "IN", "OUT"):
            if builder.current is None:
                raise UnbalancedStepError(
                    f"line {line_no}: {keyword} outside a BEGIN/END step"
                )
            if keyword == "PARAM":
                name, _, value = rest.partition(" ")
                if not name or not value.strip():
                    raise ParseError("PARAM takes <name> <value>", span=span)
                builder.parameter(name, value.strip())
            elif keyword == "IN":
                if not rest.strip():
                    raise ParseError("IN takes <path>", span=span)
                builder.input_file(rest.strip())
            else:
                if not rest.strip():
                    raise ParseError("OUT takes <path>", span=span)
                builder.output_file(rest.strip())
        else:
            raise ParseError(
                "unknown log line", span=span,
                expected="BEGIN, END, PARAM, IN, OUT, or COUNTER",
                found=keyword,
            )
    if builder.current is not None:
        raise UnbalancedStepError(
            f"step {builder.current['label']!r} has BEGIN but no END"
        )
    return builder.document()


# ---------------------------------------------------------------------------
# Rule-driven extraction
# ---------------------------------------------------------------------------


def extract_with_rules(log: str, rules: RuleSet) -> ExtractionResult:
    """First-matching-rule-wins line scanner.

    Unmatched lines are ignored but counted. Records matched before any
    activity has started become orphan entities (no usage relation); an
    activity left open at end of input keeps an absent end time.
    """
    builder = _Builder(rules.namespaces)
    matched = 0
    unmatched = 0
    for raw in log.splitlines():
        line = raw.rstrip("\n")
        for rule in rules.rules:
            hit = rule.regex.search(line)
            if hit is None:
                continue
            matched += 1
            groups = hit.groupdict()
            when = None
            if groups.get("time"):
                try:
                    when = parse_timestamp(groups["time"].strip())
                except ValueError:
                    when = None
            if rule.emit == "activity-start":
                builder.finish_open_activity()
                builder.start_activity(
                    groups["label"].strip(), when, type_tag=rule.type_tag
                )
            elif rule.emit == "activity-end":
                if builder.current is not None:
                    builder.end_activity(when)
            elif builder.current is None:
                # no open activity: emit the entity without a relation
                if rule.emit == "parameter":
                    entity_id = builder.next_id("entity", "e_")
                    builder.records.append(
                        Entity(
                            entity_id,
                            (
                                Attribute(PROV_TYPE, AttributeValue.term(rule.type_tag)),
                                Attribute(
                                    NIDM_NAME,
                                    AttributeValue.text(f"par: {groups['name']}"),
                                ),
                                Attribute(
                                    NIDM_VALUE,
                                    AttributeValue.classify(groups["value"]),
                                ),
                            ),
                        )
                    )
                else:
                    builder.file_entity(groups["path"], rule.type_tag)
            elif rule.emit == "parameter":
                builder.parameter(
                    groups["name"], groups["value"], type_tag=rule.type_tag
                )
            elif rule.emit == "input-file":
                builder.input_file(groups["path"], type_tag=rule.type_tag)
            else:
                builder.output_file(groups["path"], type_tag=rule.type_tag)
            break
        else:
            unmatched += 1
    builder.finish_open_activity()
    return ExtractionResult(builder.document(), matched, unmatched)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def replay_plan(doc: Document) -> list:
    """One command line per activity, in (start, id) order: the label, then
    name=value for each used parameter entity, then in=/out= for files.
    Enough to regenerate the synthetic log up to timestamps."""
    from .errors import InvalidDocumentError
    from .model import validate

    report = validate(doc)
    if not report.ok:
        raise InvalidDocumentError(
            f"document has {len(report.violations)} violation(s)", report
        )

    def sort_key(activity: Activity):
        return (activity.start is None, activity.start, activity.id)

    lines: list = []
    for activity in sorted(doc.activities, key=sort_key):
        label_values = activity.attr_values(PROV_LABEL)
        label = label_values[0].canonical_text() if label_values else activity.id
        parts = [label]
        outputs: list = []
        for rel in doc.relations:
            if rel.kind == "used" and rel.subject == activity.id:
                entity = doc.get(rel.object)
                if entity is None:
                    continue
                names = entity.attr_values(NIDM_NAME)
                name = names[0].canonical_text() if names else entity.id
                if name.startswith("par: "):
                    values = entity.attr_values(NIDM_VALUE)
                    value = values[0].canonical_text() if values else ""
                    parts.append(f"{name[5:]}={value}")
                elif name.startswith("file: "):
                    parts.append(f"in={name[6:]}")
                else:
                    parts.append(f"in={name}")
            elif rel.kind == "wasGeneratedBy" and rel.object == activity.id:
                entity = doc.get(rel.subject)
                if entity is None:
                    continue
                names = entity.attr_values(NIDM_NAME)
                name = names[0].canonical_text() if names else entity.id
                outputs.append(f"out={name[6:] if name.startswith('file: ') else name}")
        parts.extend(outputs)
        lines.append(" ".join(parts))
    return lines


def regenerate_log(plan: list) -> str:
    """Rebuild a synthetic SPM log from a replay plan, with fresh
    deterministic timestamps (two minutes per step)."""
    from datetime import datetime, timedelta

    from .model import format_spm

    base = datetime(2020, 1, 1)
    lines: list = []
    for index, command in enumerate(plan):
        fields = command.split()
        label, args = fields[0], fields[1:]
        start = format_spm(base + timedelta(minutes=2 * index))
        end = format_spm(base + timedelta(minutes=2 * index + 1))
        lines.append(f"BEGIN {label} {start}")
        for arg in args:
            key, _, value = arg.partition("=")
            if key == "in":
                lines.append(f"IN {value}")
            elif key == "out":
                lines.append(f"OUT {value}")
            else:
                lines.append(f"PARAM {key} {value}")
        lines.append(f"END {end}")
    return "\n".join(lines) + "\n"
