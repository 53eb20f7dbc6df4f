"""Provenance-centered metadata toolkit for derived scientific data.

Public surface: the core model (documents of entities, activities, agents,
and relations), three codecs (PROV-Notation, provenance XML, JSON), a
terminology registry with harmonization, an in-memory graph store with a
declarative query engine, log-to-provenance extractors, a REST service, and
a federated query mediator.
"""

from .errors import (
    BadQueryError,
    BindError,
    CycleDetectedError,
    DuplicateIdError,
    InvalidDocumentError,
    LoadError,
    NidmError,
    NoEndpointsError,
    NotACollectionError,
    ParseError,
    RuleError,
    SourceSpan,
    UnbalancedStepError,
    UndeclaredPrefixError,
    UnknownCanonicalError,
    UnknownIdError,
)
from .model import (
    Activity,
    Agent,
    Attribute,
    AttributeValue,
    Document,
    Entity,
    QualifiedName,
    Relation,
    ValidationReport,
    Violation,
    build_document,
    provenance_closure,
    validate,
)
from .provn import parse_provn, serialize_provn
from .xml_codec import parse_xml, serialize_xml
from .json_codec import parse_json, serialize_json
from .terminology import (
    Registry,
    TermDefinition,
    TermMapping,
    harmonize,
    load_registry,
    parse_registry,
    resolve,
)
from .query import (
    AttrFilter,
    PathConstraint,
    PathStep,
    Query,
    parse_query,
    query_to_text,
)
from .store import IngestSummary, ResultSet, Row, Store
from .extractors import (
    ExtractionResult,
    ExtractionRule,
    RuleSet,
    extract_spm_batch,
    extract_with_rules,
    load_rules,
    parse_rules,
    replay_plan,
)

__version__ = "0.1.0"
