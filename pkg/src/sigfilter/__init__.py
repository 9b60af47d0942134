"""Signature-driven XSS detection and mitigation.

Rewrites raw HTML responses before any DOM parsing, using a declarative
database of per-application exploit signatures. Ships as a library, an
offline filtering CLI, and an intercepting HTTP forward proxy.
"""

from .model import (
    DatabaseError,
    DatabaseSemanticError,
    DatabaseSyntaxError,
    Diagnostic,
    EndpointPair,
    ListenerSpec,
    MalformationAction,
    Occurrence,
    ProbeDefinition,
    SanitizerMethod,
    Signature,
    SignatureDatabase,
    SignatureKind,
    TextPredicate,
    TypeDet,
    Uniqueness,
    ValidationReport,
    VersionOrder,
    compare_versions,
    load_database,
    load_database_with_diagnostics,
    parse_database,
    serialize_database,
    validate_database,
    validate_signature,
    version_is_vulnerable,
)
from .pipeline import (
    ActiveListener,
    FilterOutcome,
    SessionStore,
    SignatureReport,
    SpanRecord,
    Verdict,
    filter_subresponse,
    register_listeners,
    verify_response,
)
from .probes import PageIdentity, identify_version, load_versions, run_probes, signature_applies
from .sanitizers import (
    DEFAULT_POLICY,
    PurifyPolicy,
    SanitizerChoice,
    make_sanitizer,
    policy_from_config,
    sanitize_escape,
    sanitize_purify,
    sanitize_regex_match,
    splice,
)
from .scanner import (
    InjectionSpan,
    MalformationReport,
    MarkerEvent,
    MarkerKind,
    check_order,
    resolve_spans,
    scan_markers,
)

__version__ = "0.1.0"
