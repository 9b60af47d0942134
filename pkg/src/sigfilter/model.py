"""Signature data model: database format, parsing, and static validation.

A signature database is a JSON document of the form:

    {
      "formatVersion": 1,
      "probes": [
        {"softwareToken": "WordPress",
         "bodyPattern": "wp-content/",
         "urlPattern": null,
         "versionExtractor": "generator\" content=\"WordPress ([0-9.]+)"},
        ...
      ],
      "signatures": [ { ... }, ... ]
    }

Signature objects use exactly these keys (all regexes are given as strings):

    id                  unique opaque string, e.g. a CVE id          (required)
    url                 URL predicate: substring, or /regex/          (optional)
    software            framework token, e.g. "WordPress"             (optional)
    softwareDetails     body predicate refining software, e.g. a
                        plugin slug: substring or /regex/             (optional)
    version             maximum vulnerable dotted-numeric version     (optional)
    type                "string" | "listener"                         (required)
    typeDet             "occurrence-uniqueness" where occurrence is
                        single|multiple and uniqueness unique|several (required)
    sanitizer           "purify" | "escape" | "regex"            (default purify)
    config              sanitizer-specific configuration              (optional)
    endPoints           array of [startPattern, endPattern] pairs
    endPointsPositions  array of [startOrdinal, endOrdinal] 1-based
                        pairs parallel to endPoints                   (optional)
    onMalformation      "widen" | "block"                        (default block)
    listenerData        array of listener objects, required and
                        nonempty iff type is "listener"
    versionProbe        optional extension: regex with one capture
                        group, run against the body to extract the
                        vulnerable component's version

Listener objects carry listenerType, listenerMethod, listenerUrl (alias:
url) plus sanitizer/type/typeDet/config/endPoints/endPointsPositions/
onMalformation with the same meaning as on a signature.

URL and softwareDetails predicates are substring matches unless written
as /pattern/, in which case the inner pattern is a regex. The sanitizer
value "DOMPurify" is accepted as an alias for "purify".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable


class DatabaseError(ValueError):
    """Base class for signature database failures."""


class DatabaseSyntaxError(DatabaseError):
    """The database text is not well-formed JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class DatabaseSemanticError(DatabaseError):
    """The database is well-formed JSON but violates the schema."""

    def __init__(self, message: str, signature_id: str | None = None, field_name: str | None = None):
        super().__init__(message)
        self.signature_id = signature_id
        self.field_name = field_name


class Occurrence(str, Enum):
    SINGLE = "single"
    MULTIPLE = "multiple"


class Uniqueness(str, Enum):
    UNIQUE = "unique"
    SEVERAL = "several"


class SignatureKind(str, Enum):
    STRING = "string"
    LISTENER = "listener"


class SanitizerMethod(str, Enum):
    PURIFY = "purify"
    ESCAPE = "escape"
    REGEX = "regex"


class MalformationAction(str, Enum):
    WIDEN = "widen"
    BLOCK = "block"


class VersionOrder(Enum):
    LESS = "less"
    EQUAL = "equal"
    GREATER = "greater"
    INCOMPARABLE = "incomparable"


_NUMERIC = re.compile(r"[0-9]+")
# RFC 7230 token characters; HTTP method names must be tokens.
_HTTP_TOKEN = re.compile(r"[!#$%&'*+.^_`|~0-9A-Za-z-]+")


def compare_versions(a: str, b: str) -> VersionOrder:
    """Compare two dotted-numeric version strings segment-wise.

    Missing segments count as 0, so "1.7" equals "1.7.0". Any segment
    that is not a plain decimal number makes the pair incomparable.
    """
    seg_a = a.split(".")
    seg_b = b.split(".")
    width = max(len(seg_a), len(seg_b))
    seg_a += ["0"] * (width - len(seg_a))
    seg_b += ["0"] * (width - len(seg_b))
    for pa, pb in zip(seg_a, seg_b):
        if not _NUMERIC.fullmatch(pa) or not _NUMERIC.fullmatch(pb):
            return VersionOrder.INCOMPARABLE
        na, nb = int(pa), int(pb)
        if na < nb:
            return VersionOrder.LESS
        if na > nb:
            return VersionOrder.GREATER
    return VersionOrder.EQUAL


def version_is_vulnerable(page_version: str | None, max_vulnerable: str | None) -> bool:
    """Version gate: a signature applies when the page version is at most
    the signature's maximum vulnerable version, or when either side is
    unknown (an unknown page version never suppresses a patch).
    """
    if max_vulnerable is None or page_version is None:
        return True
    return compare_versions(page_version, max_vulnerable) in (VersionOrder.LESS, VersionOrder.EQUAL)


def _strip_regex_delimiters(raw: str) -> tuple[str, bool]:
    """Return (pattern, was_delimited) for a /.../-style regex literal."""
    if len(raw) >= 2 and raw.startswith("/") and raw.endswith("/"):
        return raw[1:-1], True
    return raw, False


@dataclass(frozen=True)
class TextPredicate:
    """Substring-or-regex predicate over a URL or document body.

    The raw form is preserved for serialization; a value delimited as
    /pattern/ matches by regex search, anything else by substring.
    """

    raw: str
    is_regex: bool = field(default=False)
    pattern: re.Pattern | None = field(default=None, compare=False, repr=False)

    @classmethod
    def parse(cls, raw: str) -> "TextPredicate":
        inner, delimited = _strip_regex_delimiters(raw)
        if delimited:
            return cls(raw=raw, is_regex=True, pattern=re.compile(inner))
        return cls(raw=raw, is_regex=False)

    def matches(self, text: str) -> bool:
        if self.is_regex:
            pattern = self.pattern or re.compile(_strip_regex_delimiters(self.raw)[0])
            return pattern.search(text) is not None
        return self.raw in text


@dataclass(frozen=True)
class EndpointPair:
    """One (startPattern, endPattern) regex pair delimiting an injection point."""

    start_raw: str
    end_raw: str
    start: re.Pattern = field(compare=False, repr=False)
    end: re.Pattern = field(compare=False, repr=False)

    @classmethod
    def compile(cls, start_raw: str, end_raw: str) -> "EndpointPair":
        return cls(start_raw=start_raw, end_raw=end_raw,
                   start=re.compile(start_raw), end=re.compile(end_raw))


@dataclass(frozen=True)
class TypeDet:
    """Parsed "occurrence-uniqueness" discriminator."""

    occurrence: Occurrence
    uniqueness: Uniqueness

    @classmethod
    def parse(cls, text: str) -> "TypeDet":
        head, sep, tail = text.partition("-")
        if not sep:
            raise ValueError(f"typeDet {text!r} is not of the form 'occurrence-uniqueness'")
        try:
            occurrence = Occurrence(head)
        except ValueError:
            raise ValueError(f"typeDet {text!r}: unknown occurrence token {head!r}") from None
        try:
            uniqueness = Uniqueness(tail)
        except ValueError:
            raise ValueError(f"typeDet {text!r}: unknown uniqueness token {tail!r}") from None
        return cls(occurrence, uniqueness)

    def __str__(self) -> str:
        return f"{self.occurrence.value}-{self.uniqueness.value}"


@dataclass(frozen=True)
class ListenerSpec:
    """A nested signature for subresponses (e.g. XHR), activated only after
    its parent top-level signature matched."""

    listener_type: str
    listener_method: str
    listener_url: TextPredicate
    kind: SignatureKind = SignatureKind.STRING
    type_det: TypeDet = TypeDet(Occurrence.SINGLE, Uniqueness.UNIQUE)
    sanitizer: SanitizerMethod = SanitizerMethod.PURIFY
    config: str | None = None
    end_points: tuple[EndpointPair, ...] = ()
    end_point_positions: tuple[tuple[int, int], ...] | None = None
    on_malformation: MalformationAction = MalformationAction.BLOCK

    def method_matches(self, method: str) -> bool:
        return self.listener_method.upper() == method.upper()


@dataclass(frozen=True)
class Signature:
    """One exploit description: applicability predicates, endpoint pairs,
    and the sanitizer to apply on the isolated injection spans."""

    id: str
    kind: SignatureKind
    type_det: TypeDet
    end_points: tuple[EndpointPair, ...] = ()
    url: TextPredicate | None = None
    software: str | None = None
    software_details: TextPredicate | None = None
    version: str | None = None
    sanitizer: SanitizerMethod = SanitizerMethod.PURIFY
    config: str | None = None
    end_point_positions: tuple[tuple[int, int], ...] | None = None
    on_malformation: MalformationAction = MalformationAction.BLOCK
    listener_data: tuple[ListenerSpec, ...] = ()
    version_probe_raw: str | None = None
    version_probe: re.Pattern | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ProbeDefinition:
    """A framework fingerprint: body (and optionally URL) patterns naming a
    software token, with an optional one-group version extractor."""

    software_token: str
    body_pattern_raw: str
    body_pattern: re.Pattern = field(compare=False, repr=False)
    url_pattern_raw: str | None = None
    url_pattern: re.Pattern | None = field(default=None, compare=False, repr=False)
    version_extractor_raw: str | None = None
    version_extractor: re.Pattern | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SignatureDatabase:
    """Parsed, validated, immutable signature database.

    Instances are safe to share across threads: all fields are read-only
    after construction.
    """

    signatures: tuple[Signature, ...]
    probes: tuple[ProbeDefinition, ...]
    format_version: int = 1

    @cached_property
    def by_software(self) -> dict[str | None, tuple[Signature, ...]]:
        index: dict[str | None, list[Signature]] = {}
        for sig in self.signatures:
            index.setdefault(sig.software, []).append(sig)
        return {token: tuple(sigs) for token, sigs in index.items()}

    def signatures_for(self, frameworks: Iterable[str]) -> tuple[Signature, ...]:
        """Signatures to consider for a page: software-agnostic ones plus
        those whose software token was fingerprinted."""
        tokens = set(frameworks)
        return tuple(s for s in self.signatures if s.software is None or s.software in tokens)


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding. Diagnostics are data, not errors."""

    message: str
    signature_id: str | None = None
    field_name: str | None = None

    def __str__(self) -> str:
        where = self.signature_id or "<database>"
        if self.field_name:
            return f"{where}: {self.field_name}: {self.message}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics


_SIGNATURE_KEYS = {
    "id", "url", "software", "softwareDetails", "version", "type", "typeDet",
    "sanitizer", "config", "endPoints", "endPointsPositions", "onMalformation",
    "listenerData", "versionProbe",
}
_LISTENER_KEYS = {
    "listenerType", "listenerMethod", "listenerUrl", "url", "sanitizer", "type",
    "typeDet", "config", "endPoints", "endPointsPositions", "onMalformation",
}
_PROBE_KEYS = {"softwareToken", "bodyPattern", "urlPattern", "versionExtractor"}

_SANITIZER_ALIASES = {"dompurify": SanitizerMethod.PURIFY}

# Purify config mini-grammar: ';'-separated KEY=value,value entries.
_PURIFY_CONFIG_KEYS = {"ALLOWED_TAGS", "ALLOWED_ATTR", "FORBID_TAGS"}


class _Problems:
    """Collects semantic problems; raises immediately in strict mode."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.diagnostics: list[Diagnostic] = []

    def add(self, message: str, signature_id: str | None = None, field_name: str | None = None) -> None:
        if self.strict:
            raise DatabaseSemanticError(message, signature_id=signature_id, field_name=field_name)
        self.diagnostics.append(Diagnostic(message, signature_id=signature_id, field_name=field_name))


def _expect_str(obj: Any, key: str, problems: _Problems, sig_id: str | None, *,
                required: bool = False) -> str | None:
    value = obj.get(key)
    if value is None:
        if required:
            problems.add(f"missing required key {key!r}", sig_id, key)
        return None
    if not isinstance(value, str):
        problems.add(f"{key} must be a string, got {type(value).__name__}", sig_id, key)
        return None
    return value


def _compile_or_report(raw: str, problems: _Problems, sig_id: str | None,
                       field_name: str) -> re.Pattern | None:
    try:
        return re.compile(raw)
    except re.error as exc:
        problems.add(f"pattern {raw!r} does not compile: {exc}", sig_id, field_name)
        return None


def _parse_sanitizer(obj: dict, problems: _Problems, sig_id: str | None) -> SanitizerMethod:
    raw = _expect_str(obj, "sanitizer", problems, sig_id)
    if raw is None:
        return SanitizerMethod.PURIFY
    alias = _SANITIZER_ALIASES.get(raw.lower())
    if alias is not None:
        return alias
    try:
        return SanitizerMethod(raw)
    except ValueError:
        problems.add(f"unknown sanitizer {raw!r}", sig_id, "sanitizer")
        return SanitizerMethod.PURIFY


def _parse_type_det(obj: dict, problems: _Problems, sig_id: str | None) -> TypeDet:
    raw = _expect_str(obj, "typeDet", problems, sig_id, required=True)
    if raw is None:
        return TypeDet(Occurrence.SINGLE, Uniqueness.UNIQUE)
    try:
        return TypeDet.parse(raw)
    except ValueError as exc:
        problems.add(str(exc), sig_id, "typeDet")
        return TypeDet(Occurrence.SINGLE, Uniqueness.UNIQUE)


def _parse_end_points(obj: dict, problems: _Problems, sig_id: str | None,
                      *, required: bool) -> tuple[EndpointPair, ...]:
    raw = obj.get("endPoints")
    if raw is None:
        if required:
            problems.add("endPoints is required and must be nonempty", sig_id, "endPoints")
        return ()
    if not isinstance(raw, list) or not all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(s, str) for s in p) for p in raw):
        problems.add("endPoints must be an array of [start, end] string pairs", sig_id, "endPoints")
        return ()
    if required and not raw:
        problems.add("endPoints must be nonempty", sig_id, "endPoints")
    pairs = []
    for idx, (start_raw, end_raw) in enumerate(raw):
        start = _compile_or_report(start_raw, problems, sig_id, f"endPoints[{idx}][0]")
        end = _compile_or_report(end_raw, problems, sig_id, f"endPoints[{idx}][1]")
        if start is not None and end is not None:
            pairs.append(EndpointPair(start_raw, end_raw, start, end))
    return tuple(pairs)


def _parse_positions(obj: dict, n_pairs: int, problems: _Problems,
                     sig_id: str | None) -> tuple[tuple[int, int], ...] | None:
    raw = obj.get("endPointsPositions")
    if raw is None:
        return None
    if not isinstance(raw, list) or not all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(v, int) for v in p) for p in raw):
        problems.add("endPointsPositions must be an array of [startOrdinal, endOrdinal] integer pairs",
                     sig_id, "endPointsPositions")
        return None
    if len(raw) != n_pairs:
        problems.add(
            f"endPointsPositions has {len(raw)} entries but endPoints has {n_pairs}",
            sig_id, "endPointsPositions")
        return None
    for s_ord, e_ord in raw:
        if s_ord < 1 or e_ord < 1:
            problems.add("endPointsPositions ordinals are 1-based and must be >= 1",
                         sig_id, "endPointsPositions")
            return None
    return tuple((s, e) for s, e in raw)


def _parse_regex_config(obj: dict, problems: _Problems, sig_id: str | None) -> str | None:
    """Regex-sanitizer config: required, compilable; /.../ delimiters stripped."""
    raw = _expect_str(obj, "config", problems, sig_id)
    if raw is None:
        problems.add("regex sanitizer requires config", sig_id, "config")
        return None
    pattern, _ = _strip_regex_delimiters(raw)
    if _compile_or_report(pattern, problems, sig_id, "config") is None:
        return None
    return pattern


def validate_purify_config(config: str) -> None:
    """Raise ValueError when a purify config string does not follow the
    ALLOWED_TAGS=a,b;ALLOWED_ATTR=c;FORBID_TAGS=d mini-grammar."""
    for entry in config.split(";"):
        entry = entry.strip()
        if not entry:
            continue
        key, sep, _ = entry.partition("=")
        if not sep:
            raise ValueError(f"purify config entry {entry!r} is not KEY=value")
        if key.strip() not in _PURIFY_CONFIG_KEYS:
            raise ValueError(f"unknown purify config key {key.strip()!r}")


def _check_sanitizer_config(method: SanitizerMethod, obj: dict, problems: _Problems,
                            sig_id: str | None) -> str | None:
    if method is SanitizerMethod.REGEX:
        return _parse_regex_config(obj, problems, sig_id)
    raw = _expect_str(obj, "config", problems, sig_id)
    if raw is None:
        return None
    if method is SanitizerMethod.ESCAPE:
        pattern, _ = _strip_regex_delimiters(raw)
        if _compile_or_report(pattern, problems, sig_id, "config") is None:
            return None
        return pattern
    try:
        validate_purify_config(raw)
    except ValueError as exc:
        problems.add(str(exc), sig_id, "config")
        return None
    return raw


def _parse_on_malformation(obj: dict, problems: _Problems, sig_id: str | None) -> MalformationAction:
    raw = _expect_str(obj, "onMalformation", problems, sig_id)
    if raw is None:
        return MalformationAction.BLOCK
    try:
        return MalformationAction(raw)
    except ValueError:
        problems.add(f"unknown onMalformation {raw!r}", sig_id, "onMalformation")
        return MalformationAction.BLOCK


def _parse_listener(obj: Any, problems: _Problems, sig_id: str | None, idx: int) -> ListenerSpec | None:
    if not isinstance(obj, dict):
        problems.add(f"listenerData[{idx}] must be an object", sig_id, "listenerData")
        return None
    for key in obj:
        if key not in _LISTENER_KEYS:
            problems.add(f"unknown listener key {key!r}", sig_id, f"listenerData[{idx}]")
    listener_type = _expect_str(obj, "listenerType", problems, sig_id) or "xhr"
    method = _expect_str(obj, "listenerMethod", problems, sig_id, required=True)
    if method is not None and not _HTTP_TOKEN.fullmatch(method):
        problems.add(f"listenerMethod {method!r} is not a valid HTTP method token",
                     sig_id, "listenerMethod")
        method = None
    if method is None:
        return None
    # Appendix-style signatures write the target predicate as `url`;
    # `listenerUrl` (the worked-example form) is canonical.
    url_raw = _expect_str(obj, "listenerUrl", problems, sig_id) or _expect_str(obj, "url", problems, sig_id)
    if url_raw is None:
        problems.add("listener requires listenerUrl", sig_id, "listenerUrl")
        return None
    try:
        listener_url = TextPredicate.parse(url_raw)
    except re.error as exc:
        problems.add(f"listenerUrl pattern does not compile: {exc}", sig_id, "listenerUrl")
        return None
    kind_raw = _expect_str(obj, "type", problems, sig_id)
    kind = SignatureKind.STRING
    if kind_raw is not None:
        try:
            kind = SignatureKind(kind_raw)
        except ValueError:
            problems.add(f"unknown listener type {kind_raw!r}", sig_id, "type")
        if kind is SignatureKind.LISTENER:
            problems.add("listeners cannot nest further listeners", sig_id, "type")
            kind = SignatureKind.STRING
    type_det = _parse_type_det(obj, problems, sig_id)
    sanitizer = _parse_sanitizer(obj, problems, sig_id)
    config = _check_sanitizer_config(sanitizer, obj, problems, sig_id)
    end_points = _parse_end_points(obj, problems, sig_id, required=True)
    positions = _parse_positions(obj, len(end_points), problems, sig_id)
    return ListenerSpec(
        listener_type=listener_type,
        listener_method=method,
        listener_url=listener_url,
        kind=kind,
        type_det=type_det,
        sanitizer=sanitizer,
        config=config,
        end_points=end_points,
        end_point_positions=positions,
        on_malformation=_parse_on_malformation(obj, problems, sig_id),
    )


def _parse_signature(obj: Any, problems: _Problems, index: int) -> Signature | None:
    if not isinstance(obj, dict):
        problems.add(f"signatures[{index}] must be an object")
        return None
    sig_id = obj.get("id") if isinstance(obj.get("id"), str) else None
    if sig_id is None or not sig_id:
        problems.add(f"signatures[{index}] is missing a nonempty string id", sig_id, "id")
        return None
    for key in obj:
        if key not in _SIGNATURE_KEYS:
            problems.add(f"unknown signature key {key!r}", sig_id, key)

    kind_raw = _expect_str(obj, "type", problems, sig_id, required=True)
    kind = SignatureKind.STRING
    if kind_raw is not None:
        try:
            kind = SignatureKind(kind_raw)
        except ValueError:
            problems.add(f"unknown signature type {kind_raw!r}", sig_id, "type")

    type_det = _parse_type_det(obj, problems, sig_id)
    sanitizer = _parse_sanitizer(obj, problems, sig_id)
    config = _check_sanitizer_config(sanitizer, obj, problems, sig_id)

    url = None
    url_raw = _expect_str(obj, "url", problems, sig_id)
    if url_raw is not None:
        try:
            url = TextPredicate.parse(url_raw)
        except re.error as exc:
            problems.add(f"url pattern does not compile: {exc}", sig_id, "url")

    details = None
    details_raw = _expect_str(obj, "softwareDetails", problems, sig_id)
    if details_raw is not None:
        try:
            details = TextPredicate.parse(details_raw)
        except re.error as exc:
            problems.add(f"softwareDetails pattern does not compile: {exc}", sig_id, "softwareDetails")

    end_points = _parse_end_points(obj, problems, sig_id, required=(kind is SignatureKind.STRING))
    positions = _parse_positions(obj, len(end_points), problems, sig_id)

    version_probe_raw = _expect_str(obj, "versionProbe", problems, sig_id)
    version_probe = None
    if version_probe_raw is not None:
        version_probe = _compile_or_report(version_probe_raw, problems, sig_id, "versionProbe")
        if version_probe is not None and version_probe.groups != 1:
            problems.add("versionProbe must have exactly one capture group", sig_id, "versionProbe")
            version_probe = None

    listeners: list[ListenerSpec] = []
    listener_raw = obj.get("listenerData")
    if listener_raw is not None:
        if not isinstance(listener_raw, list):
            problems.add("listenerData must be an array", sig_id, "listenerData")
            listener_raw = []
        for idx, entry in enumerate(listener_raw):
            listener = _parse_listener(entry, problems, sig_id, idx)
            if listener is not None:
                listeners.append(listener)
    if kind is SignatureKind.LISTENER and not listeners:
        problems.add("type=listener requires nonempty listenerData", sig_id, "listenerData")
    if kind is SignatureKind.STRING and listeners:
        problems.add("listenerData requires type=listener", sig_id, "listenerData")

    return Signature(
        id=sig_id,
        kind=kind,
        type_det=type_det,
        end_points=end_points,
        url=url,
        software=_expect_str(obj, "software", problems, sig_id),
        software_details=details,
        version=_expect_str(obj, "version", problems, sig_id),
        sanitizer=sanitizer,
        config=config,
        end_point_positions=positions,
        on_malformation=_parse_on_malformation(obj, problems, sig_id),
        listener_data=tuple(listeners),
        version_probe_raw=version_probe_raw,
        version_probe=version_probe,
    )


def _parse_probe(obj: Any, problems: _Problems, index: int) -> ProbeDefinition | None:
    if not isinstance(obj, dict):
        problems.add(f"probes[{index}] must be an object")
        return None
    for key in obj:
        if key not in _PROBE_KEYS:
            problems.add(f"unknown probe key {key!r}", None, f"probes[{index}]")
    token = _expect_str(obj, "softwareToken", problems, None, required=True)
    body_raw = _expect_str(obj, "bodyPattern", problems, None, required=True)
    if token is None or body_raw is None:
        return None
    body = _compile_or_report(body_raw, problems, None, f"probes[{index}].bodyPattern")
    if body is None:
        return None
    url_raw = _expect_str(obj, "urlPattern", problems, None)
    url = None
    if url_raw is not None:
        url = _compile_or_report(url_raw, problems, None, f"probes[{index}].urlPattern")
        if url is None:
            url_raw = None
    extractor_raw = _expect_str(obj, "versionExtractor", problems, None)
    extractor = None
    if extractor_raw is not None:
        extractor = _compile_or_report(extractor_raw, problems, None, f"probes[{index}].versionExtractor")
        if extractor is not None and extractor.groups != 1:
            problems.add("versionExtractor must have exactly one capture group",
                         None, f"probes[{index}].versionExtractor")
            extractor = None
        if extractor is None:
            extractor_raw = None
    return ProbeDefinition(
        software_token=token,
        body_pattern_raw=body_raw,
        body_pattern=body,
        url_pattern_raw=url_raw,
        url_pattern=url,
        version_extractor_raw=extractor_raw,
        version_extractor=extractor,
    )


def _parse(data: bytes | str, problems: _Problems) -> SignatureDatabase:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatabaseSyntaxError(f"database is not UTF-8 text: {exc}") from exc
    else:
        text = data
    try:
        root = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatabaseSyntaxError(
            f"database is not valid JSON: {exc.msg} (line {exc.lineno} column {exc.colno})",
            line=exc.lineno, column=exc.colno) from exc
    if not isinstance(root, dict):
        raise DatabaseSyntaxError("database root must be a JSON object")

    format_version = root.get("formatVersion", 1)
    if not isinstance(format_version, int) or format_version != 1:
        problems.add(f"unsupported formatVersion {format_version!r}")
        format_version = 1
    for key in root:
        if key not in {"formatVersion", "probes", "signatures"}:
            problems.add(f"unknown database key {key!r}")

    probes: list[ProbeDefinition] = []
    raw_probes = root.get("probes", [])
    if not isinstance(raw_probes, list):
        problems.add("probes must be an array")
        raw_probes = []
    for idx, entry in enumerate(raw_probes):
        probe = _parse_probe(entry, problems, idx)
        if probe is not None:
            probes.append(probe)

    signatures: list[Signature] = []
    raw_signatures = root.get("signatures", [])
    if not isinstance(raw_signatures, list):
        problems.add("signatures must be an array")
        raw_signatures = []
    for idx, entry in enumerate(raw_signatures):
        sig = _parse_signature(entry, problems, idx)
        if sig is not None:
            signatures.append(sig)

    seen: dict[str, int] = {}
    for idx, sig in enumerate(signatures):
        if sig.id in seen:
            problems.add(f"duplicate signature id {sig.id!r} (entries {seen[sig.id]} and {idx})",
                         sig.id, "id")
        else:
            seen[sig.id] = idx

    probe_tokens = {p.software_token for p in probes}
    for sig in signatures:
        if sig.software is not None and sig.software not in probe_tokens:
            problems.add(f"software {sig.software!r} has no probe in the database", sig.id, "software")

    return SignatureDatabase(signatures=tuple(signatures), probes=tuple(probes),
                             format_version=format_version)


def parse_database(data: bytes | str) -> SignatureDatabase:
    """Parse and validate a database; raises on the first problem found.

    Raises DatabaseSyntaxError for malformed JSON (position-annotated) and
    DatabaseSemanticError for schema violations (bad typeDet, uncompilable
    regex, position-list mismatch, duplicate ids, missing probes).
    """
    return _parse(data, _Problems(strict=True))


def load_database_with_diagnostics(data: bytes | str) -> tuple[SignatureDatabase, list[Diagnostic]]:
    """Lenient parse for validation tooling: structural (JSON) errors still
    raise, but semantic problems are collected as diagnostics and broken
    constructs are skipped. The returned database may be partial; use
    parse_database for anything that will actually filter traffic.
    """
    problems = _Problems(strict=False)
    db = _parse(data, problems)
    return db, problems.diagnostics


def load_database(path: str | Path) -> SignatureDatabase:
    """Load a database from a JSON file, or merge every *.json in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise DatabaseError(f"no *.json database files in {path}")
        merged_sigs: list[Signature] = []
        merged_probes: list[ProbeDefinition] = []
        probe_keys: set[str] = set()
        for file in files:
            db = parse_database(file.read_bytes())
            merged_sigs.extend(db.signatures)
            for probe in db.probes:
                key = probe.software_token + "\x00" + probe.body_pattern_raw
                if key not in probe_keys:
                    probe_keys.add(key)
                    merged_probes.append(probe)
        ids = [s.id for s in merged_sigs]
        for sig_id in ids:
            if ids.count(sig_id) > 1:
                raise DatabaseSemanticError(f"duplicate signature id {sig_id!r} across database files",
                                            signature_id=sig_id, field_name="id")
        return SignatureDatabase(signatures=tuple(merged_sigs), probes=tuple(merged_probes))
    return parse_database(path.read_bytes())


def _predicate_to_json(pred: TextPredicate | None) -> str | None:
    return None if pred is None else pred.raw


def _listener_to_json(spec: ListenerSpec) -> dict:
    obj: dict[str, Any] = {
        "listenerType": spec.listener_type,
        "listenerMethod": spec.listener_method,
        "listenerUrl": spec.listener_url.raw,
        "type": spec.kind.value,
        "typeDet": str(spec.type_det),
        "sanitizer": spec.sanitizer.value,
        "endPoints": [[p.start_raw, p.end_raw] for p in spec.end_points],
        "onMalformation": spec.on_malformation.value,
    }
    if spec.config is not None:
        obj["config"] = spec.config
    if spec.end_point_positions is not None:
        obj["endPointsPositions"] = [list(p) for p in spec.end_point_positions]
    return obj


def _signature_to_json(sig: Signature) -> dict:
    obj: dict[str, Any] = {
        "id": sig.id,
        "type": sig.kind.value,
        "typeDet": str(sig.type_det),
        "sanitizer": sig.sanitizer.value,
        "endPoints": [[p.start_raw, p.end_raw] for p in sig.end_points],
        "onMalformation": sig.on_malformation.value,
    }
    for key, value in (("url", _predicate_to_json(sig.url)),
                       ("software", sig.software),
                       ("softwareDetails", _predicate_to_json(sig.software_details)),
                       ("version", sig.version),
                       ("config", sig.config),
                       ("versionProbe", sig.version_probe_raw)):
        if value is not None:
            obj[key] = value
    if sig.end_point_positions is not None:
        obj["endPointsPositions"] = [list(p) for p in sig.end_point_positions]
    if sig.listener_data:
        obj["listenerData"] = [_listener_to_json(s) for s in sig.listener_data]
    return obj


def _probe_to_json(probe: ProbeDefinition) -> dict:
    obj: dict[str, Any] = {
        "softwareToken": probe.software_token,
        "bodyPattern": probe.body_pattern_raw,
    }
    if probe.url_pattern_raw is not None:
        obj["urlPattern"] = probe.url_pattern_raw
    if probe.version_extractor_raw is not None:
        obj["versionExtractor"] = probe.version_extractor_raw
    return obj


def serialize_database(db: SignatureDatabase) -> str:
    """Serialize back to the documented JSON format; parse(serialize(db))
    equals db field-by-field."""
    return json.dumps({
        "formatVersion": db.format_version,
        "probes": [_probe_to_json(p) for p in db.probes],
        "signatures": [_signature_to_json(s) for s in db.signatures],
    }, indent=2)


def _validate_common(sig_id: str, kind: SignatureKind, type_det: TypeDet,
                     sanitizer: SanitizerMethod, config: str | None,
                     end_points: tuple[EndpointPair, ...],
                     positions: tuple[tuple[int, int], ...] | None,
                     out: list[Diagnostic]) -> None:
    for idx, pair in enumerate(end_points):
        for which, raw in (("start", pair.start_raw), ("end", pair.end_raw)):
            try:
                re.compile(raw)
            except re.error as exc:
                out.append(Diagnostic(f"{which} pattern {raw!r} does not compile: {exc}",
                                      sig_id, f"endPoints[{idx}]"))
    if sanitizer is SanitizerMethod.REGEX:
        if config is None:
            out.append(Diagnostic("regex sanitizer requires config", sig_id, "config"))
        else:
            try:
                re.compile(_strip_regex_delimiters(config)[0])
            except re.error as exc:
                out.append(Diagnostic(f"config pattern does not compile: {exc}", sig_id, "config"))
    elif sanitizer is SanitizerMethod.PURIFY and config is not None:
        try:
            validate_purify_config(config)
        except ValueError as exc:
            out.append(Diagnostic(str(exc), sig_id, "config"))
    if positions is not None:
        if type_det.uniqueness is not Uniqueness.SEVERAL:
            out.append(Diagnostic("endPointsPositions without 'several' uniqueness",
                                  sig_id, "endPointsPositions"))
        if len(positions) != len(end_points):
            out.append(Diagnostic("endPointsPositions length differs from endPoints",
                                  sig_id, "endPointsPositions"))
        for s_ord, e_ord in positions:
            if s_ord < 1 or e_ord < 1:
                out.append(Diagnostic("position ordinals must be >= 1", sig_id, "endPointsPositions"))
    if kind is SignatureKind.STRING and not end_points:
        out.append(Diagnostic("endPoints must be nonempty for type=string", sig_id, "endPoints"))


def validate_signature(sig: Signature) -> ValidationReport:
    """Static checks over one structurally parsed signature. Diagnostics
    are data; an empty report means the signature looks consistent."""
    out: list[Diagnostic] = []
    _validate_common(sig.id, sig.kind, sig.type_det, sig.sanitizer, sig.config,
                     sig.end_points, sig.end_point_positions, out)
    if sig.listener_data and sig.kind is not SignatureKind.LISTENER:
        out.append(Diagnostic("listenerData requires type=listener", sig.id, "listenerData"))
    if sig.kind is SignatureKind.LISTENER and not sig.listener_data:
        out.append(Diagnostic("type=listener requires nonempty listenerData", sig.id, "listenerData"))
    if sig.version_probe_raw is not None:
        try:
            pattern = re.compile(sig.version_probe_raw)
            if pattern.groups != 1:
                out.append(Diagnostic("versionProbe must have exactly one capture group",
                                      sig.id, "versionProbe"))
        except re.error as exc:
            out.append(Diagnostic(f"versionProbe does not compile: {exc}", sig.id, "versionProbe"))
    for pred, name in ((sig.url, "url"), (sig.software_details, "softwareDetails")):
        if pred is not None and pred.is_regex:
            try:
                re.compile(_strip_regex_delimiters(pred.raw)[0])
            except re.error as exc:
                out.append(Diagnostic(f"{name} pattern does not compile: {exc}", sig.id, name))
    for spec in sig.listener_data:
        _validate_common(sig.id, SignatureKind.STRING, spec.type_det, spec.sanitizer,
                         spec.config, spec.end_points, spec.end_point_positions, out)
        if not spec.end_points:
            out.append(Diagnostic("listener endPoints must be nonempty", sig.id, "listenerData"))
        if not _HTTP_TOKEN.fullmatch(spec.listener_method):
            out.append(Diagnostic(f"listenerMethod {spec.listener_method!r} is not a valid HTTP token",
                                  sig.id, "listenerData"))
    return ValidationReport(tuple(out))


def validate_database(db: SignatureDatabase) -> ValidationReport:
    """Database-level checks plus validate_signature over every entry."""
    out: list[Diagnostic] = []
    seen: dict[str, int] = {}
    for idx, sig in enumerate(db.signatures):
        if sig.id in seen:
            out.append(Diagnostic(f"duplicate signature id {sig.id!r} (entries {seen[sig.id]} and {idx})",
                                  sig.id, "id"))
        else:
            seen[sig.id] = idx
    probe_tokens = {p.software_token for p in db.probes}
    for sig in db.signatures:
        if sig.software is not None and sig.software not in probe_tokens:
            out.append(Diagnostic(f"software {sig.software!r} has no probe in the database",
                                  sig.id, "software"))
        out.extend(validate_signature(sig).diagnostics)
    return ValidationReport(tuple(out))


__all__ = [
    "DatabaseError", "DatabaseSyntaxError", "DatabaseSemanticError",
    "Occurrence", "Uniqueness", "SignatureKind", "SanitizerMethod",
    "MalformationAction", "VersionOrder", "compare_versions", "version_is_vulnerable",
    "TextPredicate", "EndpointPair", "TypeDet", "ListenerSpec", "Signature",
    "ProbeDefinition", "SignatureDatabase", "Diagnostic", "ValidationReport",
    "parse_database", "load_database_with_diagnostics", "load_database",
    "serialize_database", "validate_signature", "validate_database",
    "validate_purify_config",
]
