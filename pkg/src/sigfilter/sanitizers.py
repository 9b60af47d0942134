"""The three sanitization methods and fragment splicing.

"purify" is a self-contained allowlist HTML fragment cleaner built on a
forgiving tokenizer: anything that does not parse as a complete construct
is escaped rather than guessed, disallowed script/style elements are
dropped with their raw content, other disallowed elements are unwrapped
(their children kept), event-handler attributes and unsafe URI schemes
never survive. "escape" entity-escapes characters (a default table, or
exactly the characters matched by a config charset regex). "regex" keeps
a fragment that fully matches the configured pattern and replaces it with
the empty string otherwise.

All three are total functions over arbitrary text. Purify and the regex
matcher are idempotent/projections by construction; the fuzz suite holds
them to that.
"""

from __future__ import annotations

import html
import logging
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .model import SanitizerMethod, validate_purify_config

logger = logging.getLogger(__name__)

_TAG_NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9.:_-]*")
_ATTR_RE = re.compile(
    r"\s*([^\s>/=]+)"                                    # attribute name
    r"(?:\s*=\s*(\"([^\"]*)\"|'([^']*)'|([^\s>]+)))?"    # optional value
)
_TAG_CLOSE_RE = re.compile(r"\s*(/?)\s*>")
_END_TAG_RE = re.compile(r"</([a-zA-Z][a-zA-Z0-9.:_-]*)[^>]*>")
_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)
_DECL_RE = re.compile(r"<![^>]*>", re.DOTALL)
_PI_RE = re.compile(r"<\?[^>]*>", re.DOTALL)

# Entity lead-ins that must not be double-escaped.
_ENTITY_LEADIN_RE = re.compile(r"&(?=(?:#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z][a-zA-Z0-9]*);)")
_SCHEME_RE = re.compile(r"([a-zA-Z][a-zA-Z0-9+.\-]*):")
_CONTROL_CHARS_RE = re.compile(r"[\x00-\x20\x7f]+")

# Raw-content elements whose subtree is dropped when the element is not
# allowed; everything else disallowed is merely unwrapped.
_RAWTEXT_DROP = frozenset({"script", "style"})

_URL_ATTRIBUTES = frozenset({"href", "src", "cite", "action", "formaction", "background"})

DEFAULT_ALLOWED_ELEMENTS = frozenset("""
    a abbr acronym address b bdi bdo big blockquote br caption center cite code
    col colgroup dd del details dfn div dl dt em figcaption figure footer
    h1 h2 h3 h4 h5 h6 header hr i img ins kbd li main mark nav ol p pre q s
    samp section small span strike strong sub summary sup table tbody td tfoot
    th thead time tr tt u ul var wbr
""".split())

DEFAULT_ALLOWED_ATTRIBUTES = frozenset("""
    abbr align alt axis border cellpadding cellspacing char charoff charset
    cite class colspan datetime dir for headers height href hreflang id lang
    name nowrap rel rev rowspan scope span src start summary tabindex target
    title type valign value width
""".split())

DEFAULT_URI_SCHEMES = frozenset({"http", "https", "mailto", "ftp", "tel"})


@dataclass(frozen=True)
class PurifyPolicy:
    """Allowlist policy for the purify sanitizer.

    Hard floors are applied on construction: script can never be an allowed
    element, on* attributes can never be allowed, and javascript/vbscript/
    data can never be accepted URI schemes.
    """

    allowed_elements: frozenset[str] = DEFAULT_ALLOWED_ELEMENTS
    allowed_attributes: frozenset[str] = DEFAULT_ALLOWED_ATTRIBUTES
    uri_schemes: frozenset[str] = DEFAULT_URI_SCHEMES

    def __post_init__(self):
        elements = frozenset(e.lower() for e in self.allowed_elements) - {"script"}
        attributes = frozenset(a.lower() for a in self.allowed_attributes
                               if not a.lower().startswith("on"))
        schemes = frozenset(s.lower() for s in self.uri_schemes) - {"javascript", "vbscript", "data"}
        object.__setattr__(self, "allowed_elements", elements)
        object.__setattr__(self, "allowed_attributes", attributes)
        object.__setattr__(self, "uri_schemes", schemes)


DEFAULT_POLICY = PurifyPolicy()


def policy_from_config(config: str | None, base: PurifyPolicy = DEFAULT_POLICY) -> PurifyPolicy:
    """Apply the ALLOWED_TAGS / ALLOWED_ATTR / FORBID_TAGS mini-grammar to a
    base policy. Raises ValueError on a malformed config string."""
    if config is None or not config.strip():
        return base
    validate_purify_config(config)
    elements = base.allowed_elements
    attributes = base.allowed_attributes
    for entry in config.split(";"):
        entry = entry.strip()
        if not entry:
            continue
        key, _, value = entry.partition("=")
        names = frozenset(v.strip().lower() for v in value.split(",") if v.strip())
        key = key.strip()
        if key == "ALLOWED_TAGS":
            elements = names
        elif key == "ALLOWED_ATTR":
            attributes = names
        elif key == "FORBID_TAGS":
            elements = elements - names
    return PurifyPolicy(allowed_elements=elements, allowed_attributes=attributes,
                        uri_schemes=base.uri_schemes)


def _read_start_tag(fragment: str, pos: int):
    """Parse a start tag at fragment[pos] == '<'. Returns
    (name, attrs, self_closing, end_pos) or None if not a complete tag."""
    name_match = _TAG_NAME_RE.match(fragment, pos + 1)
    if name_match is None:
        return None
    name = name_match.group(0)
    cursor = name_match.end()
    attrs: list[tuple[str, str | None]] = []
    while True:
        attr_match = _ATTR_RE.match(fragment, cursor)
        if attr_match is None or attr_match.end() == cursor:
            break
        attr_name = attr_match.group(1)
        if attr_match.group(2) is None:
            value = None
        else:
            value = next(g for g in (attr_match.group(3), attr_match.group(4),
                                     attr_match.group(5)) if g is not None)
        attrs.append((attr_name, value))
        cursor = attr_match.end()
    close_match = _TAG_CLOSE_RE.match(fragment, cursor)
    if close_match is None:
        return None
    return name, attrs, bool(close_match.group(1)), close_match.end()


def _uri_scheme_allowed(value: str, schemes: frozenset[str]) -> bool:
    decoded = html.unescape(value)
    cleaned = _CONTROL_CHARS_RE.sub("", decoded)
    scheme_match = _SCHEME_RE.match(cleaned)
    if scheme_match is None:
        return True
    return scheme_match.group(1).lower() in schemes


def _escape_attr_value(value: str) -> str:
    return value.replace('"', "&quot;").replace("<", "&lt;").replace(">", "&gt;")


def _serialize_tag(name: str, attrs: Iterable[tuple[str, str | None]],
                   self_closing: bool, policy: PurifyPolicy) -> str:
    parts = ["<", name]
    for attr_name, value in attrs:
        lowered = attr_name.lower()
        if lowered.startswith("on") or lowered not in policy.allowed_attributes:
            continue
        if value is not None and lowered in _URL_ATTRIBUTES:
            if not _uri_scheme_allowed(value, policy.uri_schemes):
                continue
        if value is None:
            parts.append(f" {lowered}")
        else:
            parts.append(f' {lowered}="{_escape_attr_value(value)}"')
    parts.append("/>" if self_closing else ">")
    return "".join(parts)


def _purify(fragment: str, policy: PurifyPolicy) -> str:
    out: list[str] = []
    pos = 0
    length = len(fragment)
    while pos < length:
        lt = fragment.find("<", pos)
        if lt < 0:
            out.append(fragment[pos:])
            break
        out.append(fragment[pos:lt])
        nxt = fragment[lt + 1] if lt + 1 < length else ""
        if nxt == "!":
            match = _COMMENT_RE.match(fragment, lt) or _DECL_RE.match(fragment, lt)
            if match is not None:
                pos = match.end()  # comments and declarations are dropped
                continue
        elif nxt == "?":
            match = _PI_RE.match(fragment, lt)
            if match is not None:
                pos = match.end()
                continue
        elif nxt == "/":
            match = _END_TAG_RE.match(fragment, lt)
            if match is not None:
                name = match.group(1).lower()
                if name in policy.allowed_elements:
                    out.append(f"</{name}>")
                pos = match.end()
                continue
        elif nxt.isalpha():
            parsed = _read_start_tag(fragment, lt)
            if parsed is not None:
                name, attrs, self_closing, end_pos = parsed
                name = name.lower()
                if name in _RAWTEXT_DROP and name not in policy.allowed_elements:
                    close = re.search(rf"</{name}\b[^>]*>", fragment[end_pos:], re.IGNORECASE)
                    pos = end_pos + (close.end() if close else length)
                    continue
                if name in policy.allowed_elements:
                    out.append(_serialize_tag(name, attrs, self_closing, policy))
                pos = end_pos
                continue
        # Not a complete construct: escape the bracket and rescan after it.
        out.append("&lt;")
        pos = lt + 1
    return "".join(out)


def sanitize_purify(fragment: str, policy: PurifyPolicy | None = None) -> str:
    """Allowlist-clean an HTML fragment. Total: a catastrophic failure of
    the cleaner falls back to fully entity-escaped output."""
    active = policy if policy is not None else DEFAULT_POLICY
    try:
        return _purify(fragment, active)
    except Exception:
        logger.exception("purify failed; emitting fully escaped fragment")
        return html.escape(fragment, quote=True)


_ESCAPE_TABLE = {"&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#x27;"}


def _escape_char(ch: str) -> str:
    return _ESCAPE_TABLE.get(ch) or f"&#x{ord(ch):x};"


def sanitize_escape(fragment: str, config: str | re.Pattern | None = None) -> str:
    """Entity-escape a fragment. Without config the default table covers
    & < > " '; with config, exactly the characters matched by the charset
    regex are escaped."""
    if config is None:
        return html.escape(fragment, quote=True)
    if isinstance(config, str):
        raw = config[1:-1] if len(config) >= 2 and config.startswith("/") and config.endswith("/") else config
        pattern = re.compile(raw)
    else:
        pattern = config
    return "".join(_escape_char(ch) if pattern.fullmatch(ch) else ch for ch in fragment)


def sanitize_regex_match(fragment: str, pattern: str | re.Pattern) -> str:
    """Full-match validation: the fragment survives untouched when it fully
    matches the pattern and is removed (empty string) otherwise."""
    if isinstance(pattern, str):
        raw = pattern[1:-1] if len(pattern) >= 2 and pattern.startswith("/") and pattern.endswith("/") else pattern
        pattern = re.compile(raw)
    return fragment if pattern.fullmatch(fragment) is not None else ""


@dataclass(frozen=True)
class SanitizerChoice:
    """Which sanitization method to apply, plus its configuration string."""

    method: SanitizerMethod
    config: str | None = None


# Restrictiveness of surviving content, used to pick a winner when spans
# from different signatures overlap.
STRICTNESS = {
    SanitizerMethod.REGEX: 3,
    SanitizerMethod.ESCAPE: 2,
    SanitizerMethod.PURIFY: 1,
}


def make_sanitizer(choice: SanitizerChoice) -> Callable[[str], str]:
    """Build the fragment->fragment function for a sanitizer choice."""
    if choice.method is SanitizerMethod.PURIFY:
        policy = policy_from_config(choice.config)
        return lambda fragment: sanitize_purify(fragment, policy)
    if choice.method is SanitizerMethod.ESCAPE:
        if choice.config is None:
            return lambda fragment: sanitize_escape(fragment)
        raw = choice.config
        pattern = re.compile(raw[1:-1] if raw.startswith("/") and raw.endswith("/") and len(raw) >= 2 else raw)
        return lambda fragment: sanitize_escape(fragment, pattern)
    if choice.config is None:
        raise ValueError("regex sanitizer requires config")
    raw = choice.config
    pattern = re.compile(raw[1:-1] if raw.startswith("/") and raw.endswith("/") and len(raw) >= 2 else raw)
    return lambda fragment: sanitize_regex_match(fragment, pattern)


def _check_spans(spans: Sequence) -> None:
    previous_end = None
    for span in spans:
        if span.content_start > span.content_end:
            raise ValueError("negative span")
        if previous_end is not None and span.content_start < previous_end:
            raise ValueError("spans must be disjoint and sorted")
        previous_end = span.content_end


def splice_with(doc: str, pieces: Sequence[tuple]) -> str:
    """Replace each (span, sanitize_fn) span's content with its sanitized
    form, right-to-left so earlier offsets stay valid. Text outside the
    spans is preserved exactly."""
    _check_spans([span for span, _ in pieces])
    result = doc
    for span, sanitize_fn in reversed(list(pieces)):
        start, end = span.content_start, span.content_end
        result = result[:start] + sanitize_fn(result[start:end]) + result[end:]
    return result


def splice(doc: str, spans: Sequence, choice: SanitizerChoice) -> str:
    """Splice all spans with a single sanitizer choice."""
    sanitize_fn = make_sanitizer(choice)
    return splice_with(doc, [(span, sanitize_fn) for span in spans])


__all__ = [
    "PurifyPolicy", "DEFAULT_POLICY", "DEFAULT_ALLOWED_ELEMENTS",
    "DEFAULT_ALLOWED_ATTRIBUTES", "DEFAULT_URI_SCHEMES", "policy_from_config",
    "sanitize_purify", "sanitize_escape", "sanitize_regex_match",
    "SanitizerChoice", "STRICTNESS", "make_sanitizer", "splice", "splice_with",
]
