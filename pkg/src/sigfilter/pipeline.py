"""End-to-end response filtering and XHR listener sessions.

verify_response runs the whole network-filter flow over one top-level
document: fingerprint the page, keep the signatures whose predicates and
version gate pass, resolve their endpoint pairs into injection spans, and
splice sanitized content back in. A signature whose markers are malformed
either widens (sanitize between the outermost markers) or blocks the
response, per its onMalformation choice; a blocking signature dominates
everything else. Matched signatures' listenerData is handed back so the
caller can arm XHR listeners for the session; subresponses then go through
filter_subresponse with the same span machinery but no probing or version
gating (the parent page already passed those).

The pipeline consumes and produces document text. It never builds a
browser-normalized DOM of the full document: parsing would re-arrange
misplaced elements before sanitization and move injected content out of
the region a signature pins down.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Iterable, Sequence

from .model import (
    ListenerSpec,
    ProbeDefinition,
    SanitizerMethod,
    Signature,
    SignatureDatabase,
    MalformationAction,
)
from .probes import PageIdentity, load_versions, run_probes, signature_applies
from .sanitizers import STRICTNESS, SanitizerChoice, make_sanitizer, splice_with
from .scanner import InjectionSpan, resolve_spans

logger = logging.getLogger(__name__)

DEFAULT_SESSION_TTL = 30 * 60.0


class Verdict(str, Enum):
    CLEAN = "Clean"
    SANITIZED = "Sanitized"
    BLOCKED = "Blocked"


@dataclass(frozen=True)
class SpanRecord:
    start: int
    end: int
    widened: bool


@dataclass(frozen=True)
class SignatureReport:
    signature_id: str
    sanitizer: SanitizerMethod
    spans: tuple[SpanRecord, ...]
    widened: bool


@dataclass(frozen=True)
class FilterOutcome:
    """Result for one response: Clean (byte-identical body), Sanitized
    (rewritten body plus span report), or Blocked (no body, a reason)."""

    verdict: Verdict
    body: str | None
    report: tuple[SignatureReport, ...] = ()
    block_reason: str | None = None


@dataclass(frozen=True)
class ActiveListener:
    """A listener spec armed by a matched top-level signature."""

    parent_signature_id: str
    spec: ListenerSpec


class SessionStore:
    """Shared mutable session state: page key -> armed listeners with TTL.

    Operations are atomic per key; there are no cross-key ordering
    guarantees. Keys are opaque hashables (the proxy uses
    (client, page-url-without-query) tuples).
    """

    def __init__(self, ttl_seconds: float = DEFAULT_SESSION_TTL,
                 clock: Callable[[], float] = time.monotonic):
        self._ttl = ttl_seconds
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: dict[Hashable, tuple[float, tuple[ActiveListener, ...]]] = {}

    def register(self, key: Hashable, listeners: Iterable[ActiveListener]) -> None:
        """Arm listeners for a key, replacing any prior entry. Registering
        an empty collection leaves the store unchanged."""
        armed = tuple(listeners)
        if not armed:
            return
        with self._lock:
            self._entries[key] = (self._clock(), armed)

    def get(self, key: Hashable) -> tuple[ActiveListener, ...]:
        now = self._clock()
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                return ()
            created_at, armed = entry
            if now - created_at > self._ttl:
                del self._entries[key]
                return ()
            return armed

    def active_items(self) -> list[tuple[Hashable, tuple[ActiveListener, ...]]]:
        now = self._clock()
        with self._lock:
            expired = [k for k, (t, _) in self._entries.items() if now - t > self._ttl]
            for key in expired:
                del self._entries[key]
            return list(self._entries.items())

    def __len__(self) -> int:
        return len(self.active_items())


def register_listeners(store: SessionStore, key: Hashable,
                       listeners: Iterable[ActiveListener]) -> None:
    """Arm a matched page's listeners for later subresponses (TTL applies;
    re-registration replaces the prior entry)."""
    store.register(key, listeners)


@dataclass(frozen=True)
class _Work:
    """One scannable unit: a matched signature or an armed listener spec."""

    report_id: str
    scannable: object  # Signature or ListenerSpec
    sanitizer: SanitizerMethod
    config: str | None
    on_malformation: MalformationAction


def _blocked(reason: str, report: Sequence[SignatureReport]) -> FilterOutcome:
    return FilterOutcome(verdict=Verdict.BLOCKED, body=None,
                         report=tuple(report), block_reason=reason)


def _merge_contributions(
        contributions: list[tuple[InjectionSpan, SanitizerChoice]],
) -> list[tuple[InjectionSpan, Callable[[str], str]]]:
    """Union overlapping spans from different signatures; the strictest
    sanitizer (regex > escape > purify) wins for a merged region."""
    if not contributions:
        return []
    ordered = sorted(contributions, key=lambda c: (c[0].content_start, c[0].content_end))
    merged: list[list] = []  # [start, end, widened, choice]
    for span, choice in ordered:
        if merged and span.content_start < merged[-1][1]:
            entry = merged[-1]
            entry[1] = max(entry[1], span.content_end)
            entry[2] = entry[2] or span.widened
            if STRICTNESS[choice.method] > STRICTNESS[entry[3].method]:
                entry[3] = choice
            elif STRICTNESS[choice.method] == STRICTNESS[entry[3].method] and choice != entry[3]:
                logger.warning("overlapping spans with equally strict sanitizers; keeping %s",
                               entry[3])
        else:
            merged.append([span.content_start, span.content_end, span.widened, choice])
    return [
        (InjectionSpan(pair_index=0, content_start=start, content_end=end, widened=widened),
         make_sanitizer(choice))
        for start, end, widened, choice in merged
    ]


def _filter_body(body: str, work_items: Sequence[_Work]) -> FilterOutcome:
    reports: list[SignatureReport] = []
    contributions: list[tuple[InjectionSpan, SanitizerChoice]] = []
    for work in work_items:
        try:
            spans, malformation = resolve_spans(body, work.scannable)
        except Exception:
            logger.exception("scan failed for matched signature %s; failing closed", work.report_id)
            return _blocked(f"scan error in signature {work.report_id}", reports)
        if not malformation.ordered and work.on_malformation is MalformationAction.BLOCK:
            reports.append(SignatureReport(work.report_id, work.sanitizer, (), False))
            return _blocked(f"malformed endpoint markers for signature {work.report_id}", reports)
        choice = SanitizerChoice(work.sanitizer, work.config)
        records = tuple(SpanRecord(s.content_start, s.content_end, s.widened) for s in spans)
        reports.append(SignatureReport(work.report_id, work.sanitizer, records,
                                       any(s.widened for s in spans)))
        contributions.extend((span, choice) for span in spans)
    try:
        result = splice_with(body, _merge_contributions(contributions))
    except Exception:
        logger.exception("splice failed; failing closed")
        ids = ", ".join(w.report_id for w in work_items)
        return _blocked(f"sanitization error for signature(s) {ids}", reports)
    verdict = Verdict.SANITIZED if result != body else Verdict.CLEAN
    return FilterOutcome(verdict=verdict, body=result, report=tuple(reports))


def verify_response(
        body: str,
        url: str,
        db: SignatureDatabase,
        probes: Sequence[ProbeDefinition] | None = None,
) -> tuple[FilterOutcome, tuple[ActiveListener, ...]]:
    """Filter one top-level document.

    Returns the outcome plus the armed listeners of every matched
    signature (empty when the verdict is Blocked: a blocked page never
    renders, so nothing should listen on its behalf).
    """
    active_probes = db.probes if probes is None else tuple(probes)
    try:
        identity = run_probes(body, url, active_probes)
        identity = load_versions(body, url, active_probes, identity)
    except Exception:
        logger.exception("probing failed; continuing with an empty page identity")
        identity = PageIdentity()

    matched: list[Signature] = []
    for sig in db.signatures_for(identity.frameworks):
        try:
            if signature_applies(sig, body, url, identity):
                matched.append(sig)
        except Exception:
            logger.exception("applicability check failed for signature %s; skipping it", sig.id)

    work_items = [
        _Work(report_id=sig.id, scannable=sig, sanitizer=sig.sanitizer,
              config=sig.config, on_malformation=sig.on_malformation)
        for sig in matched if sig.end_points
    ]
    outcome = _filter_body(body, work_items)
    if outcome.verdict is Verdict.BLOCKED:
        return outcome, ()
    listeners = tuple(ActiveListener(sig.id, spec)
                      for sig in matched for spec in sig.listener_data)
    return outcome, listeners


def filter_subresponse(
        body: str,
        method: str,
        url: str,
        store: SessionStore,
        key: Hashable,
) -> FilterOutcome:
    """Filter a subresponse (e.g. an XHR body) against the listeners armed
    for a session key. No probing or version gating happens here; the
    parent page already passed both. With no matching listener the body
    passes through untouched."""
    selected = [
        listener for listener in store.get(key)
        if listener.spec.method_matches(method) and listener.spec.listener_url.matches(url)
    ]
    if not selected:
        return FilterOutcome(verdict=Verdict.CLEAN, body=body)
    work_items = [
        _Work(report_id=listener.parent_signature_id, scannable=listener.spec,
              sanitizer=listener.spec.sanitizer, config=listener.spec.config,
              on_malformation=listener.spec.on_malformation)
        for listener in selected
    ]
    return _filter_body(body, work_items)


__all__ = [
    "Verdict", "SpanRecord", "SignatureReport", "FilterOutcome",
    "ActiveListener", "SessionStore", "DEFAULT_SESSION_TTL",
    "register_listeners", "verify_response", "filter_subresponse",
]
