"""Injection-span resolution: the top-down, bottom-up endpoint scan.

A signature's endpoint pairs delimit where dynamic content may appear in
the raw document text. This module finds every marker (a regex match of a
start or end pattern), checks the markers against the expected order, and
turns them into half-open character spans to sanitize. Offsets are
character offsets into the decoded text, never byte offsets.

Marker selection per typeDet
----------------------------
*unique*    every non-empty match of every pattern is a marker.
*several*   the patterns legitimately occur more than once:
            - with endPointsPositions, pair i's markers are the
              startOrdinal-th start match counted from the document top
              and the endOrdinal-th end match counted from the bottom
              (ordinals are 1-based; counting ends bottom-up keeps the
              real marker stable when an attacker injects extra copies
              above it, and vice versa for starts);
            - single occurrence without positions: the first start match
              from the top and the last end match (first from the bottom);
            - multiple occurrence without positions: every match is a
              marker, which makes any repetition of a pair unverifiable
              (see below).

The order automaton
-------------------
After selection, the markers of every pair that is present on the page
must read, merged in document order:

    start(p0) end(p0) start(p1) end(p1) ...   for pairs p0 < p1 < ...

i.e. exactly one well-formed start/end instance per pair, pairs in
signature order. Any other arrangement is a malformation: an extra or
repeated marker, a start after an end, interleaving across pairs, or a
dangling start with no end after it. For repeating templates (multiple-
several) this deliberately rejects even a benign-looking alternation,
because injected fake markers are textually identical to real ones and
the instances cannot be told apart; the signature's onMalformation choice
then decides between widening and blocking.

A pattern with zero matches while its partner has some means the page
does not carry the expected template (a signature/page mismatch): the
pair contributes no markers and no span, and the mismatch is logged.

On malformation, "widen" sanitizes everything from the first start
marker's match end to the last end marker's match start; "block" yields
no spans and leaves the verdict to the pipeline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

from .model import (
    EndpointPair,
    MalformationAction,
    Occurrence,
    TypeDet,
    Uniqueness,
)

logger = logging.getLogger(__name__)


class MarkerKind(str, Enum):
    START = "start"
    END = "end"


@dataclass(frozen=True)
class MarkerEvent:
    """One start/end pattern match in the document."""

    kind: MarkerKind
    pair_index: int
    match_start: int
    match_end: int

    def __post_init__(self):
        if not self.match_start < self.match_end:
            raise ValueError("marker match must be non-empty")


@dataclass(frozen=True)
class InjectionSpan:
    """Half-open character range of potentially injected content: the gap
    between a start pattern's match end and an end pattern's match start."""

    pair_index: int
    content_start: int
    content_end: int
    widened: bool = False

    def __post_init__(self):
        if self.content_start > self.content_end:
            raise ValueError("span must not be negative")


@dataclass(frozen=True)
class MalformationReport:
    """Order-check result; ordered is True exactly when violations is empty."""

    ordered: bool
    violations: tuple[tuple[str, MarkerEvent], ...] = ()


class ScannableSignature(Protocol):
    """What the scanner needs from a signature; both Signature and
    ListenerSpec satisfy this."""

    type_det: TypeDet
    end_points: tuple[EndpointPair, ...]
    end_point_positions: tuple[tuple[int, int], ...] | None
    on_malformation: MalformationAction


def _nonempty_matches(pattern, doc: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in pattern.finditer(doc) if m.end() > m.start()]


def scan_markers(doc: str, sig: ScannableSignature) -> list[MarkerEvent]:
    """All selected markers of every endpoint pair, in document order."""
    events: list[MarkerEvent] = []
    type_det = sig.type_det
    for index, pair in enumerate(sig.end_points):
        starts = _nonempty_matches(pair.start, doc)
        ends = _nonempty_matches(pair.end, doc)
        if not starts and not ends:
            continue
        if not starts or not ends:
            missing = "start" if not starts else "end"
            logger.warning("endpoint pair %d: %s pattern has zero matches; skipping pair",
                           index, missing)
            continue
        if type_det.uniqueness is Uniqueness.SEVERAL:
            positions = sig.end_point_positions
            if positions is not None:
                s_ord, e_ord = positions[index]
                if s_ord > len(starts) or e_ord > len(ends):
                    logger.warning(
                        "endpoint pair %d: position (%d, %d) exceeds match counts (%d starts, %d ends); skipping pair",
                        index, s_ord, e_ord, len(starts), len(ends))
                    continue
                selected = [(MarkerKind.START, starts[s_ord - 1]),
                            (MarkerKind.END, ends[len(ends) - e_ord])]
            elif type_det.occurrence is Occurrence.SINGLE:
                selected = [(MarkerKind.START, starts[0]), (MarkerKind.END, ends[-1])]
            else:
                selected = [(MarkerKind.START, s) for s in starts] + [(MarkerKind.END, e) for e in ends]
        else:
            selected = [(MarkerKind.START, s) for s in starts] + [(MarkerKind.END, e) for e in ends]
        for kind, (m_start, m_end) in selected:
            events.append(MarkerEvent(kind, index, m_start, m_end))
    events.sort(key=lambda e: (e.match_start, e.match_end, e.kind is MarkerKind.END, e.pair_index))
    return events


def _expected_sequence(events: Sequence[MarkerEvent]) -> list[tuple[MarkerKind, int]]:
    active = sorted({e.pair_index for e in events})
    expected: list[tuple[MarkerKind, int]] = []
    for pair_index in active:
        expected.append((MarkerKind.START, pair_index))
        expected.append((MarkerKind.END, pair_index))
    return expected


def check_order(events: Sequence[MarkerEvent], type_det: TypeDet) -> MalformationReport:
    """Run the order automaton over markers in document order.

    The expectation (one start then one end per present pair, pairs in
    signature order) is the same for every typeDet once selection has been
    applied by scan_markers; the typeDet governs selection, not ordering.
    """
    del type_det  # selection already encoded the typeDet; kept for the contract
    expected = _expected_sequence(events)
    violations: list[tuple[str, MarkerEvent]] = []
    cursor = 0
    for event in events:
        if cursor < len(expected) and (event.kind, event.pair_index) == expected[cursor]:
            cursor += 1
            continue
        if cursor < len(expected):
            want_kind, want_pair = expected[cursor]
            violations.append((f"{want_kind.value}({want_pair})", event))
        else:
            violations.append(("end-of-markers", event))
    if cursor < len(expected) and not violations and events:
        # Defensive: every expected symbol has at least one event, so an
        # incomplete walk always left a violation behind; keep the
        # ordered<=>no-violations invariant anyway.
        want_kind, want_pair = expected[cursor]
        violations.append((f"{want_kind.value}({want_pair})", events[-1]))
    return MalformationReport(ordered=not violations, violations=tuple(violations))


def _widened_span(events: Sequence[MarkerEvent]) -> InjectionSpan | None:
    first_start = next((e for e in events if e.kind is MarkerKind.START), None)
    last_end = next((e for e in reversed(events) if e.kind is MarkerKind.END), None)
    if first_start is None or last_end is None:
        return None
    if last_end.match_start < first_start.match_end:
        return None
    return InjectionSpan(pair_index=first_start.pair_index,
                         content_start=first_start.match_end,
                         content_end=last_end.match_start,
                         widened=True)


def resolve_spans(doc: str, sig: ScannableSignature) -> tuple[list[InjectionSpan], MalformationReport]:
    """Resolve a signature's endpoint pairs against a document.

    Ordered markers yield one span per pair (the literal gap). Disordered
    markers follow the signature's onMalformation policy: "widen" returns
    a single span covering first start to last end, "block" returns no
    spans and a report whose ordered flag is False so the caller can block.
    """
    events = scan_markers(doc, sig)
    report = check_order(events, sig.type_det)
    if report.ordered:
        spans: list[InjectionSpan] = []
        crossing: MarkerEvent | None = None
        for start_event, end_event in zip(events[0::2], events[1::2]):
            if end_event.match_start < start_event.match_end:
                # Overlapping start/end matches cannot delimit a gap; treat
                # as malformation rather than guessing.
                crossing = end_event
                break
            spans.append(InjectionSpan(pair_index=start_event.pair_index,
                                       content_start=start_event.match_end,
                                       content_end=end_event.match_start))
        if crossing is None:
            return spans, report
        report = MalformationReport(ordered=False, violations=(("non-crossing end", crossing),))

    if sig.on_malformation is MalformationAction.WIDEN:
        span = _widened_span(events)
        if span is not None:
            return [span], report
        logger.warning("widening impossible (no end marker after the first start); "
                       "treating as signature/page mismatch")
        return [], report
    return [], report


__all__ = [
    "MarkerKind", "MarkerEvent", "InjectionSpan", "MalformationReport",
    "scan_markers", "check_order", "resolve_spans",
]
