import itertools
import logging
import re
from dataclasses import dataclass

import pytest

from sigfilter.model import (
    EndpointPair,
    MalformationAction,
    Occurrence,
    TypeDet,
    Uniqueness,
)
from sigfilter.scanner import (
    InjectionSpan,
    MarkerEvent,
    MarkerKind,
    check_order,
    resolve_spans,
    scan_markers,
)

SU = TypeDet(Occurrence.SINGLE, Uniqueness.UNIQUE)
SS = TypeDet(Occurrence.SINGLE, Uniqueness.SEVERAL)
MU = TypeDet(Occurrence.MULTIPLE, Uniqueness.UNIQUE)
MS = TypeDet(Occurrence.MULTIPLE, Uniqueness.SEVERAL)


@dataclass
class ScanSig:
    end_points: tuple
    type_det: TypeDet = SU
    end_point_positions: tuple | None = None
    on_malformation: MalformationAction = MalformationAction.BLOCK


def pairs(*raw_pairs):
    return tuple(EndpointPair.compile(s, e) for s, e in raw_pairs)


# --- scan_markers -------------------------------------------------------------

INFECTED_SNIPPET = (
    '<input id="rcc_settings[border-size]"\n'
    'name="rcc-settings[border-size]"\n'
    'type="text" value=""><script>alert(\'XSS\')</script>\n'
    '<label class="description"\n'
    'for="rcc_settings[border-size]">'
)

LISTING_PAIR = pairs((
    r'<input id="rcc_settings\[border-size\]"\s+name="rcc[-_]settings\[border-size\]"\s+type="text" value="',
    r'<label class="description"\s+for="rcc_settings\[border-size\]">',
))


def test_scan_markers_infected_snippet():
    events = scan_markers(INFECTED_SNIPPET, ScanSig(LISTING_PAIR))
    kinds = [e.kind for e in events]
    assert kinds == [MarkerKind.START, MarkerKind.END]
    start, end = events
    assert INFECTED_SNIPPET[start.match_end:end.match_start] == "\"><script>alert('XSS')</script>\n"


def test_scan_markers_no_pattern_matches():
    assert scan_markers("<html>nothing here</html>", ScanSig(LISTING_PAIR)) == []


def test_scan_markers_zero_length_gap():
    sig = ScanSig(pairs(("START:", ":END")))
    events = scan_markers("xx START::END yy", sig)
    assert len(events) == 2
    spans, report = resolve_spans("xx START::END yy", sig)
    assert report.ordered
    assert spans == [InjectionSpan(0, 9, 9, widened=False)]


def test_scan_markers_drops_empty_matches():
    sig = ScanSig(pairs(("x*", "zz")))
    events = scan_markers("a xx b zz", sig)
    assert [(e.kind, e.match_start, e.match_end) for e in events] == [
        (MarkerKind.START, 2, 4), (MarkerKind.END, 7, 9)]


def test_scan_markers_missing_endpoint_skips_pair(caplog):
    sig = ScanSig(pairs(("present", "absent-token")))
    with caplog.at_level(logging.WARNING, logger="sigfilter.scanner"):
        events = scan_markers("present only", sig)
    assert events == []
    assert any("zero matches" in r.message for r in caplog.records)


# --- check_order: spec examples -----------------------------------------------

def _events(symbols):
    """Build an event list from symbols like 'S0', 'E1' at increasing offsets."""
    events = []
    for i, symbol in enumerate(symbols):
        kind = MarkerKind.START if symbol[0] == "S" else MarkerKind.END
        events.append(MarkerEvent(kind, int(symbol[1:]), i * 10, i * 10 + 5))
    return events


def test_check_order_fig3b_fake_pair_injected():
    # One real pair; the attacker injected a fake end + fake start inside it,
    # so the same-pair markers read S E S E.
    report = check_order(_events(["S0", "E0", "S0", "E0"]), MS)
    assert not report.ordered
    assert len(report.violations) == 2


def test_check_order_two_distinct_pairs_in_order():
    report = check_order(_events(["S0", "E0", "S1", "E1"]), MU)
    assert report.ordered
    assert report.violations == ()


def test_check_order_fig4_extra_closing_bracket():
    # An extra closing marker right after the opening one.
    events = _events(["S0", "E0", "E0", "S1", "E1"])
    report = check_order(events, MU)
    assert not report.ordered
    assert report.violations[0][1] == events[2]


def test_check_order_empty_events():
    assert check_order([], SU).ordered


# --- exhaustive automaton agreement (acceptance criterion 3 property) ----------

def _brute_accepts(symbols):
    """Independent acceptor: the sequence must equal the canonical
    alternation start(p) end(p) for the pairs present, in pair order."""
    present = sorted({int(s[1:]) for s in symbols})
    canonical = []
    for p in present:
        canonical += [f"S{p}", f"E{p}"]
    return list(symbols) == canonical


def test_automaton_agrees_with_brute_force_single_pair():
    alphabet = ["S0", "E0"]
    for length in range(1, 9):
        for combo in itertools.product(alphabet, repeat=length):
            report = check_order(_events(combo), SU)
            assert report.ordered == _brute_accepts(combo), combo


def test_automaton_agrees_with_brute_force_two_pairs():
    alphabet = ["S0", "E0", "S1", "E1"]
    for length in range(1, 9):
        for combo in itertools.product(alphabet, repeat=length):
            report = check_order(_events(combo), MU)
            assert report.ordered == _brute_accepts(combo), combo


def test_automaton_doc_level_agreement_single_pair():
    sig = ScanSig(pairs(("AAAA", "BBBB")), type_det=MS)
    for length in range(1, 9):
        for combo in itertools.product(["S0", "E0"], repeat=length):
            doc = "..".join("AAAA" if s == "S0" else "BBBB" for s in combo)
            events = scan_markers(doc, sig)
            # A pair missing one of its patterns contributes no markers.
            expected = list(combo) if {"S0", "E0"} <= set(combo) else []
            assert [("S0" if e.kind is MarkerKind.START else "E0") for e in events] == expected
            assert check_order(events, MS).ordered == _brute_accepts(expected)


# --- resolve_spans ---------------------------------------------------------------

def test_resolve_two_pairs_six_slot_brute_force():
    """Place S0,E0,S1,E1 into 4 of 6 slots in every order; a brute-force
    oracle computes expected gaps from literal string positions."""
    markers = {"S0": "<<S0>>", "E0": "<<E0>>", "S1": "<<S1>>", "E1": "<<E1>>"}
    fillers = ["f1", "f2f2", "g3"]
    sig = ScanSig(pairs((re.escape(markers["S0"]), re.escape(markers["E0"])),
                        (re.escape(markers["S1"]), re.escape(markers["E1"]))),
                  type_det=MU, on_malformation=MalformationAction.BLOCK)
    for slot_indexes in itertools.combinations(range(6), 4):
        for order in itertools.permutations(["S0", "E0", "S1", "E1"]):
            slots = []
            filler_iter = iter(fillers)
            placed = dict(zip(slot_indexes, order))
            for i in range(6):
                slots.append(markers[placed[i]] if i in placed else next(filler_iter))
            doc = " ".join(slots)
            expected_ordered = list(order) == ["S0", "E0", "S1", "E1"]
            spans, report = resolve_spans(doc, sig)
            assert report.ordered == expected_ordered, (order, doc)
            if expected_ordered:
                gap0 = (doc.find(markers["S0"]) + 6, doc.find(markers["E0"]))
                gap1 = (doc.find(markers["S1"]) + 6, doc.find(markers["E1"]))
                assert [(s.content_start, s.content_end, s.widened) for s in spans] == [
                    (*gap0, False), (*gap1, False)]
            else:
                assert spans == []


def test_resolve_single_unique_first_start_last_end_invariant():
    # Independent find-all oracle for the (single, unique) span rule,
    # exercised through the widen path when the page is malformed.
    sig = ScanSig(pairs(("OPEN", "SHUT")), type_det=SU,
                  on_malformation=MalformationAction.WIDEN)
    doc = "x OPEN a SHUT b OPEN c SHUT y"
    starts = [m.end() for m in re.finditer("OPEN", doc)]
    ends = [m.start() for m in re.finditer("SHUT", doc)]
    spans, report = resolve_spans(doc, sig)
    assert not report.ordered
    assert spans == [InjectionSpan(0, starts[0], ends[-1], widened=True)]


def test_resolve_single_several_without_positions_takes_outermost():
    sig = ScanSig(pairs(("OPEN", "SHUT")), type_det=SS)
    doc = "x OPEN a SHUT b SHUT y"
    spans, report = resolve_spans(doc, sig)
    assert report.ordered  # repeats are expected for 'several'
    assert spans == [InjectionSpan(0, doc.find("OPEN") + 4, doc.rfind("SHUT"), widened=False)]


def test_resolve_positions_count_from_top_and_bottom():
    # Appendix-style page: the end marker appears 10 times; the real one is
    # the 4th from the top, i.e. the 7th from the bottom.
    sig = ScanSig(pairs(("BEGIN", "<h3>")), type_det=SS,
                  end_point_positions=((1, 7),))
    parts = ["BEGIN"] + ["<h3>"] * 10
    doc = " pad ".join(parts)
    ends = [m.start() for m in re.finditer("<h3>", doc)]
    spans, report = resolve_spans(doc, sig)
    assert report.ordered
    assert spans[0].content_end == ends[3]  # 4th from the top

    # Attacker injects three extra copies inside the gap: the bottom-up
    # ordinal still lands on the real marker.
    attacked = doc.replace("BEGIN pad ", "BEGIN <h3> <h3> <h3> pad ", 1)
    ends_attacked = [m.start() for m in re.finditer("<h3>", attacked)]
    spans2, report2 = resolve_spans(attacked, sig)
    assert report2.ordered
    assert spans2[0].content_end == ends_attacked[len(ends_attacked) - 7]
    assert attacked[spans2[0].content_end:].startswith("<h3>")
    # and it is the same physical marker as before the attack
    assert ends_attacked[len(ends_attacked) - 7] - ends[3] == len("<h3> <h3> <h3> ")


def test_resolve_positions_exceeding_matches_skip_pair(caplog):
    sig = ScanSig(pairs(("BEGIN", "END")), type_det=SS, end_point_positions=((1, 5),))
    with caplog.at_level(logging.WARNING, logger="sigfilter.scanner"):
        spans, report = resolve_spans("BEGIN x END", sig)
    assert spans == [] and report.ordered
    assert any("exceeds match counts" in r.message for r in caplog.records)


def test_resolve_widen_containment_enumeration():
    """Widened span contains every same-pair (start, end) gap under any
    subsequence interpretation; enumerated over marker strings <= 8."""
    sig = ScanSig(pairs(("QQ", "WW")), type_det=MS,
                  on_malformation=MalformationAction.WIDEN)
    for length in range(1, 9):
        for combo in itertools.product("QW", repeat=length):
            doc = "-" + "--".join("QQ" if c == "Q" else "WW" for c in combo) + "-"
            spans, report = resolve_spans(doc, sig)
            if not any(s.widened for s in spans):
                continue
            widened = spans[0]
            starts = [m for m in re.finditer("QQ", doc)]
            ends = [m for m in re.finditer("WW", doc)]
            for s, e in itertools.product(starts, ends):
                if s.end() <= e.start():
                    assert widened.content_start <= s.end()
                    assert widened.content_end >= e.start()


def test_resolve_overlapping_markers_is_malformation():
    sig = ScanSig(pairs(("abcde", "cd")), type_det=SU,
                  on_malformation=MalformationAction.BLOCK)
    spans, report = resolve_spans("abcde", sig)
    assert spans == []
    assert not report.ordered


def test_resolve_widen_impossible_yields_no_span(caplog):
    # End markers only before the start: no injection reading exists.
    sig = ScanSig(pairs(("OPEN", "SHUT")), type_det=SU,
                  on_malformation=MalformationAction.WIDEN)
    with caplog.at_level(logging.WARNING, logger="sigfilter.scanner"):
        spans, report = resolve_spans("a SHUT b OPEN c", sig)
    assert spans == []
    assert not report.ordered


def test_spans_never_overlap_marker_matches():
    sig = ScanSig(pairs(("OPEN", "SHUT")), type_det=SU)
    doc = "x OPEN gap SHUT y"
    spans, _ = resolve_spans(doc, sig)
    (span,) = spans
    for m in itertools.chain(re.finditer("OPEN", doc), re.finditer("SHUT", doc)):
        assert span.content_end <= m.start() or span.content_start >= m.end()


def test_marker_event_invariant():
    with pytest.raises(ValueError):
        MarkerEvent(MarkerKind.START, 0, 5, 5)
