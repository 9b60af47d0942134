import re

import pytest
from hypothesis import given, settings, strategies as st

from sigfilter.model import SanitizerMethod
from sigfilter.sanitizers import (
    DEFAULT_POLICY,
    PurifyPolicy,
    SanitizerChoice,
    make_sanitizer,
    policy_from_config,
    sanitize_escape,
    sanitize_purify,
    sanitize_regex_match,
    splice,
    splice_with,
)
from sigfilter.scanner import InjectionSpan

NUMERIC = re.compile(r"^[0-9](\.[0-9]+)?$")


# --- purify ---------------------------------------------------------------

def test_purify_drops_script_with_subtree():
    assert sanitize_purify("\"><script>alert('XSS')</script>") == '">'


def test_purify_keeps_clean_formatting():
    assert sanitize_purify("hello <b>world</b>") == "hello <b>world</b>"


def test_purify_strips_event_handler():
    assert sanitize_purify('<img src="1" onerror="alert(1)">') == '<img src="1">'


def test_purify_unwraps_disallowed_elements():
    assert sanitize_purify("<form><b>kept</b></form>") == "<b>kept</b>"


def test_purify_drops_style_subtree():
    assert sanitize_purify("a<style>p{}</style>b") == "ab"


def test_purify_drops_unclosed_script_to_eof():
    assert sanitize_purify("safe<script>evil()") == "safe"


def test_purify_escapes_bogus_brackets():
    assert sanitize_purify("1 < 2") == "1 &lt; 2"
    assert sanitize_purify("<b") == "&lt;b"
    assert sanitize_purify("<!-- unterminated") == "&lt;!-- unterminated"


def test_purify_drops_comments_and_declarations():
    assert sanitize_purify("a<!-- hidden -->b<!DOCTYPE html>c") == "abc"


def test_purify_blocks_javascript_uris():
    assert sanitize_purify('<a href="javascript:alert(1)">x</a>') == "<a>x</a>"
    assert sanitize_purify('<a href="JaVa\tScRiPt:alert(1)">x</a>') == "<a>x</a>"
    assert sanitize_purify('<a href="java&#115;cript:alert(1)">x</a>') == "<a>x</a>"
    assert sanitize_purify('<a href="data:text/html,x">x</a>') == "<a>x</a>"


def test_purify_allows_safe_uris():
    assert sanitize_purify('<a href="https://example.com/a">x</a>') == '<a href="https://example.com/a">x</a>'
    assert sanitize_purify('<a href="/relative#frag">x</a>') == '<a href="/relative#frag">x</a>'
    assert sanitize_purify('<a href="mailto:a@b">x</a>') == '<a href="mailto:a@b">x</a>'


def test_purify_case_insensitive_names():
    assert sanitize_purify("<ScRiPt>x</sCrIpT>done") == "done"
    assert sanitize_purify('<IMG SRC="1" ONERROR="x">') == '<img src="1">'


def test_purify_config_policy():
    policy = policy_from_config("ALLOWED_TAGS=b,i")
    assert sanitize_purify("<b>x</b><p>y</p>", policy) == "<b>x</b>y"
    forbid = policy_from_config("FORBID_TAGS=b")
    assert sanitize_purify("<b>x</b><p>y</p>", forbid) == "x<p>y</p>"


def test_purify_policy_floors():
    policy = PurifyPolicy(allowed_elements=frozenset({"script", "b"}),
                          allowed_attributes=frozenset({"onclick", "href"}),
                          uri_schemes=frozenset({"javascript", "https"}))
    assert "script" not in policy.allowed_elements
    assert "onclick" not in policy.allowed_attributes
    assert "javascript" not in policy.uri_schemes
    assert sanitize_purify("<script>x</script>", policy) == ""


def test_purify_fail_closed(monkeypatch):
    import sigfilter.sanitizers as mod

    def boom(fragment, policy):
        raise RuntimeError("tokenizer exploded")

    monkeypatch.setattr(mod, "_purify", boom)
    assert mod.sanitize_purify("<b>&x") == "&lt;b&gt;&amp;x"


_soup_atoms = st.sampled_from([
    "plain words ", "<b>bold</b>", "<i>", "</i>", '<img src="1" onerror="a()">',
    "<script>alert(1)</script>", "<script>no close", '"><script>x</script>',
    "<a href='javascript:alert(1)'>c</a>", '<a href="https://ok/">c</a>',
    "<!-- comment -->", "<![CDATA[x]]>", "< b >", "&amp;", "&", "<", ">", "'",
    '"', "<p onclick=steal()>t</p>", "</p>", "<unknown attr=1>", "\n", "\t",
    "<style>p{color:red}</style>", "<svg onload=alert(1)>", "<iframe src=x>",
])


@settings(max_examples=300, deadline=None)
@given(st.lists(_soup_atoms, max_size=12).map("".join))
def test_purify_idempotent_and_safe(fragment):
    once = sanitize_purify(fragment)
    assert sanitize_purify(once) == once
    lowered = once.lower()
    assert "<script" not in lowered
    assert not re.search(r"<[a-z][^>]*\son\w+\s*=", lowered)
    assert not re.search(r"(href|src)\s*=\s*\"?\s*javascript:", lowered)


# --- escape ---------------------------------------------------------------

def test_escape_default_table():
    assert sanitize_escape("<script>") == "&lt;script&gt;"
    assert sanitize_escape("a&b") == "a&amp;b"


def test_escape_config_charset():
    assert sanitize_escape("x<script>y", "[<>]") == "x&lt;script&gt;y"


def test_escape_config_per_character_oracle():
    config = re.compile("[<>\"]")
    table = {"<": "&lt;", ">": "&gt;", '"': "&quot;"}
    text = 'a<b>"c&d\'e'
    expected = "".join(table.get(ch, ch) if config.fullmatch(ch) else ch for ch in text)
    assert sanitize_escape(text, config) == expected
    assert expected == 'a&lt;b&gt;&quot;c&d\'e'


def test_escape_non_table_character_uses_numeric_entity():
    assert sanitize_escape("a;b", "[;]") == "a&#x3b;b"


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_escape_default_output_properties(text):
    escaped = sanitize_escape(text)
    assert not any(ch in escaped for ch in '<>"\'')
    # every & is an entity lead-in
    for m in re.finditer("&", escaped):
        assert re.match(r"&(amp|lt|gt|quot|#x27);", escaped[m.start():])


# --- regex match ------------------------------------------------------------

def test_regex_match_examples():
    assert sanitize_regex_match("0", NUMERIC) == "0"
    assert sanitize_regex_match("\"><script>alert('XSS')</script>", NUMERIC) == ""
    assert sanitize_regex_match("3.14", NUMERIC) == "3.14"


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=20))
def test_regex_match_is_projection(text):
    once = sanitize_regex_match(text, NUMERIC)
    assert sanitize_regex_match(once, NUMERIC) == once


# --- splice -------------------------------------------------------------------

def _span(start, end):
    return InjectionSpan(0, start, end)


def test_splice_zero_length_span_is_identity():
    doc = "abcdef"
    out = splice(doc, [_span(3, 3)], SanitizerChoice(SanitizerMethod.PURIFY))
    assert out == doc


def test_splice_naive_rebuild_oracle():
    doc = "0123456789ABCDEFGHIJ"
    spans = [_span(2, 5), _span(8, 8), _span(12, 17)]
    fn = str.upper

    # oracle: rebuild by concatenating untouched segments + sanitized gaps
    expected = (doc[0:2] + fn(doc[2:5]) + doc[5:8] + fn(doc[8:8]) +
                doc[8:12] + fn(doc[12:17]) + doc[17:])
    assert splice_with(doc, [(s, fn) for s in spans]) == expected


def test_splice_multi_span_equals_sequential_single_splices():
    doc = "..<x>..<y>..<z>.."
    spans = [_span(2, 5), _span(7, 10), _span(12, 15)]
    choice = SanitizerChoice(SanitizerMethod.ESCAPE)
    batch = splice(doc, spans, choice)
    stepwise = doc
    for span in reversed(spans):  # right-to-left keeps earlier offsets valid
        stepwise = splice(stepwise, [span], choice)
    assert batch == stepwise


def test_splice_length_bookkeeping():
    doc = "aa<bb>cc<dd>ee"
    spans = [_span(2, 6), _span(8, 12)]
    choice = SanitizerChoice(SanitizerMethod.ESCAPE)
    out = splice(doc, spans, choice)
    delta = sum(len(sanitize_escape(doc[s.content_start:s.content_end])) -
                (s.content_end - s.content_start) for s in spans)
    assert len(out) == len(doc) + delta
    # outside-span text is preserved exactly
    assert out.startswith("aa") and out.endswith("ee") and "cc" in out


def test_splice_rejects_overlapping_spans():
    with pytest.raises(ValueError):
        splice_with("abcdef", [(_span(0, 3), str.upper), (_span(2, 5), str.upper)])


def test_make_sanitizer_regex_requires_config():
    with pytest.raises(ValueError):
        make_sanitizer(SanitizerChoice(SanitizerMethod.REGEX, None))


def test_make_sanitizer_strips_config_delimiters():
    fn = make_sanitizer(SanitizerChoice(SanitizerMethod.REGEX, "/^[0-9]$/"))
    assert fn("7") == "7"
    assert fn("77") == ""


def test_default_policy_is_conservative():
    assert "script" not in DEFAULT_POLICY.allowed_elements
    assert "form" not in DEFAULT_POLICY.allowed_elements
    assert "iframe" not in DEFAULT_POLICY.allowed_elements
    assert not any(a.startswith("on") for a in DEFAULT_POLICY.allowed_attributes)
    assert "javascript" not in DEFAULT_POLICY.uri_schemes
