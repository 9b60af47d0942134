"""Deterministic synthetic HTML corpora for tests, demos, and benchmarks.

Clean pages carry no framework fingerprints at all; CMS-style pages carry
a wp-content stylesheet link (the standard plugin marker) plus optional
version query parameters and optional injected payloads, so the filter's
applicability, versioning, and sanitization paths can all be exercised
offline at controlled document sizes.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

from .model import SignatureDatabase, parse_database


def fixture_database_text() -> str:
    """The bundled fixture database as JSON text."""
    return resources.files("sigfilter").joinpath("data/fixture_db.json").read_text("utf-8")


def load_fixture_database() -> SignatureDatabase:
    """Parse the signature database bundled with the package."""
    return parse_database(fixture_database_text())

_WORDS = (
    "amber basalt cedar dune ember fjord garnet harbor iris juniper kelp "
    "lagoon marble nectar onyx prairie quartz reef sierra tundra umber "
    "violet willow xenon yarrow zephyr atlas breeze canyon delta estuary "
    "flint grove horizon inlet jade knoll ledge meadow north orchard pine"
).split()

_INJECTED_SCRIPT = "\"><script>alert('XSS')</script>"


def _sentence(rng: random.Random) -> str:
    count = rng.randint(6, 14)
    words = [rng.choice(_WORDS) for _ in range(count)]
    return " ".join(words).capitalize() + "."


def _paragraph(rng: random.Random) -> str:
    return "<p>" + " ".join(_sentence(rng) for _ in range(rng.randint(2, 5))) + "</p>"


def clean_page(seed: int, target_chars: int = 4000) -> str:
    """A static page with no framework fingerprints and none of the fixture
    signatures' endpoint markers."""
    rng = random.Random(seed)
    parts = [
        "<!DOCTYPE html>",
        "<html><head>",
        f"<title>{_sentence(rng)}</title>",
        '<meta charset="utf-8">',
        '<link rel="stylesheet" href="/static/site.css">',
        "</head><body>",
        f"<h1>{_sentence(rng)}</h1>",
    ]
    body_len = sum(len(p) for p in parts)
    section = 0
    while body_len < target_chars:
        section += 1
        block = [f"<h2>Section {section}</h2>", _paragraph(rng)]
        if rng.random() < 0.4:
            items = "".join(f"<li><a href=\"/page-{rng.randint(1, 99)}\">{_sentence(rng)}</a></li>"
                            for _ in range(rng.randint(2, 5)))
            block.append(f"<ul>{items}</ul>")
        if rng.random() < 0.2:
            rows = "".join(f"<tr><td>{rng.choice(_WORDS)}</td><td>{rng.randint(0, 999)}</td></tr>"
                           for _ in range(rng.randint(2, 6)))
            block.append(f"<table><tbody>{rows}</tbody></table>")
        for piece in block:
            parts.append(piece)
            body_len += len(piece)
    parts.append("</body></html>")
    return "\n".join(parts)


def rcc_settings_page(value: str = "0", *, version: str | None = "1.7",
                      filler_chars: int = 0, seed: int = 0) -> str:
    """The cookie-consent settings page: a WordPress-fingerprinted page
    whose border-size input renders a stored, unsanitized value between
    the input element and its description label."""
    rng = random.Random(seed)
    ver_param = f"?ver={version}" if version is not None else ""
    filler = ""
    if filler_chars:
        blocks = []
        size = 0
        while size < filler_chars:
            block = _paragraph(rng)
            blocks.append(block)
            size += len(block)
        filler = "\n".join(blocks)
    return f"""<!DOCTYPE html>
<html><head>
<meta charset="utf-8">
<title>Cookie Bar Settings</title>
<link rel="stylesheet" href="http://localhost:8080/wp-content/plugins/responsive-cookie-consent/includes/css/options-page.css{ver_param}">
</head>
<body class="wp-admin">
<h1>Responsive Cookie Consent</h1>
{filler}
<form method="post" action="options.php">
<input id="rcc_settings[border-size]"
name="rcc-settings[border-size]"
type="text" value="{value}">
<label class="description"
for="rcc_settings[border-size]">Cookie Bar Border Bottom Size</label>
</form>
</body></html>
"""


def rcc_infected_page(**kwargs) -> str:
    """The stored-XSS variant: the border-size value breaks out of its
    attribute and injects a script element."""
    return rcc_settings_page(value=_INJECTED_SCRIPT, **kwargs)


RCC_PAGE_URL = "http://localhost:8080/wp-admin/options-general.php?page=rcc-settings"


def table_header_page(*, injected: bool = True) -> str:
    """Admin listing page where an img element is injected inside a table
    row, before the DOM parser would relocate it out of the table."""
    injected_html = '<img src="1" onerror="alert(1)">\n\t     ' if injected else ""
    return f"""<!DOCTYPE html>
<html><head>
<link rel="stylesheet" href="/wp-content/plugins/listing-table/style.css">
</head><body>
<table class="wp-list-table">
  <thead>
     <tr>
\t     <th></th>
\t     {injected_html}<th>
   \t     <form method="GET" action=""> <input type="text" name="q"> </form>
\t     </th>
     </tr>
  </thead>
</table>
</body></html>
"""


TABLE_PAGE_URL = "http://localhost:8080/wp-admin/admin.php?page=listing-table"


def caldera_forms_page() -> str:
    """Top-level page for the form-builder plugin; matching it arms the
    ajax listener for the mail preview endpoint."""
    return """<!DOCTYPE html>
<html><head>
<link rel="stylesheet" href="/wp-content/plugins/caldera-forms/assets/css/admin.css">
</head><body class="wp-admin">
<h1>Form Entries</h1>
<div id="caldera-entries"></div>
</body></html>
"""


CALDERA_PAGE_URL = "http://localhost:8080/wp-admin/admin.php?page=caldera-forms"
CALDERA_AJAX_URL = "http://localhost:8080/wp-admin/admin-ajax.php"


def caldera_ajax_body(payload: str = "<script>steal()</script>") -> str:
    """A mail-preview ajax response whose body region between the opening
    markup and the [AltBody] marker carries stored content."""
    return f"<p><strong>Entry preview {payload} end of message[AltBody]plain text alternative"


def sized_page(seed: int, target_chars: int, *, wordpress: bool = False) -> str:
    """Size-graded page for scaling benchmarks; optionally carries the
    WordPress fingerprint (but never matches any fixture signature)."""
    page = clean_page(seed, target_chars)
    if wordpress:
        marker = '<link rel="stylesheet" href="/wp-content/themes/base/style.css">'
        page = page.replace('<link rel="stylesheet" href="/static/site.css">', marker, 1)
    return page


def make_benchmark_db(signature_count: int = 50) -> SignatureDatabase:
    """A database of distinct synthetic WordPress-plugin signatures whose
    predicates match none of the synthetic pages, for timing runs."""
    import json

    signatures = []
    for index in range(signature_count):
        slug = f"plugin-{index:03d}"
        sig = {
            "id": f"synthetic-{index:03d}",
            "software": "WordPress",
            "softwareDetails": f"wp-content/plugins/{slug}",
            "type": "string",
            "typeDet": "single-unique",
            "sanitizer": "escape",
            "endPoints": [[f'<div id="inj-{index}-start">', f'<div id="inj-{index}-end">']],
        }
        # Half the signatures gate on the URL as well; the rest rely on the
        # body marker alone, which is what makes signature loading scan the
        # whole document on fingerprinted pages.
        if index % 2 == 0:
            sig["url"] = f"admin.php?page={slug}"
        signatures.append(sig)
    return parse_database(json.dumps({
        "formatVersion": 1,
        "probes": [{"softwareToken": "WordPress", "bodyPattern": "wp-content/"}],
        "signatures": signatures,
    }))


def write_corpus(directory: str | Path, *, count: int = 50, target_chars: int = 4000,
                 wordpress: bool = False, seed: int = 0, prefix: str = "page") -> list[Path]:
    """Materialize a corpus directory of synthetic pages; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index in range(count):
        page = sized_page(seed + index, target_chars, wordpress=wordpress)
        path = directory / f"{prefix}-{index:04d}.html"
        path.write_text(page, encoding="utf-8")
        paths.append(path)
    return paths


__all__ = [
    "clean_page", "rcc_settings_page", "rcc_infected_page", "RCC_PAGE_URL",
    "table_header_page", "TABLE_PAGE_URL", "caldera_forms_page",
    "CALDERA_PAGE_URL", "CALDERA_AJAX_URL", "caldera_ajax_body",
    "sized_page", "write_corpus", "fixture_database_text", "load_fixture_database",
    "make_benchmark_db",
]
