import json

import pytest

from sigfilter import parse_database
from sigfilter.corpus import load_fixture_database


@pytest.fixture(scope="session")
def fixture_db():
    return load_fixture_database()


def make_db(signatures, probes=None):
    """Build a parsed database from plain dicts (strict parse)."""
    if probes is None:
        probes = [{"softwareToken": "DemoApp", "bodyPattern": "demo-app"}]
    return parse_database(json.dumps({
        "formatVersion": 1,
        "probes": probes,
        "signatures": signatures,
    }))


def marker_signature(on_malformation="block", type_det="multiple-several",
                     sanitizer="escape", config=None, positions=None, pairs=1):
    """A signature over literal [[OPENk]] / [[CLOSEk]] marker tokens."""
    end_points = []
    for k in range(pairs):
        suffix = "" if pairs == 1 else str(k)
        end_points.append([rf"\[\[OPEN{suffix}\]\]", rf"\[\[CLOSE{suffix}\]\]"])
    sig = {
        "id": "demo-markers",
        "software": "DemoApp",
        "type": "string",
        "typeDet": type_det,
        "sanitizer": sanitizer,
        "endPoints": end_points,
        "onMalformation": on_malformation,
    }
    if config is not None:
        sig["config"] = config
    if positions is not None:
        sig["endPointsPositions"] = positions
    return sig


def marker_doc(middle, pairs=1):
    """Document with the demo-app fingerprint and marker content."""
    return f"<html demo-app><body>{middle}</body></html>"
