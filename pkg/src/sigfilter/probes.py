"""Framework fingerprinting: decide which signatures a page can match.

Probes identify the software serving a page from its body (and optionally
its URL); only signatures for fingerprinted frameworks are considered
downstream. Version identification runs a chain of increasingly specific
extractors: the framework probe's versionExtractor first, then the
signature's own versionProbe regex, and finally "unknown", in which case
the patch is applied regardless of version.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable

from .model import (
    ProbeDefinition,
    Signature,
    version_is_vulnerable,
)

logger = logging.getLogger(__name__)

# Accepted shape for an extracted version string; anything else is treated
# as unknown rather than fed to the version gate.
_VERSION_SHAPE = re.compile(r"[0-9]+(\.[0-9]+)*")


@dataclass
class PageIdentity:
    """Fingerprint result for one page: the frameworks that matched and any
    framework versions the probes managed to extract (None = unknown)."""

    frameworks: frozenset[str] = frozenset()
    versions: dict[str, str | None] = field(default_factory=dict)


def _normalize_version(raw: str | None) -> str | None:
    if raw is None:
        return None
    return raw if _VERSION_SHAPE.fullmatch(raw) else None


def run_probes(body: str, url: str, probes: Iterable[ProbeDefinition]) -> PageIdentity:
    """Match every probe against the page; the result is a pure function of
    (body, url, probes) and independent of probe order."""
    frameworks = set()
    for probe in probes:
        if probe.body_pattern.search(body) is None:
            continue
        if probe.url_pattern is not None and probe.url_pattern.search(url) is None:
            continue
        frameworks.add(probe.software_token)
    return PageIdentity(frameworks=frozenset(frameworks))


def load_versions(body: str, url: str, probes: Iterable[ProbeDefinition],
                  identity: PageIdentity) -> PageIdentity:
    """Fill in framework versions for fingerprinted frameworks using the
    probes' versionExtractor patterns (first match from the document top).
    Returns a new PageIdentity; the input is left untouched."""
    versions: dict[str, str | None] = dict(identity.versions)
    for probe in probes:
        token = probe.software_token
        if token not in identity.frameworks or probe.version_extractor is None:
            continue
        if versions.get(token) is not None:
            continue
        match = probe.version_extractor.search(body)
        if match is None:
            continue
        versions[token] = _normalize_version(match.group(1))
    return PageIdentity(frameworks=identity.frameworks, versions=versions)


def identify_version(body: str, url: str, sig: Signature, identity: PageIdentity) -> str | None:
    """Best-effort version of the software a signature targets, or None for
    unknown. The framework probe's cached result wins over the signature's
    own versionProbe; a disagreement is logged and the probe value kept."""
    probe_version = identity.versions.get(sig.software) if sig.software is not None else None
    sig_version = None
    if sig.version_probe is not None:
        match = sig.version_probe.search(body)
        if match is not None:
            sig_version = _normalize_version(match.group(1))
    if probe_version is not None:
        if sig_version is not None and sig_version != probe_version:
            logger.warning(
                "signature %s: probe version %s disagrees with versionProbe result %s; keeping probe",
                sig.id, probe_version, sig_version)
        return probe_version
    return sig_version


def signature_applies(sig: Signature, body: str, url: str, identity: PageIdentity) -> bool:
    """True when every applicability predicate of the signature passes:
    URL, software token, softwareDetails body marker, and the version gate
    (a version greater than the signature's maximum vulnerable version
    rejects; an unknown version never does)."""
    if sig.url is not None and not sig.url.matches(url):
        return False
    if sig.software is not None and sig.software not in identity.frameworks:
        return False
    if sig.software_details is not None and not sig.software_details.matches(body):
        return False
    if sig.version is not None:
        page_version = identify_version(body, url, sig, identity)
        if not version_is_vulnerable(page_version, sig.version):
            return False
    return True


__all__ = [
    "PageIdentity", "ProbeDefinition", "run_probes", "load_versions",
    "identify_version", "signature_applies",
]
