"""Benchmark harness: per-document verification timing over a corpus.

Each document is verified `repetitions` times and the median wall time is
recorded. When a baseline database is given, the relative percentage
slowdown between the two databases is computed per document from the two
medians, 100 * (with - without) / without. Scan-time scaling is summarized
as the Spearman rank correlation between body length and verify time,
computed separately for probe-matched and unmatched pages (the two groups
scan different amounts of signature machinery, so their slopes differ).
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from .model import SignatureDatabase
from .pipeline import verify_response
from .probes import run_probes


@dataclass(frozen=True)
class BenchRecord:
    fixture_id: str
    body_length: int
    verify_time_micros: float
    probes_matched: bool
    signatures_loaded: int
    outcome: str
    baseline_time_micros: float | None = None
    slowdown_pct: float | None = None


@dataclass(frozen=True)
class BenchSummary:
    spearman_matched: float
    n_matched: int
    spearman_unmatched: float
    n_unmatched: int
    median_slowdown_pct: float | None = None


def _average_ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        averaged = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = averaged
        i = j + 1
    return ranks


def spearman(xs: list[float], ys: list[float]) -> float:
    """Spearman rank correlation with average ranks for ties; NaN when the
    correlation is undefined (fewer than two points or zero variance)."""
    if len(xs) != len(ys) or len(xs) < 2:
        return math.nan
    rx = _average_ranks(list(xs))
    ry = _average_ranks(list(ys))
    mean_x = sum(rx) / len(rx)
    mean_y = sum(ry) / len(ry)
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(rx, ry))
    var_x = sum((a - mean_x) ** 2 for a in rx)
    var_y = sum((b - mean_y) ** 2 for b in ry)
    if var_x == 0 or var_y == 0:
        return math.nan
    return cov / math.sqrt(var_x * var_y)


def _median_verify_micros(body: str, url: str, db: SignatureDatabase, repetitions: int) -> float:
    times = []
    for _ in range(max(1, repetitions)):
        started = time.perf_counter()
        verify_response(body, url, db)
        times.append((time.perf_counter() - started) * 1e6)
    return statistics.median(times)


def bench_document(fixture_id: str, body: str, url: str, db: SignatureDatabase,
                   repetitions: int, baseline: SignatureDatabase | None = None) -> BenchRecord:
    outcome, _ = verify_response(body, url, db)
    identity = run_probes(body, url, db.probes)
    median_micros = _median_verify_micros(body, url, db, repetitions)
    baseline_micros = None
    slowdown = None
    if baseline is not None:
        baseline_micros = _median_verify_micros(body, url, baseline, repetitions)
        if baseline_micros > 0:
            slowdown = 100.0 * (median_micros - baseline_micros) / baseline_micros
    return BenchRecord(
        fixture_id=fixture_id,
        body_length=len(body),
        verify_time_micros=median_micros,
        probes_matched=bool(identity.frameworks),
        signatures_loaded=len(db.signatures_for(identity.frameworks)),
        outcome=outcome.verdict.value,
        baseline_time_micros=baseline_micros,
        slowdown_pct=slowdown,
    )


def run_bench(corpus_dir: str | Path, db: SignatureDatabase, repetitions: int,
              baseline: SignatureDatabase | None = None,
              url_prefix: str = "http://corpus.local/") -> tuple[list[BenchRecord], BenchSummary]:
    corpus_dir = Path(corpus_dir)
    files = sorted(p for p in corpus_dir.iterdir() if p.is_file())
    if not files:
        raise FileNotFoundError(f"corpus directory {corpus_dir} has no files")
    records = []
    for path in files:
        body = path.read_bytes().decode("utf-8", errors="replace")
        records.append(bench_document(path.name, body, url_prefix + path.name,
                                      db, repetitions, baseline))
    return records, summarize(records)


def summarize(records: list[BenchRecord]) -> BenchSummary:
    matched = [r for r in records if r.probes_matched]
    unmatched = [r for r in records if not r.probes_matched]
    slowdowns = [r.slowdown_pct for r in records if r.slowdown_pct is not None]
    return BenchSummary(
        spearman_matched=spearman([r.body_length for r in matched],
                                  [r.verify_time_micros for r in matched]),
        n_matched=len(matched),
        spearman_unmatched=spearman([r.body_length for r in unmatched],
                                    [r.verify_time_micros for r in unmatched]),
        n_unmatched=len(unmatched),
        median_slowdown_pct=statistics.median(slowdowns) if slowdowns else None,
    )


_CSV_FIELDS = ["fixture_id", "body_length", "verify_time_micros", "probes_matched",
               "signatures_loaded", "outcome", "baseline_time_micros", "slowdown_pct"]


def write_csv(path: str | Path, records: list[BenchRecord], summary: BenchSummary) -> None:
    """Per-record rows plus '#'-prefixed summary footer lines."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_FIELDS)
        for record in records:
            writer.writerow([getattr(record, name) for name in _CSV_FIELDS])
        handle.write(f"# spearman,probe-matched,{summary.spearman_matched},n={summary.n_matched}\n")
        handle.write(f"# spearman,unmatched,{summary.spearman_unmatched},n={summary.n_unmatched}\n")
        if summary.median_slowdown_pct is not None:
            handle.write(f"# slowdown,median_pct,{summary.median_slowdown_pct}\n")


def format_summary(summary: BenchSummary) -> str:
    lines = [
        f"spearman(body_length, verify_time) probe-matched: {summary.spearman_matched} (n={summary.n_matched})",
        f"spearman(body_length, verify_time) unmatched:     {summary.spearman_unmatched} (n={summary.n_unmatched})",
    ]
    if summary.median_slowdown_pct is not None:
        lines.append(f"median relative slowdown vs baseline: {summary.median_slowdown_pct:.2f}%")
    return "\n".join(lines)


__all__ = [
    "BenchRecord", "BenchSummary", "spearman", "bench_document", "run_bench",
    "summarize", "write_csv", "format_summary",
]
