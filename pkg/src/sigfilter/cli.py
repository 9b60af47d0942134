"""Command-line interface.

Subcommands:
  filter    filter one HTML file offline against a signature database
  validate  parse a database and print static diagnostics
  bench     time verification over a corpus directory, emit CSV
  proxy     run the intercepting forward proxy

Exit codes: 0 clean/ok, 1 sanitized, 2 error, 3 blocked. The database
path defaults to the SIGFILTER_DB environment variable; a directory means
"merge every *.json inside".
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .model import DatabaseError, load_database, load_database_with_diagnostics, validate_database
from .pipeline import Verdict, verify_response

EXIT_CLEAN = 0
EXIT_SANITIZED = 1
EXIT_ERROR = 2
EXIT_BLOCKED = 3


def _decode_body(raw: bytes) -> tuple[str, str]:
    """Decode bytes to text, returning (text, codec). UTF-8 first, then a
    lossless single-byte fallback so untouched regions re-encode exactly."""
    try:
        return raw.decode("utf-8"), "utf-8"
    except UnicodeDecodeError:
        return raw.decode("latin-1"), "latin-1"


def _report_json(url: str, outcome) -> dict:
    return {
        "url": url,
        "verdict": outcome.verdict.value,
        "signatures": [
            {
                "id": entry.signature_id,
                "spans": [{"start": s.start, "end": s.end, "widened": s.widened}
                          for s in entry.spans],
                "sanitizer": entry.sanitizer.value,
            }
            for entry in outcome.report
        ],
    }


def _db_path(args) -> str:
    path = args.db or os.environ.get("SIGFILTER_DB")
    if not path:
        raise SystemExit("no database given: pass --db or set SIGFILTER_DB")
    return path


def cmd_filter(args) -> int:
    try:
        db = load_database(_db_path(args))
        raw = Path(args.infile).read_bytes()
    except (OSError, DatabaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    body, codec = _decode_body(raw)
    outcome, _ = verify_response(body, args.url, db)
    if args.report:
        Path(args.report).write_text(json.dumps(_report_json(args.url, outcome), indent=2),
                                     encoding="utf-8")
    if outcome.verdict is Verdict.BLOCKED:
        print(f"blocked: {outcome.block_reason}", file=sys.stderr)
        return EXIT_BLOCKED
    out_bytes = (outcome.body or "").encode(codec)
    if args.out:
        Path(args.out).write_bytes(out_bytes)
    else:
        sys.stdout.buffer.write(out_bytes)
        sys.stdout.buffer.flush()
    return EXIT_SANITIZED if outcome.verdict is Verdict.SANITIZED else EXIT_CLEAN


def cmd_validate(args) -> int:
    path = Path(_db_path(args))
    diagnostics = []
    try:
        if path.is_dir():
            files = sorted(path.glob("*.json"))
            if not files:
                raise DatabaseError(f"no *.json database files in {path}")
        else:
            files = [path]
        for file in files:
            db, load_diags = load_database_with_diagnostics(file.read_bytes())
            diagnostics.extend(load_diags)
            diagnostics.extend(validate_database(db).diagnostics)
    except (OSError, DatabaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for diag in diagnostics:
        print(str(diag))
    if diagnostics:
        print(f"{len(diagnostics)} diagnostic(s)", file=sys.stderr)
        return EXIT_SANITIZED
    print("ok")
    return EXIT_CLEAN


def cmd_bench(args) -> int:
    try:
        db = load_database(_db_path(args))
        baseline = load_database(args.baseline_db) if args.baseline_db else None
        records, summary = bench_mod.run_bench(args.corpus, db, args.reps, baseline)
    except (OSError, DatabaseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.csv:
        bench_mod.write_csv(args.csv, records, summary)
    print(bench_mod.format_summary(summary))
    return EXIT_CLEAN


def cmd_proxy(args) -> int:
    from .proxy import ProxyConfig, serve_proxy

    host, _, port = args.listen.rpartition(":")
    try:
        config = ProxyConfig(
            listen_host=host or "127.0.0.1",
            listen_port=int(port),
            database_path=_db_path(args),
            fail_closed_size=args.fail_closed_size,
            intercept_tls_dir=args.intercept_tls,
        )
    except ValueError as exc:
        print(f"error: bad listen address: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        serve_proxy(config)
    except (OSError, DatabaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigfilter",
                                     description="Signature-driven XSS filtering")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_filter = sub.add_parser("filter", help="filter one HTML file")
    p_filter.add_argument("--db", help="database file or directory (default: $SIGFILTER_DB)")
    p_filter.add_argument("--in", dest="infile", required=True, help="input HTML file")
    p_filter.add_argument("--url", required=True, help="URL hint the file was served from")
    p_filter.add_argument("--out", help="output file (default: stdout)")
    p_filter.add_argument("--report", help="write a JSON span report here")
    p_filter.set_defaults(func=cmd_filter)

    p_validate = sub.add_parser("validate", help="validate a signature database")
    p_validate.add_argument("--db", help="database file or directory (default: $SIGFILTER_DB)")
    p_validate.set_defaults(func=cmd_validate)

    p_bench = sub.add_parser("bench", help="benchmark verification over a corpus")
    p_bench.add_argument("--corpus", required=True, help="directory of documents")
    p_bench.add_argument("--db", help="database file or directory (default: $SIGFILTER_DB)")
    p_bench.add_argument("--baseline-db", help="second database for relative slowdown")
    p_bench.add_argument("--reps", type=int, default=5, help="repetitions per document")
    p_bench.add_argument("--csv", help="write per-record CSV here")
    p_bench.set_defaults(func=cmd_bench)

    p_proxy = sub.add_parser("proxy", help="run the intercepting forward proxy")
    p_proxy.add_argument("--listen", default="127.0.0.1:8080", help="host:port to listen on")
    p_proxy.add_argument("--db", help="database file or directory (default: $SIGFILTER_DB)")
    p_proxy.add_argument("--intercept-tls", metavar="CA_DIR",
                         help="enable TLS interception with a local CA kept in this directory")
    p_proxy.add_argument("--fail-closed-size", action="store_true",
                         help="block oversized bodies instead of passing them through")
    p_proxy.set_defaults(func=cmd_proxy)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_ERROR
        raise


if __name__ == "__main__":
    sys.exit(main())
