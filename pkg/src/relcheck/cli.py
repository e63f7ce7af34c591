"""Command-line interface.

Subcommands: ingest (build or refresh a snapshot), check (one project or
corpus releases), scan-env (model an installed site directory), bench
(evaluate inferred configurations), report (render a saved report).

Exit codes: 0 all checked releases validated, 1 issues found, 2 usage or
I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import date
from pathlib import Path

from .checker import CheckOptions, CorpusError, check_project
from .environment import ScanError, scan_environment
from .probe_client import SubprocessProbe
from .registry import (
    DEFAULT_BASE_URL,
    DEFAULT_TTL_DAYS,
    NetworkError,
    NotFound,
    RegistryClient,
    snapshot_dict_from_records,
)
from .report import (
    EmptyCorpus,
    discover_corpus,
    format_pass_rate,
    load_bench_entries,
    render_taxonomy_table,
    report_to_json,
    reports_from_json,
    reports_to_json,
    run_bench,
    run_corpus,
)
from .snapshot import (
    DuplicateRelease,
    InterpreterReleaseTable,
    SchemaError,
    load_snapshot,
    release_from_dict,
    snapshot_from_dict,
)
from .versions import InvalidName, normalize_name

EXIT_OK = 0
EXIT_ISSUES = 1
EXIT_USAGE = 2


class CliError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relcheck",
        description="Detect configuration issues in Python package releases.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="build or refresh a snapshot")
    source = p_ingest.add_mutually_exclusive_group(required=True)
    source.add_argument("--from-registry", nargs="+", metavar="NAME",
                        help="fetch these packages from the registry JSON API")
    source.add_argument("--from-dir", metavar="DIR",
                        help="read per-package cache JSON files from a directory")
    p_ingest.add_argument("--base-url", default=DEFAULT_BASE_URL)
    p_ingest.add_argument("--cache-dir", default=".relcheck-cache")
    p_ingest.add_argument("--ttl-days", type=int, default=DEFAULT_TTL_DAYS)
    p_ingest.add_argument("--snapshot-date", default=None,
                          help="YYYY-MM-DD; defaults to today")
    p_ingest.add_argument("--out", required=True, help="snapshot JSON output path")

    p_check = sub.add_parser("check", help="check a project or corpus releases")
    target = p_check.add_mutually_exclusive_group(required=True)
    target.add_argument("--project", metavar="PATH")
    target.add_argument("--release", metavar="NAME==VERSION", action="append")
    target.add_argument("--all", action="store_true",
                        help="check every release directory in --corpus")
    p_check.add_argument("--corpus", metavar="DIR",
                         help="corpus directory of <name>-<version> projects")
    p_check.add_argument("--snapshot", required=True, metavar="FILE")
    p_check.add_argument("--mode", choices=["static", "live"], default="static")
    p_check.add_argument("--python-table", metavar="FILE")
    p_check.add_argument("--probe-script", metavar="FILE",
                         help="import probe script (required for --mode live)")
    p_check.add_argument("--interpreter", default=sys.executable,
                         help="interpreter running the probe in live mode")
    p_check.add_argument("--site-dir", metavar="DIR",
                         help="installed environment to validate against in live mode")
    p_check.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_check.add_argument("--json", metavar="OUT", help="write the JSON report here")

    p_scan = sub.add_parser("scan-env", help="model an installed environment")
    p_scan.add_argument("--site-dir", required=True, metavar="DIR")
    p_scan.add_argument("--json", metavar="OUT")

    p_bench = sub.add_parser("bench", help="evaluate inferred configurations")
    p_bench.add_argument("--corpus", required=True, metavar="DIR")
    p_bench.add_argument("--inferred", required=True, metavar="FILE")
    p_bench.add_argument("--snapshot", required=True, metavar="FILE")
    p_bench.add_argument("--python-table", metavar="FILE")
    p_bench.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_bench.add_argument("--json", metavar="OUT")

    p_report = sub.add_parser("report", help="render a saved JSON report")
    p_report.add_argument("--json", required=True, metavar="IN")

    return parser


def _load_table(path: str | None) -> InterpreterReleaseTable:
    if path is None:
        return InterpreterReleaseTable.default()
    return InterpreterReleaseTable.load(path)


def _write_or_print(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_ingest(args) -> int:
    snapshot_date = date.fromisoformat(args.snapshot_date) if args.snapshot_date else date.today()
    records_by_name = {}
    if args.from_registry:
        client = RegistryClient(args.cache_dir, base_url=args.base_url,
                                ttl_days=args.ttl_days)
        for raw_name in args.from_registry:
            name = normalize_name(raw_name)
            records_by_name[name] = client.fetch_package(name)
    else:
        cache_dir = Path(args.from_dir)
        if not cache_dir.is_dir():
            raise CliError(f"not a directory: {cache_dir}")
        for path in sorted(cache_dir.glob("*.json")):
            cached = json.loads(path.read_text(encoding="utf-8"))
            name = normalize_name(cached.get("name") or path.stem)
            warnings: list[str] = []
            records = []
            for i, obj in enumerate(cached.get("releases", [])):
                rel = release_from_dict(name, obj, f"{path.name}[{i}]", warnings)
                if rel is not None:
                    records.append(rel)
            records_by_name[name] = records
    data = snapshot_dict_from_records(records_by_name, snapshot_date)
    snapshot_from_dict(data)  # validate before writing
    Path(args.out).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")
    print(f"wrote snapshot with {len(records_by_name)} packages to {args.out}")
    return EXIT_OK


def _parse_release_spec(spec: str) -> tuple[str, str]:
    name, sep, version = spec.partition("==")
    if not sep or not name or not version:
        raise CliError(f"--release expects NAME==VERSION, got {spec!r}")
    return name, version


def _cmd_check(args) -> int:
    snapshot = load_snapshot(args.snapshot)
    table = _load_table(args.python_table)
    probe = None
    if args.mode == "live":
        if not args.probe_script:
            raise CliError("--mode live requires --probe-script")
        extra = (args.site_dir,) if args.site_dir else ()
        probe = SubprocessProbe(args.probe_script, interpreter=args.interpreter,
                                extra_sys_path=extra)
    options = CheckOptions(snapshot=snapshot, table=table, mode=args.mode, probe=probe)

    if args.project:
        report = check_project(args.project, options)
        text = report_to_json(report)
        _write_or_print(text, args.json)
        return EXIT_OK if report.validated else EXIT_ISSUES

    if not args.corpus:
        raise CliError("--release/--all require --corpus")
    options.corpus_dir = Path(args.corpus)
    if args.all:
        entries = discover_corpus(args.corpus)
    else:
        entries = []
        for spec in args.release:
            name, version = _parse_release_spec(spec)
            normalized = normalize_name(name)
            path = Path(args.corpus) / f"{normalized}-{version}"
            if not path.is_dir():
                raise CorpusError(f"release directory not found: {path}")
            entries.append((normalized, version, path))
    reports = run_corpus(entries, options, jobs=max(1, args.jobs))
    _write_or_print(reports_to_json(reports), args.json)
    return EXIT_OK if all(r.validated for r in reports) else EXIT_ISSUES


def _cmd_scan_env(args) -> int:
    env = scan_environment(args.site_dir)
    payload = {
        "python": env.python_version,
        "installed": {
            name: {
                "version": dist.version.raw,
                "top_level_modules": list(dist.top_level_modules),
            }
            for name, dist in sorted(env.installed.items())
        },
        "warnings": list(env.warnings),
    }
    _write_or_print(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.json)
    return EXIT_OK


def _cmd_bench(args) -> int:
    snapshot = load_snapshot(args.snapshot)
    table = _load_table(args.python_table)
    options = CheckOptions(snapshot=snapshot, table=table)
    entries = load_bench_entries(args.inferred)
    result = run_bench(args.corpus, entries, options, jobs=max(1, args.jobs))
    _write_or_print(result.to_json(), args.json)
    if args.json:
        print(f"pass rate: {format_pass_rate(result.pass_rate)} "
              f"({sum(1 for r in result.reports if r.validated)}/{len(result.reports)})")
    return EXIT_OK if result.pass_rate == 1 else EXIT_ISSUES


def _cmd_report(args) -> int:
    reports = reports_from_json(Path(args.json).read_text(encoding="utf-8"))
    sys.stdout.write(render_taxonomy_table(reports))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "ingest": _cmd_ingest,
        "check": _cmd_check,
        "scan-env": _cmd_scan_env,
        "bench": _cmd_bench,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (CliError, CorpusError, SchemaError, DuplicateRelease, InvalidName,
            ScanError, EmptyCorpus, NotFound, NetworkError, FileNotFoundError,
            NotADirectoryError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
