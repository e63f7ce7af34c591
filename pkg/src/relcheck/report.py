"""Report serialization, the Pass Rate metric, and corpus/bench runners.

Report JSON is canonical (sorted keys, fixed separators, trailing newline)
so serialize -> parse -> serialize is byte-identical and parallel runs
produce identical files.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from .checker import CheckOptions, CheckReport, SiblingCache, check_project
from .issues import KIND_ORDER, TAXONOMY
from .snapshot import DependencyDecl, SchemaError
from .requirements import InvalidRequirement, parse_requirement
from .versions import InvalidName, normalize_name, parse_specifier_set, parse_version

SCHEMA_VERSION = 1


class EmptyCorpus(ValueError):
    """Pass rate is undefined over zero results."""


def compute_pass_rate(results) -> Fraction:
    """Fraction of validated reports, exact."""
    results = list(results)
    if not results:
        raise EmptyCorpus("cannot compute a pass rate over zero releases")
    validated = sum(1 for r in results if r.validated)
    return Fraction(validated, len(results))


def format_pass_rate(rate: Fraction) -> str:
    """Render with three decimal places, e.g. 13/20 -> '0.650'."""
    return f"{float(rate):.3f}"


def reports_to_json(reports, extra: dict | None = None) -> str:
    payload = {"schema_version": SCHEMA_VERSION,
               "reports": [r.to_dict() for r in reports]}
    if extra:
        payload.update(extra)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def report_to_json(report: CheckReport) -> str:
    payload = {"schema_version": SCHEMA_VERSION, "report": report.to_dict()}
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _check_schema_version(payload: dict) -> None:
    value = payload.get("schema_version")
    if not isinstance(value, int) or value > SCHEMA_VERSION:
        raise SchemaError(f"unsupported report schema version: {value!r}")


def reports_from_json(text: str) -> list[CheckReport]:
    payload = json.loads(text)
    _check_schema_version(payload)
    if "reports" in payload:
        return [CheckReport.from_dict(obj) for obj in payload["reports"]]
    if "report" in payload:
        return [CheckReport.from_dict(payload["report"])]
    raise SchemaError("report JSON carries neither 'report' nor 'reports'")


def issue_histogram(reports) -> dict[str, int]:
    counts: dict[str, int] = {}
    for report in reports:
        for issue in report.issues:
            counts[issue.kind.value] = counts.get(issue.kind.value, 0) + 1
    return counts


def render_taxonomy_table(reports) -> str:
    """One row per issue kind with category, check, count and fatal flag."""
    counts = issue_histogram(reports)
    rows = []
    for kind in KIND_ORDER:
        info = TAXONOMY[kind]
        rows.append((info.category.value, info.label, info.check.value,
                     str(counts.get(kind.value, 0)), "yes" if info.fatal else "no"))
    headers = ("Category", "Issue", "Check", "#Releases", "Fatal?")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(5)]
    lines = []
    lines.append(" | ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    lines.append("-+-".join("-" * w for w in widths))
    for row in rows:
        lines.append(" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def _version_sort_key(raw: str):
    try:
        return (0, parse_version(raw), raw)
    except Exception:
        return (1, None, raw)


def _sorted_reports(reports) -> list[CheckReport]:
    # order-stable by release identity: name, then version order, then raw text
    return sorted(reports, key=lambda r: (r.name,) + _version_sort_key(r.version))


def discover_corpus(corpus_dir: str | Path) -> list[tuple[str, str, Path]]:
    """All <name>-<version> release directories in a corpus, sorted."""
    corpus_dir = Path(corpus_dir)
    entries = []
    for path in sorted(corpus_dir.iterdir()):
        if not path.is_dir():
            continue
        name_part, _, version_part = path.name.rpartition("-")
        if not name_part or not version_part:
            continue
        try:
            name = normalize_name(name_part)
            parse_version(version_part)
        except Exception:
            continue
        entries.append((name, version_part, path))
    return entries


def run_corpus(entries, options: CheckOptions, jobs: int = 1,
               per_entry_overrides: dict | None = None) -> list[CheckReport]:
    """Check corpus entries, parallel across packages.

    Releases of one package run sequentially in version order so the
    sibling-version cache sees a deterministic history regardless of the
    worker count; output order is stable by release identity.
    """
    if options.sibling_cache is None:
        options = replace(options, sibling_cache=SiblingCache())
    overrides = per_entry_overrides or {}

    groups: dict[str, list[tuple[str, str, Path]]] = {}
    for name, version, path in entries:
        groups.setdefault(name, []).append((name, version, path))
    for bucket in groups.values():
        bucket.sort(key=lambda e: _version_sort_key(e[1]))

    def run_group(bucket):
        out = []
        for name, version, path in bucket:
            kwargs = overrides.get((name, version), {})
            out.append(check_project(path, options, name=name, version=version, **kwargs))
        return out

    reports: list[CheckReport] = []
    if jobs <= 1:
        for name in sorted(groups):
            reports.extend(run_group(groups[name]))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(run_group, [groups[name] for name in sorted(groups)]):
                reports.extend(result)
    return _sorted_reports(reports)


@dataclass(frozen=True)
class BenchEntry:
    """One externally inferred configuration to evaluate."""

    name: str
    version: str
    inferred_deps: tuple[DependencyDecl, ...]
    inferred_python: str | None = None


@dataclass(frozen=True)
class BenchResult:
    reports: tuple[CheckReport, ...]
    pass_rate: Fraction
    histogram: dict[str, int]

    def to_json(self) -> str:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "reports": [r.to_dict() for r in self.reports],
            "passed": sum(1 for r in self.reports if r.validated),
            "total": len(self.reports),
            "pass_rate": format_pass_rate(self.pass_rate),
            "failure_histogram": dict(sorted(self.histogram.items())),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def load_bench_entries(path: str | Path) -> list[BenchEntry]:
    """Parse a bench-entry JSON file: a list of {name, version, inferred_deps,
    inferred_python} objects."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaError(f"{path}: bench entries must be a JSON list")
    entries = []
    for i, obj in enumerate(data):
        where = f"{path}[{i}]"
        if not isinstance(obj, dict):
            raise SchemaError(f"{where}: entries must be objects")
        for fld in ("name", "version", "inferred_deps"):
            if fld not in obj:
                raise SchemaError(f"{where}: missing field {fld!r}")
        try:
            name = normalize_name(obj["name"])
        except InvalidName as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        deps = []
        for dep_obj in obj["inferred_deps"]:
            if isinstance(dep_obj, str):
                try:
                    decl, _ = parse_requirement(dep_obj)
                except InvalidRequirement as exc:
                    raise SchemaError(f"{where}: {exc}") from exc
                deps.append(decl)
                continue
            try:
                deps.append(DependencyDecl(
                    normalize_name(dep_obj["name"]),
                    parse_specifier_set(dep_obj.get("constraint", "")),
                    dep_obj.get("marker"),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{where}: bad inferred_deps entry: {exc}") from exc
        python = obj.get("inferred_python")
        if python is not None and not isinstance(python, str):
            raise SchemaError(f"{where}: inferred_python must be a string or null")
        entries.append(BenchEntry(name, obj["version"], tuple(deps), python))
    return entries


def run_bench(corpus_dir: str | Path, entries, options: CheckOptions,
              jobs: int = 1) -> BenchResult:
    """Evaluate inferred configurations: substitute each entry's deps (and
    Python, when given) for the project's declared ones and run the
    standard pipeline."""
    corpus_dir = Path(corpus_dir)
    corpus_entries = []
    overrides = {}
    for entry in entries:
        path = corpus_dir / f"{entry.name}-{entry.version}"
        corpus_entries.append((entry.name, entry.version, path))
        overrides[(entry.name, entry.version)] = {
            "inferred_deps": entry.inferred_deps,
            "inferred_python": entry.inferred_python,
            "bench_mode": True,
        }
    reports = run_corpus(corpus_entries, options, jobs=jobs,
                         per_entry_overrides=overrides)
    failures = issue_histogram(r for r in reports if not r.validated)
    return BenchResult(tuple(reports), compute_pass_rate(reports), failures)
