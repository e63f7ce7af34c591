"""Orchestrates the three checks over one release.

Pipeline: installation check (heuristic interpreter search plus simulated
install), dependency check (metadata, environment consistency, syntax,
declared Python, version/date inversions), import validation (per-file
import expressions evaluated statically against the environment model or
live through an import probe). Every failure maps to exactly one taxonomy
kind; a report can carry many issues.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field, replace
from datetime import timedelta
from enum import Enum
from pathlib import Path

from .environment import (
    EnvironmentModel,
    InstallFailure,
    InstalledDist,
    MISSING_SUBMODULE,
    RESOLVED,
    _marker_gate,
    build_environment,
    check_env_consistency,
    resolve_import,
    simulate_install,
)
from .imports import (
    EXTERNAL,
    Leaf,
    build_import_expr,
    classify_import,
    collect_imports,
    evaluate_expr,
    find_dynamic_imports,
    iter_leaves,
    root_leaves,
)
from .issues import CheckName, IssueKind, IssueRecord
from .project import (
    MissingConfigFiles,
    MissingSourceCode,
    ProjectModel,
    check_metadata_consistency,
    load_project,
)
from .snapshot import (
    IndexSnapshot,
    InterpreterReleaseTable,
    NoSatisfyingVersion,
    UnknownPackage,
    _py_key,
    detect_version_date_inversions,
    initial_python_version,
    latest_satisfying,
    python_versions_from_classifiers,
)
from .versions import InvalidName, InvalidVersion, normalize_name, parse_version


class CorpusError(FileNotFoundError):
    """Release directory absent from the corpus."""


class CheckStatus(str, Enum):
    S0 = "S0-loaded"
    S1 = "S1-analyzed-py3"
    S2 = "S2-analyzed-py2"
    S3 = "S3-blocks-built"
    S4 = "S4-validated"


COMMON_PYTHON_VERSIONS = ("2.7", "3.6", "3.10")
_INITIAL_WINDOW = timedelta(days=180)

STATIC = "static"
LIVE = "live"


@dataclass(frozen=True)
class ProbeOutcome:
    """Result of executing one import in a live environment."""

    ok: bool
    error_type: str | None = None
    error_message: str | None = None


class SiblingCache:
    """Interpreter versions that worked for other releases of a package."""

    def __init__(self):
        self._lock = threading.Lock()
        self._successes: dict[str, set[str]] = {}

    def get(self, package: str) -> tuple[str, ...]:
        with self._lock:
            return tuple(sorted(self._successes.get(package, ()), key=_py_key, reverse=True))

    def add(self, package: str, python_version: str) -> None:
        with self._lock:
            self._successes.setdefault(package, set()).add(python_version)


@dataclass
class CheckOptions:
    snapshot: IndexSnapshot
    table: InterpreterReleaseTable = field(default_factory=InterpreterReleaseTable.default)
    mode: str = STATIC
    probe: object | None = None  # callable: list[str] -> list[ProbeOutcome]
    corpus_dir: Path | None = None
    sibling_cache: SiblingCache | None = None


@dataclass(frozen=True)
class CheckReport:
    name: str
    version: str
    mode: str
    final_status: CheckStatus
    statuses: tuple[CheckStatus, ...]
    chosen_python: str | None
    checks: dict[str, bool]
    issues: tuple[IssueRecord, ...]
    environment: dict | None
    warnings: tuple[str, ...]

    @property
    def validated(self) -> bool:
        return self.final_status is CheckStatus.S4 and all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "mode": self.mode,
            "final_status": self.final_status.value,
            "statuses": [s.value for s in self.statuses],
            "validated": self.validated,
            "chosen_python": self.chosen_python,
            "checks": {k: self.checks[k] for k in sorted(self.checks)},
            "environment": self.environment,
            "issues": [i.to_dict() for i in self.issues],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CheckReport":
        return cls(
            name=obj["name"],
            version=obj["version"],
            mode=obj["mode"],
            final_status=CheckStatus(obj["final_status"]),
            statuses=tuple(CheckStatus(s) for s in obj["statuses"]),
            chosen_python=obj["chosen_python"],
            checks=dict(obj["checks"]),
            issues=tuple(IssueRecord.from_dict(i) for i in obj["issues"]),
            environment=obj["environment"],
            warnings=tuple(obj["warnings"]),
        )


def _initial_python_for_project(project: ProjectModel, name: str, version: str,
                                snapshot: IndexSnapshot,
                                table: InterpreterReleaseTable) -> str | None:
    from_classifiers = python_versions_from_classifiers(project.classifiers)
    if from_classifiers:
        return max(from_classifiers, key=_py_key)
    rel = None
    if name in snapshot:
        try:
            rel = snapshot.find_release(name, parse_version(version))
        except InvalidVersion:
            rel = None
    if rel is not None:
        try:
            return initial_python_version(rel, snapshot, table)
        except LookupError:
            return None
    cutoff = snapshot.snapshot_date - _INITIAL_WINDOW
    candidates = table.released_before(cutoff)
    return max(candidates, key=_py_key) if candidates else None


def _candidate_pythons(project: ProjectModel, initial: str | None,
                       table: InterpreterReleaseTable,
                       sibling: tuple[str, ...]) -> list[str]:
    """The heuristic interpreter search order: declared-constraint versions
    (initial assignment first, then newest first), sibling successes,
    commonly used versions, then the whole table."""
    all_desc = sorted(table.versions(), key=_py_key, reverse=True)
    ordered: list[str] = []
    if project.declared_python is not None:
        permitted = [v for v in all_desc if project.declared_python.matches(parse_version(v))]
        if initial in permitted:
            ordered.append(initial)
        ordered.extend(permitted)
    elif initial is not None:
        ordered.append(initial)
    ordered.extend(sibling)
    ordered.extend(v for v in COMMON_PYTHON_VERSIONS if v in table.dates)
    ordered.extend(all_desc)
    seen: set[str] = set()
    unique = []
    for v in ordered:
        if v not in seen:
            seen.add(v)
            unique.append(v)
    return unique


_SETUP_MISSING = "setup-missing"
_CONFLICT = "conflict"
_PYTHON = "python"
_OTHER = "other"


def _attempt_install(project: ProjectModel, deps, snapshot: IndexSnapshot,
                     python_version: str):
    """One installation attempt; returns (env, None) or (None, (flavor, evidence))."""
    if project.has_setup_py and not project.setup_py_parses:
        return None, (_OTHER, "setup script cannot be parsed; executing it would fail")
    scratch: list[str] = []
    for req in project.setup_requires:
        if not _marker_gate(req, python_version, scratch, "setup"):
            continue
        if req.name not in snapshot:
            return None, (_SETUP_MISSING,
                          f"build-time requirement {req.name} is not available in the index")
    if project.setup_requires:
        try:
            simulate_install(project.setup_requires, snapshot, python_version)
        except UnknownPackage as exc:
            return None, (_SETUP_MISSING, f"build-time requirement chain: {exc}")
        except InstallFailure as exc:
            flavor = _PYTHON if exc.reason == InstallFailure.PYTHON_VERSION_REJECTED else _CONFLICT
            return None, (flavor, f"while resolving build-time requirements: {exc.evidence}")
    try:
        return simulate_install(deps, snapshot, python_version), None
    except InstallFailure as exc:
        flavor = _PYTHON if exc.reason == InstallFailure.PYTHON_VERSION_REJECTED else _CONFLICT
        evidence = exc.evidence
        if exc.chain:
            evidence += " [" + "; ".join(exc.chain) + "]"
        return None, (flavor, evidence)


@dataclass
class InstallationOutcome:
    env: EnvironmentModel | None
    chosen_python: str | None
    issues: list[IssueRecord]
    attempts: list[tuple[str, str | None]]


def run_installation_check(project: ProjectModel, snapshot: IndexSnapshot,
                           table: InterpreterReleaseTable, *,
                           deps=None, name: str = "", version: str = "",
                           sibling_cache: SiblingCache | None = None,
                           python_candidates: list[str] | None = None) -> InstallationOutcome:
    """Search interpreter versions until one simulated install succeeds.

    Failures become taxonomy issues; a success outside the declared Python
    constraint still records an IncorrectPythonVersion issue.
    """
    deps = project.declared_deps if deps is None else deps
    if python_candidates is None:
        initial = _initial_python_for_project(project, name, version, snapshot, table)
        sibling = sibling_cache.get(name) if (sibling_cache and name) else ()
        candidates = _candidate_pythons(project, initial, table, sibling)
    else:
        candidates = list(python_candidates)

    attempts: list[tuple[str, str | None]] = []
    failures: list[tuple[str, str, str]] = []  # (python, flavor, evidence)
    location = name or str(project.root)
    for candidate in candidates:
        env, failure = _attempt_install(project, deps, snapshot, candidate)
        if env is not None:
            attempts.append((candidate, None))
            issues = []
            if (project.declared_python is not None
                    and not project.declared_python.matches(parse_version(candidate))):
                issues.append(IssueRecord.make(
                    IssueKind.INCORRECT_PYTHON_VERSION, location,
                    f"every Python version in the declared constraint "
                    f"{project.declared_python.raw!r} fails; installation succeeded "
                    f"with Python {candidate}",
                ))
            if sibling_cache is not None and name:
                sibling_cache.add(name, candidate)
            return InstallationOutcome(env, candidate, issues, attempts)
        flavor, evidence = failure
        attempts.append((candidate, f"{flavor}: {evidence}"))
        failures.append((candidate, flavor, evidence))

    tried = ", ".join(v for v, _, _ in failures)
    flavors = {flavor for _, flavor, _ in failures}

    def first_evidence(flavor: str) -> str:
        for candidate, f, evidence in failures:
            if f == flavor:
                return f"[Python {candidate}] {evidence} (tried: {tried})"
        raise AssertionError

    if not failures:
        kind, evidence = IssueKind.OTHER_SETUP_RUNTIME_ERROR, "no interpreter versions to try"
    elif flavors == {_PYTHON}:
        kind, evidence = IssueKind.INCORRECT_PYTHON_VERSION, first_evidence(_PYTHON)
    elif _SETUP_MISSING in flavors:
        kind, evidence = IssueKind.MISSING_SETUP_REQUIRES, first_evidence(_SETUP_MISSING)
    elif _CONFLICT in flavors:
        kind, evidence = IssueKind.SETUP_DEPENDENCY_CONFLICT, first_evidence(_CONFLICT)
    else:
        kind, evidence = IssueKind.OTHER_SETUP_RUNTIME_ERROR, first_evidence(_OTHER)
    issue = IssueRecord.make(kind, location, evidence)
    return InstallationOutcome(None, None, [issue], attempts)


def degraded_environment(deps, snapshot: IndexSnapshot, python_version: str) -> EnvironmentModel:
    """Best-effort environment when installation failed: per-package latest
    version satisfying its own constraint, closure followed, conflicts and
    unknown packages skipped."""
    dists: dict[str, InstalledDist] = {}
    queue = list(deps)
    seen: set[str] = set()
    warnings = ["environment is degraded: built per-dependency, ignoring conflicts"]
    while queue:
        decl = queue.pop(0)
        if decl.name in seen:
            continue
        seen.add(decl.name)
        if not _marker_gate(decl, python_version, warnings, "degraded"):
            continue
        try:
            version = latest_satisfying(snapshot, decl.name, decl.constraint)
        except (UnknownPackage, NoSatisfyingVersion):
            continue
        rel = snapshot.find_release(decl.name, version)
        if rel is None:
            continue
        listing = rel.top_level_modules if rel.top_level_modules is not None \
            else (rel.name.replace("-", "_"),)
        dists[decl.name] = InstalledDist(rel.name, rel.version, tuple(listing), rel.requires_dist)
        queue.extend(rel.requires_dist)
    return build_environment(python_version, dists.values(), warnings)


def run_dependency_check(project: ProjectModel, env: EnvironmentModel | None,
                         snapshot: IndexSnapshot, *, deps=None,
                         require_python_declared: bool = True,
                         location: str = "") -> list[IssueRecord]:
    """Metadata, environment consistency, syntax, declared-Python and
    version/date inversion checks."""
    deps = project.declared_deps if deps is None else deps
    location = location or str(project.root)
    issues = list(check_metadata_consistency(project))
    if env is not None:
        issues.extend(check_env_consistency(env))
    for sf in project.source_files:
        if sf.failure is not None:
            issues.append(IssueRecord.make(
                IssueKind.PARSING_ERROR, str(sf.path),
                f"{sf.failure.reason} error: {sf.failure.detail}",
            ))
    if require_python_declared and project.declared_python is None:
        issues.append(IssueRecord.make(
            IssueKind.MISSING_PYTHON_VERSION, location,
            "no required Python version declared in the configuration",
        ))
    seen: set[str] = set()
    for decl in deps:
        if decl.name in seen or decl.name not in snapshot:
            continue
        seen.add(decl.name)
        inversions = detect_version_date_inversions(snapshot, decl.name)
        if inversions:
            pairs = ", ".join(f"{a.raw} newer than {b.raw}" for a, b in inversions)
            issues.append(IssueRecord.make(
                IssueKind.VERSION_DATE_INCONSISTENCY, decl.name,
                f"dependency {decl.name} has version/date inversions: {pairs}",
            ))
    return issues


_MISSING_MODULE_RE = re.compile(r"[Nn]o module named '?([A-Za-z0-9_.]+)'?")


def _declared_match(top_module: str, declared_names: set[str],
                    snapshot: IndexSnapshot) -> str | None:
    """The declared dependency that should provide *top_module*, if any."""
    providers = snapshot.module_providers(top_module)
    hit = providers & declared_names
    if hit:
        return sorted(hit)[0]
    try:
        candidate = normalize_name(top_module)
    except InvalidName:
        return None
    return candidate if candidate in declared_names else None


def _transitive_requirement_names(env: EnvironmentModel) -> set[str]:
    names: set[str] = set()
    for dist in env.installed.values():
        for req in dist.requires_dist:
            names.add(req.name)
    return names


def _classify_static_failure(leaf: Leaf, resolution, env: EnvironmentModel,
                             snapshot: IndexSnapshot, declared_names: set[str],
                             location: str) -> IssueRecord:
    node = leaf.node
    top = node.module_path.split(".")[0]
    if resolution.status == MISSING_SUBMODULE:
        provider = resolution.provider
        if provider is not None and provider.name in declared_names:
            kind = IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED
            evidence = (f"import {node.module_path} fails: installed {provider.name} "
                        f"{provider.version.raw} does not provide it")
        else:
            kind = IssueKind.MISSING_INDIRECT_IMPORT_MODULES
            evidence = f"import {node.module_path} fails: {resolution.detail}"
        return IssueRecord.make(kind, location, evidence)
    declared = _declared_match(top, declared_names, snapshot)
    if declared is not None:
        kind = IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED
        installed = env.installed.get(declared)
        if installed is not None:
            evidence = (f"import {node.module_path} fails although {declared} "
                        f"{installed.version.raw} is declared and installed")
        else:
            evidence = (f"import {node.module_path} fails although {declared} "
                        f"is declared in the configuration")
    elif (snapshot.module_providers(top) | {top.replace('_', '-')}) \
            & _transitive_requirement_names(env):
        kind = IssueKind.MISSING_INDIRECT_IMPORT_MODULES
        evidence = (f"import {node.module_path} fails: module belongs to a "
                    f"transitive dependency that is not installed")
    else:
        kind = IssueKind.MISSING_DIRECT_IMPORT_DEPS
        evidence = (f"import {node.module_path} fails: no corresponding library "
                    f"is included in the configuration")
    return IssueRecord.make(kind, location, evidence)


def _classify_live_failure(leaf: Leaf, outcome: ProbeOutcome, env: EnvironmentModel,
                           snapshot: IndexSnapshot, declared_names: set[str],
                           location: str) -> IssueRecord:
    node = leaf.node
    top = node.module_path.split(".")[0]
    message = outcome.error_message or ""
    if outcome.error_type not in ("ModuleNotFoundError", "ImportError"):
        return IssueRecord.make(
            IssueKind.OTHER_IMPORT_RUNTIME_ERROR, location,
            f"import {node.module_path} raised {outcome.error_type}: {message}",
        )
    m = _MISSING_MODULE_RE.search(message)
    missing = m.group(1) if m else node.module_path
    if missing.split(".")[0] != top:
        return IssueRecord.make(
            IssueKind.MISSING_INDIRECT_IMPORT_MODULES, location,
            f"import {node.module_path} raised {outcome.error_type} on module "
            f"{missing!r} belonging to a dependency: {message}",
        )
    declared = _declared_match(top, declared_names, snapshot)
    if declared is not None:
        kind = IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED
        evidence = (f"import {node.module_path} raised {outcome.error_type} although "
                    f"{declared} is declared: {message}")
    else:
        kind = IssueKind.MISSING_DIRECT_IMPORT_DEPS
        evidence = (f"import {node.module_path} raised {outcome.error_type}: "
                    f"no corresponding library is included in the configuration: {message}")
    return IssueRecord.make(kind, location, evidence)


@dataclass
class ImportValidationOutcome:
    issues: list[IssueRecord]
    analyzed_any: bool
    used_legacy: bool
    all_expressions_true: bool
    warnings: list[str]


def _own_top_modules(project: ProjectModel) -> set[str]:
    """Top modules the release itself provides: once installed it can always
    import its own package by absolute name."""
    own = set(project.top_level_declared or ())
    own.update(project.binary_modules)
    for sf in project.source_files:
        own.add(sf.path.parts[0] if len(sf.path.parts) > 1 else sf.path.stem)
    return own


def run_import_validation(project: ProjectModel, env: EnvironmentModel,
                          mode: str = STATIC, probe=None, *,
                          deps=None, snapshot: IndexSnapshot) -> ImportValidationOutcome:
    """Build and evaluate each file's import expression; map false
    expressions to taxonomy issues."""
    if mode == LIVE and probe is None:
        raise ValueError("live mode requires a probe runner")
    deps = project.declared_deps if deps is None else deps
    declared_names = {d.name for d in deps}
    own_modules = _own_top_modules(project)
    issues: list[IssueRecord] = []
    warnings: list[str] = []
    analyzed_any = False
    used_legacy = False
    all_true = True

    for sf in sorted(project.source_files, key=lambda s: str(s.path)):
        if sf.tree is None:
            continue
        analyzed_any = True
        used_legacy = used_legacy or sf.used_legacy
        for line, call in find_dynamic_imports(sf.tree):
            warnings.append(f"{sf.path}:{line}: dynamic import via {call} "
                            "is not analyzable")
        nodes = collect_imports(sf.tree, str(sf.path))
        external = [n for n in nodes if classify_import(n, sf.local_modules) == EXTERNAL]
        expr = build_import_expr(sf.tree, external)
        leaves = list(iter_leaves(expr))
        # absolute imports of the release's own modules are excluded from
        # environment validation, like any other internal import
        own_leaves = [l for l in leaves
                      if l.node.module_path.split(".")[0] in own_modules]
        probed_leaves = [l for l in leaves if l not in own_leaves]

        results: dict = {leaf.node: True for leaf in own_leaves}
        details: dict = {}
        if mode == STATIC:
            for leaf in probed_leaves:
                resolution = resolve_import(env, leaf.node.module_path)
                results[leaf.node] = resolution.status == RESOLVED
                details[leaf.node] = resolution
        else:
            statements = [f"import {leaf.node.module_path}" for leaf in probed_leaves]
            outcomes = probe(statements)
            for leaf, outcome in zip(probed_leaves, outcomes):
                results[leaf.node] = outcome.ok
                details[leaf.node] = outcome

        if evaluate_expr(expr, results):
            continue
        all_true = False
        location = str(sf.path)
        false_root = [leaf for leaf in root_leaves(expr) if not results[leaf.node]]
        if false_root:
            for leaf in false_root:
                if mode == STATIC:
                    issues.append(_classify_static_failure(
                        leaf, details[leaf.node], env, snapshot, declared_names,
                        f"{location}:{leaf.node.line}"))
                else:
                    issues.append(_classify_live_failure(
                        leaf, details[leaf.node], env, snapshot, declared_names,
                        f"{location}:{leaf.node.line}"))
        else:
            failing = sorted({leaf.node.module_path for leaf in leaves
                              if not results[leaf.node]})
            issues.append(IssueRecord.make(
                IssueKind.MULTIPLE_VERSION_CONTROL_FAILURE, location,
                "no branch alternative succeeds in this environment "
                f"(failing imports: {', '.join(failing)})",
            ))
    return ImportValidationOutcome(issues, analyzed_any, used_legacy, all_true,
                                   warnings)


def _load_tolerant(root: Path):
    """Load a project, converting load errors into issues plus the partial model."""
    issues: list[IssueRecord] = []
    try:
        project = load_project(root)
    except MissingConfigFiles as exc:
        issues.append(IssueRecord.make(
            IssueKind.MISSING_CONFIG_FILES, str(root),
            "missing necessary configuration files: no requirements file, "
            "metadata directory or setup script found",
        ))
        project = exc.project
    except MissingSourceCode as exc:
        issues.append(IssueRecord.make(
            IssueKind.MISSING_SOURCE_CODE, str(root), str(exc),
        ))
        project = exc.project
    return project, issues


def check_project(root: str | Path, options: CheckOptions, *,
                  name: str | None = None, version: str | None = None,
                  inferred_deps=None, inferred_python: str | None = None,
                  bench_mode: bool = False) -> CheckReport:
    """Run the full pipeline over one project directory."""
    root = Path(root)
    project, load_issues = _load_tolerant(root)
    issues = list(load_issues)
    statuses = [CheckStatus.S0]

    report_name = name or project.declared_name or root.name
    report_version = version or (project.declared_version.raw if project.declared_version else "0")
    config_missing = any(i.kind is IssueKind.MISSING_CONFIG_FILES for i in issues)

    deps = tuple(inferred_deps) if inferred_deps is not None else project.declared_deps

    if config_missing:
        env = build_environment("3.10", [],
                                ["environment is degraded: configuration files missing"])
        chosen = None
    else:
        candidates = [inferred_python] if inferred_python else None
        outcome = run_installation_check(
            project, options.snapshot, options.table,
            deps=deps, name=report_name, version=report_version,
            sibling_cache=options.sibling_cache, python_candidates=candidates,
        )
        issues.extend(outcome.issues)
        chosen = outcome.chosen_python
        if outcome.env is not None:
            env = outcome.env
        else:
            fallback_py = inferred_python or "3.10"
            env = degraded_environment(deps, options.snapshot, fallback_py)

    issues.extend(run_dependency_check(
        project, env, options.snapshot, deps=deps,
        require_python_declared=not bench_mode,
        location=report_name,
    ))

    validation = run_import_validation(
        project, env, options.mode, options.probe,
        deps=deps, snapshot=options.snapshot,
    )
    issues.extend(validation.issues)
    if validation.analyzed_any:
        statuses.append(CheckStatus.S2 if validation.used_legacy else CheckStatus.S1)
        statuses.append(CheckStatus.S3)
        if validation.all_expressions_true:
            statuses.append(CheckStatus.S4)

    checks = {check.value: True for check in CheckName}
    for issue in issues:
        checks[issue.check.value] = False

    env_summary = None
    if env is not None:
        env_summary = {
            "python": env.python_version,
            "installed": {d.name: d.version.raw for d in
                          sorted(env.installed.values(), key=lambda d: d.name)},
        }

    warnings = sorted(set(project.warnings) | set(env.warnings if env else ())
                      | set(validation.warnings))
    return CheckReport(
        name=report_name,
        version=report_version,
        mode=options.mode,
        final_status=statuses[-1],
        statuses=tuple(statuses),
        chosen_python=chosen,
        checks=checks,
        issues=tuple(sorted(issues, key=lambda i: i.sort_key())),
        environment=env_summary,
        warnings=tuple(warnings),
    )


def check_release(name: str, version: str, snapshot: IndexSnapshot,
                  options: CheckOptions) -> CheckReport:
    """Check one release materialized in the corpus directory as <name>-<version>."""
    if options.corpus_dir is None:
        raise CorpusError("no corpus directory configured")
    if snapshot is not options.snapshot:
        options = replace(options, snapshot=snapshot)
    normalized = normalize_name(name)
    release_dir = Path(options.corpus_dir) / f"{normalized}-{version}"
    if not release_dir.is_dir():
        raise CorpusError(f"release directory not found: {release_dir}")
    return check_project(release_dir, options, name=normalized, version=version)
