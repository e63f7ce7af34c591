"""Run-time environment models.

An environment is an interpreter version plus installed distributions and
the top-level modules they provide. It is built either by simulating
installation against a snapshot (constraint accumulation, latest
satisfying version, no backtracking search) or by scanning an installed
site directory.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from email.parser import Parser as HeaderParser
from pathlib import Path

from .requirements import InvalidRequirement, parse_requirement
from .issues import IssueKind, IssueRecord
from .snapshot import (
    DependencyDecl,
    IndexSnapshot,
    ReleaseRecord,
    UnknownPackage,
    satisfying_candidates,
)
from .versions import (
    InvalidName,
    InvalidVersion,
    SpecifierSet,
    Version,
    normalize_name,
    parse_version,
)

# Standard-library top modules resolve without any installed distribution.
# One coarse union covers both interpreter lines; per-version stdlib tables
# are not worth their weight for module-granular validation.
_PY2_ERA_STDLIB = {
    "BaseHTTPServer", "ConfigParser", "Cookie", "HTMLParser", "Queue",
    "SimpleHTTPServer", "SocketServer", "StringIO", "Tkinter", "__builtin__",
    "anydbm", "commands", "cookielib", "copy_reg", "cPickle", "cStringIO",
    "dummy_thread", "exceptions", "htmlentitydefs", "httplib", "md5", "new",
    "repr", "sets", "sha", "thread", "urllib2", "urlparse", "xmlrpclib",
}
STDLIB_MODULES = frozenset(sys.stdlib_module_names) | frozenset(_PY2_ERA_STDLIB)

RESOLVED = "resolved"
MISSING_TOP_LEVEL = "missing-top-level"
MISSING_SUBMODULE = "missing-submodule"


class ScanError(ValueError):
    """Installed-environment metadata could not be read."""


class UnsupportedMarker(ValueError):
    """Marker uses variables beyond python_version/extra."""


class InstallFailure(Exception):
    """Simulated installation aborted."""

    DEPENDENCY_CONFLICT = "dependency-conflict"
    PYTHON_VERSION_REJECTED = "python-version-rejected"

    def __init__(self, reason: str, package: str, evidence: str, chain: tuple[str, ...] = ()):
        super().__init__(evidence)
        self.reason = reason
        self.package = package
        self.evidence = evidence
        self.chain = chain


@dataclass(frozen=True)
class InstalledDist:
    name: str
    version: Version
    top_level_modules: tuple[str, ...]
    requires_dist: tuple[DependencyDecl, ...] = ()


@dataclass(frozen=True)
class EnvironmentModel:
    python_version: str
    installed: dict[str, InstalledDist] = field(default_factory=dict)
    module_index: dict[str, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


def _module_listing(rel: ReleaseRecord) -> tuple[str, ...]:
    if rel.top_level_modules is not None:
        return rel.top_level_modules
    # no inventory in the snapshot: fall back to the name-derived module
    return (rel.name.replace("-", "_"),)


def build_environment(python_version: str, dists, warnings=()) -> EnvironmentModel:
    installed: dict[str, InstalledDist] = {}
    module_index: dict[str, str] = {}
    warn = set(warnings)
    for dist in sorted(dists, key=lambda d: d.name):
        installed[dist.name] = dist
        for module in dist.top_level_modules:
            top = module.split(".")[0]
            if top in module_index and module_index[top] != dist.name:
                warn.add(f"module {top} provided by both {module_index[top]} and {dist.name}")
                continue
            module_index[top] = dist.name
    # warnings are deduplicated and sorted so environments built from the
    # same inputs compare equal regardless of accumulation order
    return EnvironmentModel(python_version, installed, module_index, tuple(sorted(warn)))


_MARKER_TOKEN_RE = re.compile(
    r"\s*(?:(?P<str>\"[^\"]*\"|'[^']*')|(?P<op>===|==|!=|<=|>=|~=|<|>)"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_.]*)|(?P<paren>[()]))"
)


def _tokenize_marker(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _MARKER_TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise UnsupportedMarker(f"cannot tokenize marker: {text!r}")
            break
        if m.group("str") is not None:
            tokens.append(("str", m.group("str")[1:-1]))
        elif m.group("op") is not None:
            tokens.append(("op", m.group("op")))
        elif m.group("word") is not None:
            w = m.group("word")
            tokens.append(("bool", w) if w in ("and", "or", "not", "in") else ("var", w))
        else:
            tokens.append(("paren", m.group("paren")))
        pos = m.end()
    return tokens


class _MarkerParser:
    """Recursive-descent evaluator for the python_version/extra subset."""

    def __init__(self, tokens, python_version: str):
        self.tokens = tokens
        self.pos = 0
        self.py = parse_version(python_version)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise UnsupportedMarker("unexpected end of marker")
        self.pos += 1
        return tok

    def parse(self) -> bool:
        value = self.or_expr()
        if self.peek() is not None:
            raise UnsupportedMarker("trailing tokens in marker")
        return value

    def or_expr(self) -> bool:
        value = self.and_expr()
        while self.peek() == ("bool", "or"):
            self.take()
            value = self.and_expr() or value
        return value

    def and_expr(self) -> bool:
        value = self.atom()
        while self.peek() == ("bool", "and"):
            self.take()
            value = self.atom() and value
        return value

    def atom(self) -> bool:
        tok = self.peek()
        if tok == ("paren", "("):
            self.take()
            value = self.or_expr()
            if self.take() != ("paren", ")"):
                raise UnsupportedMarker("unbalanced parenthesis in marker")
            return value
        return self.comparison()

    def comparison(self) -> bool:
        left = self.take()
        op_tok = self.take()
        right = self.take()
        if op_tok[0] != "op":
            raise UnsupportedMarker(f"expected comparison operator, got {op_tok}")
        if left[0] == "str" and right[0] == "var":
            left, right = right, left
            op_tok = ("op", _FLIPPED_OPS.get(op_tok[1], op_tok[1]))
        if left[0] != "var" or right[0] != "str":
            raise UnsupportedMarker("comparison must involve one variable and one literal")
        var, op, literal = left[1], op_tok[1], right[1]
        if var == "extra":
            if op == "==":
                return False  # extras are never installed
            if op == "!=":
                return True
            raise UnsupportedMarker(f"unsupported extra comparison: {op}")
        if var != "python_version":
            raise UnsupportedMarker(f"unsupported marker variable: {var}")
        try:
            other = parse_version(literal)
        except InvalidVersion as exc:
            raise UnsupportedMarker(f"bad version in marker: {literal!r}") from exc
        if op in ("==", "==="):
            return self.py == other
        if op == "!=":
            return self.py != other
        if op == "<=":
            return self.py <= other
        if op == ">=":
            return self.py >= other
        if op == "<":
            return self.py < other
        if op == ">":
            return self.py > other
        raise UnsupportedMarker(f"unsupported marker operator: {op}")


_FLIPPED_OPS = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}


def evaluate_marker(marker: str, python_version: str) -> bool:
    """Evaluate a marker with python_version only.

    extra == "..." evaluates false (extras are never installed). Any other
    variable raises UnsupportedMarker; the caller skips the dependency with
    a warning.
    """
    return _MarkerParser(_tokenize_marker(marker), python_version).parse()


def _marker_gate(decl: DependencyDecl, python_version: str, warnings: list[str],
                 requirer: str) -> bool:
    """True when the dependency applies in this environment."""
    if decl.marker is None:
        return True
    try:
        return evaluate_marker(decl.marker, python_version)
    except UnsupportedMarker as exc:
        warnings.append(f"{requirer}: dependency {decl.name} skipped ({exc})")
        return False


@dataclass
class _Constraint:
    spec: SpecifierSet
    origin: tuple[str, str]  # (requirer name, requirer version); root is ("<root>", "")


def _merged_set(constraints: list[_Constraint]) -> SpecifierSet:
    specs = tuple(s for c in constraints for s in c.spec.specs)
    raw = ",".join(c.spec.raw for c in constraints if c.spec.raw)
    return SpecifierSet(specs, raw=raw)


def _describe_chain(name: str, constraints: list[_Constraint]) -> tuple[str, ...]:
    out = []
    for c in sorted(constraints, key=lambda c: c.origin):
        requirer = c.origin[0] if c.origin[0] != "<root>" else "project"
        spec = c.spec.raw or "(any)"
        out.append(f"{requirer} requires {name}{spec if spec != '(any)' else ' (any)'}")
    return tuple(out)


def simulate_install(deps, snapshot: IndexSnapshot, python_version: str) -> EnvironmentModel:
    """Breadth-first transitive closure with accumulated constraints.

    Within each frontier all new constraints are gathered before any
    selection, so the result does not depend on input ordering. A package
    invalidated after selection is re-selected once; a second invalidation
    aborts with a dependency conflict. There is no backtracking search over
    older versions of other packages.
    """
    warnings: list[str] = []
    constraints: dict[str, list[_Constraint]] = {}
    selected: dict[str, ReleaseRecord] = {}
    selection_count: dict[str, int] = {}

    pending: set[str] = set()
    for decl in deps:
        if not _marker_gate(decl, python_version, warnings, "project"):
            continue
        constraints.setdefault(decl.name, []).append(_Constraint(decl.constraint, ("<root>", "")))
        pending.add(decl.name)

    py = parse_version(python_version)

    def select(name: str) -> ReleaseRecord:
        merged = _merged_set(constraints[name])
        try:
            matching = satisfying_candidates(snapshot, name, merged)
        except UnknownPackage:
            raise InstallFailure(
                InstallFailure.DEPENDENCY_CONFLICT, name,
                f"could not find a version that satisfies the requirement "
                f"{name}{merged.raw} (package not in index)",
                _describe_chain(name, constraints[name]),
            ) from None
        if not matching:
            available = snapshot.releases(name)
            available_max = max((r.version.raw for r in available), default="none")
            raise InstallFailure(
                InstallFailure.DEPENDENCY_CONFLICT, name,
                f"could not find a version that satisfies the requirement "
                f"{name}{merged.raw or ' (any)'} (latest available: {available_max})",
                _describe_chain(name, constraints[name]),
            )
        py_ok = [r for r in matching
                 if r.requires_python is None or r.requires_python.matches(py)]
        if not py_ok:
            best = matching[-1]
            raise InstallFailure(
                InstallFailure.PYTHON_VERSION_REJECTED, name,
                f"{name} {best.version.raw} requires Python "
                f"{best.requires_python.raw if best.requires_python else ''}, "
                f"but the environment uses {python_version}",
                _describe_chain(name, constraints[name]),
            )
        return py_ok[-1]

    while pending:
        newly: list[tuple[str, ReleaseRecord | None, ReleaseRecord]] = []
        for name in sorted(pending):
            old = selected.get(name)
            rel = select(name)
            selection_count[name] = selection_count.get(name, 0) + 1
            selected[name] = rel
            newly.append((name, old, rel))

        next_pending: set[str] = set()
        for name, old, rel in newly:
            if old is not None and old.version == rel.version:
                continue
            if old is not None:
                # retract the replaced version's own requirements
                stale = (name, old.version.raw)
                for target in list(constraints):
                    constraints[target] = [c for c in constraints[target] if c.origin != stale]
            for req in rel.requires_dist:
                if not _marker_gate(req, python_version, warnings, name):
                    continue
                bucket = constraints.setdefault(req.name, [])
                bucket.append(_Constraint(req.constraint, (name, rel.version.raw)))
                if req.name not in selected:
                    next_pending.add(req.name)
                    continue
                chosen = selected[req.name].version
                if not _merged_set(bucket).matches(chosen):
                    if selection_count.get(req.name, 0) >= 2:
                        raise InstallFailure(
                            InstallFailure.DEPENDENCY_CONFLICT, req.name,
                            f"conflicting constraints on {req.name}: installed "
                            f"{chosen.raw} repeatedly invalidated",
                            _describe_chain(req.name, bucket),
                        )
                    next_pending.add(req.name)
        pending = next_pending

    dists = [
        InstalledDist(rel.name, rel.version, _module_listing(rel), rel.requires_dist)
        for rel in selected.values()
    ]
    return build_environment(python_version, dists, warnings)


def scan_environment(site_dir: str | Path, python_version: str | None = None) -> EnvironmentModel:
    """Model an installed environment from its dist-info directories."""
    site_dir = Path(site_dir)
    if not site_dir.is_dir():
        raise ScanError(f"site directory does not exist: {site_dir}")
    if python_version is None:
        python_version = f"{sys.version_info[0]}.{sys.version_info[1]}"
    warnings: list[str] = []
    dists = []
    for meta_dir in sorted(site_dir.glob("*.dist-info")):
        metadata_file = meta_dir / "METADATA"
        if not metadata_file.is_file():
            raise ScanError(f"{meta_dir.name}: no METADATA file")
        try:
            msg = HeaderParser().parsestr(metadata_file.read_text(encoding="utf-8"))
        except UnicodeDecodeError as exc:
            raise ScanError(f"{meta_dir.name}: undecodable METADATA: {exc}") from exc
        raw_name, raw_version = msg.get("Name"), msg.get("Version")
        if not raw_name or not raw_version:
            raise ScanError(f"{meta_dir.name}: METADATA lacks Name or Version")
        try:
            name = normalize_name(raw_name.strip())
            version = parse_version(raw_version.strip())
        except (InvalidName, InvalidVersion) as exc:
            raise ScanError(f"{meta_dir.name}: {exc}") from exc
        requires = []
        for value in msg.get_all("Requires-Dist") or []:
            try:
                decl, _ = parse_requirement(value)
            except InvalidRequirement as exc:
                warnings.append(f"{meta_dir.name}: Requires-Dist skipped: {exc}")
                continue
            requires.append(decl)
        tl_file = meta_dir / "top_level.txt"
        if tl_file.is_file():
            modules = tuple(line.strip() for line in tl_file.read_text(encoding="utf-8").splitlines()
                            if line.strip())
        else:
            candidate = name.replace("-", "_")
            modules = ()
            if (site_dir / candidate / "__init__.py").is_file() or (site_dir / f"{candidate}.py").is_file():
                modules = (candidate,)
            warnings.append(f"{meta_dir.name}: no top_level.txt; inferred modules {list(modules)}")
        dists.append(InstalledDist(name, version, modules, tuple(requires)))
    return build_environment(python_version, dists, warnings)


def check_env_consistency(env: EnvironmentModel) -> list[IssueRecord]:
    """Cross-check installed versions against the requirements recorded by
    the installed distributions themselves."""
    issues: list[IssueRecord] = []
    scratch: list[str] = []
    for name in sorted(env.installed):
        dist = env.installed[name]
        for req in dist.requires_dist:
            if not _marker_gate(req, env.python_version, scratch, name):
                continue
            target = env.installed.get(req.name)
            if target is None:
                issues.append(IssueRecord.make(
                    IssueKind.MISSING_INDIRECT_IMPORT_MODULES,
                    name,
                    f"{name} {dist.version.raw} requires {req.name}"
                    f"{req.constraint.raw}, which is not installed",
                ))
            elif not req.constraint.matches(target.version):
                issues.append(IssueRecord.make(
                    IssueKind.MISSING_INDIRECT_IMPORT_MODULES,
                    name,
                    f"{name} {dist.version.raw} requires {req.name}"
                    f"{req.constraint.raw}, but {target.version.raw} is installed",
                ))
    return issues


@dataclass(frozen=True)
class ImportResolution:
    status: str  # RESOLVED | MISSING_TOP_LEVEL | MISSING_SUBMODULE
    provider: InstalledDist | None = None
    detail: str = ""


def resolve_import(env: EnvironmentModel, module_path: str) -> ImportResolution:
    """Decide whether a dotted module path is importable in the environment.

    Deeper segments are checked only when the providing distribution's
    module listing carries submodule entries; otherwise only the top level
    is decided.
    """
    top = module_path.split(".")[0]
    if top in STDLIB_MODULES:
        return ImportResolution(RESOLVED, None, "standard library")
    provider_name = env.module_index.get(top)
    if provider_name is None:
        return ImportResolution(
            MISSING_TOP_LEVEL, None, f"no installed distribution provides module {top!r}"
        )
    dist = env.installed[provider_name]
    if "." not in module_path:
        return ImportResolution(RESOLVED, dist)
    has_inventory = any(
        m.split(".")[0] == top and "." in m for m in dist.top_level_modules
    )
    if not has_inventory:
        return ImportResolution(RESOLVED, dist, "top level only; no submodule inventory")
    for entry in dist.top_level_modules:
        if entry == module_path or entry.startswith(module_path + "."):
            return ImportResolution(RESOLVED, dist)
    return ImportResolution(
        MISSING_SUBMODULE, dist,
        f"{provider_name} {dist.version.raw} does not provide module {module_path!r}",
    )
