"""Load a target package from disk.

A project contributes four things to the checks: dependency declarations
(requirements file and/or dist-info metadata), distribution metadata
(name, version, required Python), the source tree with per-file parse
results, and the per-directory local-module sets that later separate
internal from external imports.
"""
from __future__ import annotations

import ast
import io
import re
import tokenize
from dataclasses import dataclass, replace
from email.parser import Parser as HeaderParser
from pathlib import Path

from .issues import IssueKind, IssueRecord
from .requirements import InvalidRequirement, parse_requirement, parse_requirements_file
from .snapshot import DependencyDecl
from .versions import (
    InvalidName,
    InvalidSpecifier,
    InvalidVersion,
    SpecifierSet,
    Version,
    normalize_name,
    parse_specifier_set,
    parse_version,
)

REQUIREMENTS_FILE = "requirements.txt"
SETUP_REQUIRES_FILE = "setup_requires.txt"
PACKAGE_MARKER = "__init__.py"
BINARY_SUFFIXES = (".so", ".pyd")


class ProjectError(Exception):
    """Base for load-time project errors; carries the partial model so the
    caller can keep running degraded checks."""

    def __init__(self, message: str, project: "ProjectModel | None" = None):
        super().__init__(message)
        self.project = project


class MissingConfigFiles(ProjectError):
    """No recognized dependency declaration source in the project."""


class MissingSourceCode(ProjectError):
    """No source files locatable from the declared top-level modules."""


@dataclass(frozen=True)
class ParseFailure:
    reason: str  # "syntax" | "encoding"
    detail: str


@dataclass(frozen=True)
class SourceFile:
    """One source file with its parse result and directory-local module set."""

    path: Path  # relative to the project root
    local_modules: frozenset[str]
    tree: ast.AST | None = None
    failure: ParseFailure | None = None
    used_legacy: bool = False


@dataclass(frozen=True)
class ProjectModel:
    root: Path
    declared_name: str | None = None
    declared_version: Version | None = None
    declared_python: SpecifierSet | None = None
    declared_deps: tuple[DependencyDecl, ...] = ()
    setup_requires: tuple[DependencyDecl, ...] = ()
    metadata_dir_name: str | None = None
    source_files: tuple[SourceFile, ...] = ()
    top_level_declared: tuple[str, ...] | None = None
    binary_modules: tuple[str, ...] = ()
    classifiers: tuple[str, ...] = ()
    has_setup_py: bool = False
    setup_py_parses: bool = True
    warnings: tuple[str, ...] = ()


def local_modules_for(dir_path: str | Path) -> set[str]:
    """Module names visible from one directory: sibling .py files, package
    subdirectories, and binary extension modules."""
    dir_path = Path(dir_path)
    names: set[str] = set()
    for entry in dir_path.iterdir():
        if entry.is_dir():
            if (entry / PACKAGE_MARKER).is_file():
                names.add(entry.name)
        elif entry.suffix == ".py":
            if entry.stem != "__init__":
                names.add(entry.stem)
        elif entry.suffix in BINARY_SUFFIXES:
            names.add(entry.name.split(".")[0])
    return names


def _parse_metadata_dir(meta_dir: Path, warnings: list[str]):
    """Read Name/Version/Requires-* headers and top_level.txt."""
    name = version = python = None
    deps: list[DependencyDecl] = []
    classifiers: list[str] = []
    metadata_file = meta_dir / "METADATA"
    if metadata_file.is_file():
        msg = HeaderParser().parsestr(metadata_file.read_text(encoding="utf-8", errors="replace"))
        raw_name = msg.get("Name")
        if raw_name:
            try:
                name = normalize_name(raw_name.strip())
            except InvalidName as exc:
                warnings.append(f"{metadata_file}: {exc}")
        raw_version = msg.get("Version")
        if raw_version:
            try:
                version = parse_version(raw_version.strip())
            except InvalidVersion as exc:
                warnings.append(f"{metadata_file}: {exc}")
        raw_python = msg.get("Requires-Python")
        if raw_python:
            try:
                python = parse_specifier_set(raw_python.strip())
            except InvalidSpecifier as exc:
                warnings.append(f"{metadata_file}: {exc}")
        for value in msg.get_all("Requires-Dist") or []:
            try:
                decl, reqwarns = parse_requirement(value)
            except InvalidRequirement as exc:
                warnings.append(f"{metadata_file}: Requires-Dist skipped: {exc}")
                continue
            warnings.extend(f"{metadata_file}: {w}" for w in reqwarns)
            deps.append(decl)
        classifiers = [v.strip() for v in msg.get_all("Classifier") or []]
    else:
        warnings.append(f"{meta_dir.name}: no METADATA file")

    top_level = None
    tl_file = meta_dir / "top_level.txt"
    if tl_file.is_file():
        top_level = tuple(
            line.strip() for line in tl_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
    else:
        warnings.append(f"{meta_dir.name}: no top_level.txt; falling back to scanning the project root")
    return name, version, python, deps, classifiers, top_level


def _iter_source_files(base: Path):
    """All .py files under *base*, sorted, without following symlinks."""
    stack = [base]
    found: list[Path] = []
    while stack:
        current = stack.pop()
        for entry in sorted(current.iterdir()):
            if entry.is_symlink():
                continue
            if entry.is_dir():
                stack.append(entry)
            elif entry.suffix == ".py":
                found.append(entry)
    return sorted(found)


def _discover_sources(root: Path, top_level: tuple[str, ...] | None,
                      warnings: list[str]):
    """Locate source files and binary modules from the declared top-level
    modules, or by scanning the project root when nothing was declared."""
    files: list[Path] = []
    binaries: list[str] = []
    if top_level is not None:
        for module in top_level:
            mod_dir = root / module
            mod_file = root / f"{module}.py"
            binary = [p for p in root.glob(f"{module}*") if p.suffix in BINARY_SUFFIXES
                      and p.name.split(".")[0] == module]
            if mod_dir.is_dir():
                files.extend(_iter_source_files(mod_dir))
            elif mod_file.is_file():
                files.append(mod_file)
            elif binary:
                binaries.append(module)
    else:
        for entry in sorted(root.iterdir()):
            if entry.is_symlink():
                continue
            if entry.is_dir() and (entry / PACKAGE_MARKER).is_file():
                files.extend(_iter_source_files(entry))
            elif entry.suffix == ".py" and entry.name != "setup.py":
                files.append(entry)
            elif entry.suffix in BINARY_SUFFIXES:
                binaries.append(entry.name.split(".")[0])
    return sorted(set(files)), sorted(set(binaries))


_LEGACY_PRINT_RE = re.compile(r"^(\s*)print\s+(?!\()(.+?)\s*$")
_LEGACY_EXCEPT_RE = re.compile(r"^(\s*except\s+[^,:]+),\s*([A-Za-z_][A-Za-z0-9_]*)\s*:")


def _legacy_rewrite(text: str) -> str:
    """Lexically rewrite print statements and old except clauses so that
    straightforward legacy-era files can still be analyzed."""
    out = []
    for line in text.splitlines(keepends=False):
        m = _LEGACY_PRINT_RE.match(line)
        if m and not m.group(2).startswith((">>", "=")):
            line = f"{m.group(1)}print({m.group(2)})"
        else:
            line = _LEGACY_EXCEPT_RE.sub(r"\1 as \2:", line)
        out.append(line)
    return "\n".join(out) + "\n"


def parse_source_text(data: bytes, filename: str):
    """Parse one file's bytes.

    Returns (tree, failure, used_legacy): modern grammar first, then one
    legacy-tolerance pass; undecodable bytes yield an encoding failure.
    """
    try:
        encoding, _ = tokenize.detect_encoding(io.BytesIO(data).readline)
        text = data.decode(encoding)
    except (UnicodeDecodeError, LookupError) as exc:
        return None, ParseFailure("encoding", str(exc)), False
    except SyntaxError as exc:  # malformed coding cookie
        return None, ParseFailure("encoding", str(exc)), False
    try:
        return ast.parse(text, filename=filename), None, False
    except SyntaxError as first_error:
        try:
            return ast.parse(_legacy_rewrite(text), filename=filename), None, True
        except SyntaxError:
            detail = f"line {first_error.lineno}: {first_error.msg}"
            return None, ParseFailure("syntax", detail), False
    except ValueError as exc:  # e.g. null bytes
        return None, ParseFailure("syntax", str(exc)), False


def parse_sources(project: ProjectModel) -> ProjectModel:
    """Fill every SourceFile with a syntax tree or a ParseFailure."""
    parsed = []
    for sf in project.source_files:
        if sf.tree is not None or sf.failure is not None:
            parsed.append(sf)
            continue
        data = (project.root / sf.path).read_bytes()
        tree, failure, used_legacy = parse_source_text(data, str(sf.path))
        parsed.append(replace(sf, tree=tree, failure=failure, used_legacy=used_legacy))
    return replace(project, source_files=tuple(parsed))


def load_project(root: str | Path) -> ProjectModel:
    """Load and parse a project directory.

    Raises MissingConfigFiles / MissingSourceCode; both exceptions carry the
    partial model so degraded checks can continue.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"project root does not exist: {root}")
    warnings: list[str] = []

    req_file = root / REQUIREMENTS_FILE
    req_deps: list[DependencyDecl] = []
    if req_file.is_file():
        req_deps, req_warnings = parse_requirements_file(req_file)
        warnings.extend(req_warnings)

    meta_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.endswith(".dist-info"))
    meta_dir = meta_dirs[0] if meta_dirs else None
    if len(meta_dirs) > 1:
        warnings.append(f"multiple dist-info directories; using {meta_dir.name}")

    declared_name = declared_version = declared_python = None
    meta_deps: list[DependencyDecl] = []
    classifiers: list[str] = []
    top_level = None
    if meta_dir is not None:
        declared_name, declared_version, declared_python, meta_deps, classifiers, top_level = \
            _parse_metadata_dir(meta_dir, warnings)

    setup_reqs: list[DependencyDecl] = []
    setup_req_file = root / SETUP_REQUIRES_FILE
    if setup_req_file.is_file():
        setup_reqs, sr_warnings = parse_requirements_file(setup_req_file)
        warnings.extend(sr_warnings)

    setup_py = root / "setup.py"
    has_setup_py = setup_py.is_file()
    setup_py_parses = True
    if has_setup_py:
        _, failure, _ = parse_source_text(setup_py.read_bytes(), "setup.py")
        setup_py_parses = failure is None
        if not setup_reqs:
            warnings.append("setup.py present; dynamic setup requirements are not analyzable")

    deps: list[DependencyDecl] = []
    seen = set()
    for decl in req_deps + meta_deps:
        key = (decl.name, decl.constraint.raw, decl.marker)
        if key not in seen:
            seen.add(key)
            deps.append(decl)

    source_paths, binaries = _discover_sources(root, top_level, warnings)
    local_cache: dict[Path, frozenset[str]] = {}
    source_files = []
    for path in source_paths:
        parent = path.parent
        if parent not in local_cache:
            local_cache[parent] = frozenset(local_modules_for(parent))
        source_files.append(SourceFile(path.relative_to(root), local_cache[parent]))

    project = ProjectModel(
        root=root,
        declared_name=declared_name,
        declared_version=declared_version,
        declared_python=declared_python,
        declared_deps=tuple(deps),
        setup_requires=tuple(setup_reqs),
        metadata_dir_name=meta_dir.name if meta_dir else None,
        source_files=tuple(source_files),
        top_level_declared=top_level,
        binary_modules=tuple(binaries),
        classifiers=tuple(classifiers),
        has_setup_py=has_setup_py,
        setup_py_parses=setup_py_parses,
        warnings=tuple(warnings),
    )
    project = parse_sources(project)

    has_declarations = req_file.is_file() or meta_dir is not None or has_setup_py
    if not has_declarations:
        raise MissingConfigFiles(
            f"no requirements file, dist-info metadata or setup script in {root}", project
        )
    if not project.source_files and not project.binary_modules:
        raise MissingSourceCode(
            "no source files locatable from the declared top-level modules", project
        )
    return project


def check_metadata_consistency(project: ProjectModel) -> list[IssueRecord]:
    """Metadata directory naming and declared-module issues."""
    issues: list[IssueRecord] = []
    if project.metadata_dir_name and project.declared_name and project.declared_version:
        stem = project.metadata_dir_name
        if stem.endswith(".dist-info"):
            stem = stem[: -len(".dist-info")]
        dir_name, _, dir_version = stem.rpartition("-")
        consistent = False
        if dir_name and dir_version:
            try:
                consistent = (
                    normalize_name(dir_name) == project.declared_name
                    and parse_version(dir_version) == project.declared_version
                )
            except (InvalidName, InvalidVersion):
                consistent = False
        if not consistent:
            issues.append(IssueRecord.make(
                IssueKind.METADATA_INCONSISTENCY,
                project.metadata_dir_name,
                f"metadata directory {project.metadata_dir_name!r} does not match declared "
                f"{project.declared_name} {project.declared_version.raw}",
            ))
    if project.top_level_declared and (project.source_files or project.binary_modules):
        present_dirs = {sf.path.parts[0] for sf in project.source_files if len(sf.path.parts) > 1}
        present_files = {sf.path.stem for sf in project.source_files if len(sf.path.parts) == 1}
        present = present_dirs | present_files | set(project.binary_modules)
        for module in project.top_level_declared:
            if module not in present:
                issues.append(IssueRecord.make(
                    IssueKind.METADATA_INCONSISTENCY,
                    project.metadata_dir_name or str(project.root),
                    f"declared top-level module {module!r} has no matching source entry",
                ))
    return issues
