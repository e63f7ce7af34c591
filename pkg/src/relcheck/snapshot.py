"""Immutable model of a package-index metadata snapshot.

A snapshot is a frozen, dated copy of index metadata: for every package a
list of dated releases with their declared dependencies, classifiers and
importable modules. It is the sole source of truth for offline resolution.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .versions import (
    NormalizedName,
    SpecifierSet,
    Version,
    InvalidName,
    InvalidSpecifier,
    InvalidVersion,
    normalize_name,
    parse_specifier_set,
    parse_version,
)


class SchemaError(ValueError):
    """Snapshot or registry payload violates the expected schema."""


class DuplicateRelease(ValueError):
    """Two releases of the same package share one version number."""


class UnknownPackage(KeyError):
    """Package name absent from the snapshot."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown package: {self.name}"


class NoSatisfyingVersion(ValueError):
    """No release of the package matches the constraint."""

    def __init__(self, name: str, constraint: SpecifierSet, available_max: Version | None):
        self.name = name
        self.constraint = constraint
        self.available_max = available_max
        avail = available_max.raw if available_max else "none"
        super().__init__(
            f"could not find a version that satisfies the requirement "
            f"{name}{constraint} (latest available: {avail})"
        )


class NoCandidate(LookupError):
    """No interpreter in the table is old enough for the release date rule."""


@dataclass(frozen=True)
class DependencyDecl:
    """One declared dependency: normalized name, constraint, optional raw marker."""

    name: NormalizedName
    constraint: SpecifierSet
    marker: str | None = None


@dataclass(frozen=True)
class ReleaseRecord:
    name: NormalizedName
    version: Version
    release_date: date
    requires_python: SpecifierSet | None
    requires_dist: tuple[DependencyDecl, ...]
    classifiers: tuple[str, ...]
    top_level_modules: tuple[str, ...] | None
    has_source: bool


class IndexSnapshot:
    """Map of normalized package name to version-sorted release records."""

    def __init__(self, packages: dict[str, tuple[ReleaseRecord, ...]],
                 snapshot_date: date, warnings: tuple[str, ...] = ()):
        self.packages = packages
        self.snapshot_date = snapshot_date
        self.warnings = warnings
        self._module_providers: dict[str, frozenset[str]] | None = None

    def __contains__(self, name: str) -> bool:
        return name in self.packages

    def releases(self, name: NormalizedName) -> tuple[ReleaseRecord, ...]:
        try:
            return self.packages[name]
        except KeyError:
            raise UnknownPackage(name) from None

    def find_release(self, name: NormalizedName, version: Version) -> ReleaseRecord | None:
        for rel in self.packages.get(name, ()):
            if rel.version == version:
                return rel
        return None

    def module_providers(self, top_module: str) -> frozenset[str]:
        """Names of packages any of whose releases provide *top_module*."""
        if self._module_providers is None:
            index: dict[str, set[str]] = {}
            for name, rels in self.packages.items():
                for rel in rels:
                    for mod in rel.top_level_modules or ():
                        index.setdefault(mod.split(".")[0], set()).add(name)
            self._module_providers = {m: frozenset(s) for m, s in index.items()}
        return self._module_providers.get(top_module, frozenset())


def _parse_date(text, where: str) -> date:
    if not isinstance(text, str):
        raise SchemaError(f"{where}: date must be a string")
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise SchemaError(f"{where}: bad date {text!r}") from exc


def _dependency_from_dict(obj, where: str) -> DependencyDecl:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: requires_dist entries must be objects")
    try:
        raw_name = obj["name"]
        raw_constraint = obj["constraint"]
    except KeyError as exc:
        raise SchemaError(f"{where}: requires_dist entry missing field {exc}") from exc
    marker = obj.get("marker")
    if marker is not None and not isinstance(marker, str):
        raise SchemaError(f"{where}: marker must be a string or null")
    try:
        name = normalize_name(raw_name)
        constraint = parse_specifier_set(raw_constraint)
    except (InvalidName, InvalidSpecifier) as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return DependencyDecl(name, constraint, marker)


def release_from_dict(name: NormalizedName, obj: dict, where: str,
                      warnings: list[str]) -> ReleaseRecord | None:
    """Build one ReleaseRecord from its snapshot-schema dict.

    Returns None (with a recorded warning) for releases whose version string
    falls outside the supported grammar; they are excluded from resolution.
    """
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: release entries must be objects")
    for fld in ("version", "release_date", "requires_python", "requires_dist",
                "classifiers", "top_level_modules", "has_source"):
        if fld not in obj:
            raise SchemaError(f"{where}: missing field {fld!r}")
    try:
        version = parse_version(obj["version"])
    except InvalidVersion:
        warnings.append(f"{where}: unparseable version {obj['version']!r} excluded")
        return None
    release_date = _parse_date(obj["release_date"], where)
    rp = obj["requires_python"]
    if rp is not None:
        try:
            rp = parse_specifier_set(rp)
        except InvalidSpecifier as exc:
            raise SchemaError(f"{where}: {exc}") from exc
    deps = tuple(_dependency_from_dict(d, where) for d in obj["requires_dist"])
    classifiers = obj["classifiers"]
    if not isinstance(classifiers, list) or not all(isinstance(c, str) for c in classifiers):
        raise SchemaError(f"{where}: classifiers must be a list of strings")
    tlm = obj["top_level_modules"]
    if tlm is not None:
        if not isinstance(tlm, list) or not all(isinstance(m, str) for m in tlm):
            raise SchemaError(f"{where}: top_level_modules must be a list of strings or null")
        tlm = tuple(tlm)
    has_source = obj["has_source"]
    if not isinstance(has_source, bool):
        raise SchemaError(f"{where}: has_source must be a boolean")
    return ReleaseRecord(name, version, release_date, rp, deps,
                         tuple(classifiers), tlm, has_source)


def snapshot_from_dict(data: dict) -> IndexSnapshot:
    if not isinstance(data, dict):
        raise SchemaError("snapshot must be a JSON object")
    for fld in ("snapshot_date", "packages"):
        if fld not in data:
            raise SchemaError(f"snapshot missing field {fld!r}")
    snapshot_date = _parse_date(data["snapshot_date"], "snapshot_date")
    raw_packages = data["packages"]
    if not isinstance(raw_packages, dict):
        raise SchemaError("packages must be an object")
    warnings: list[str] = []
    packages: dict[str, list[ReleaseRecord]] = {}
    for raw_name, raw_rels in raw_packages.items():
        try:
            name = normalize_name(raw_name)
        except InvalidName as exc:
            raise SchemaError(str(exc)) from exc
        if not isinstance(raw_rels, list):
            raise SchemaError(f"{raw_name}: releases must be a list")
        bucket = packages.setdefault(name, [])
        for i, obj in enumerate(raw_rels):
            rel = release_from_dict(name, obj, f"{raw_name}[{i}]", warnings)
            if rel is None:
                continue
            if rel.release_date > snapshot_date:
                raise SchemaError(
                    f"{raw_name}[{i}]: release date {rel.release_date} is after "
                    f"snapshot date {snapshot_date}"
                )
            if any(existing.version == rel.version for existing in bucket):
                raise DuplicateRelease(f"{name} {rel.version.raw}")
            bucket.append(rel)
    final = {name: tuple(sorted(rels, key=lambda r: r.version))
             for name, rels in sorted(packages.items())}
    return IndexSnapshot(final, snapshot_date, tuple(warnings))


def load_snapshot(path: str | Path) -> IndexSnapshot:
    """Load and validate a snapshot JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return snapshot_from_dict(data)


def release_to_dict(rel: ReleaseRecord) -> dict:
    return {
        "version": rel.version.raw,
        "release_date": rel.release_date.isoformat(),
        "requires_python": rel.requires_python.raw if rel.requires_python else None,
        "requires_dist": [
            {"name": d.name, "constraint": d.constraint.raw, "marker": d.marker}
            for d in rel.requires_dist
        ],
        "classifiers": list(rel.classifiers),
        "top_level_modules": list(rel.top_level_modules) if rel.top_level_modules is not None else None,
        "has_source": rel.has_source,
    }


def snapshot_to_dict(snapshot: IndexSnapshot) -> dict:
    return {
        "snapshot_date": snapshot.snapshot_date.isoformat(),
        "packages": {
            name: [release_to_dict(r) for r in rels]
            for name, rels in sorted(snapshot.packages.items())
        },
    }


def dump_snapshot(snapshot: IndexSnapshot, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(snapshot_to_dict(snapshot), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


# Final-release dates of CPython, major.minor -> date.
_DEFAULT_INTERPRETERS = {
    "2.7": "2010-07-03",
    "3.0": "2008-12-03",
    "3.1": "2009-06-27",
    "3.2": "2011-02-20",
    "3.3": "2012-09-29",
    "3.4": "2014-03-16",
    "3.5": "2015-09-13",
    "3.6": "2016-12-23",
    "3.7": "2018-06-27",
    "3.8": "2019-10-14",
    "3.9": "2020-10-05",
    "3.10": "2021-10-04",
    "3.11": "2022-10-24",
    "3.12": "2023-10-02",
}


def _py_key(version: str) -> tuple[int, int]:
    major, minor = version.split(".")
    return int(major), int(minor)


class InterpreterReleaseTable:
    """Interpreter version (major.minor) to release date."""

    def __init__(self, dates: dict[str, date]):
        for v in dates:
            _py_key(v)  # validates the shape early
        by_major: dict[int, list[tuple[int, date]]] = {}
        for v, d in dates.items():
            major, minor = _py_key(v)
            by_major.setdefault(major, []).append((minor, d))
        for major, entries in by_major.items():
            entries.sort()
            for (m1, d1), (m2, d2) in zip(entries, entries[1:]):
                if d2 <= d1:
                    raise SchemaError(
                        f"interpreter dates must increase within the {major}.x series: "
                        f"{major}.{m1} {d1} vs {major}.{m2} {d2}"
                    )
        self.dates = dict(sorted(dates.items(), key=lambda kv: _py_key(kv[0])))

    @classmethod
    def default(cls) -> "InterpreterReleaseTable":
        return cls({v: date.fromisoformat(d) for v, d in _DEFAULT_INTERPRETERS.items()})

    @classmethod
    def load(cls, path: str | Path) -> "InterpreterReleaseTable":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaError(f"{path}: interpreter table must be an object")
        return cls({v: _parse_date(d, v) for v, d in data.items()})

    def versions(self) -> list[str]:
        """All interpreter versions, ascending by (major, minor)."""
        return list(self.dates)

    def released_before(self, cutoff: date) -> list[str]:
        return [v for v, d in self.dates.items() if d <= cutoff]


_CLASSIFIER_PREFIX = "Programming Language :: Python :: "
_INITIAL_VERSION_WINDOW = timedelta(days=180)


def python_versions_from_classifiers(classifiers) -> list[str]:
    """Extract X.Y interpreter versions from trove classifiers.

    Versionless classifiers (bare "... :: Python :: 3") are ignored.
    """
    found = []
    for c in classifiers:
        text = c.strip()
        if not text.startswith(_CLASSIFIER_PREFIX):
            continue
        tail = text[len(_CLASSIFIER_PREFIX):].strip()
        parts = tail.split(".")
        if len(parts) == 2 and all(p.isdigit() for p in parts):
            found.append(f"{int(parts[0])}.{int(parts[1])}")
    return found


def initial_python_version(rel: ReleaseRecord, snapshot: IndexSnapshot,
                           table: InterpreterReleaseTable) -> str:
    """Initial interpreter version assignment for a release.

    The highest X.Y named by a Python classifier wins; without classifiers,
    the highest interpreter released at least 180 days before the release
    date (boundary inclusive).
    """
    if rel.name not in snapshot:
        raise UnknownPackage(rel.name)
    from_classifiers = python_versions_from_classifiers(rel.classifiers)
    if from_classifiers:
        return max(from_classifiers, key=_py_key)
    cutoff = rel.release_date - _INITIAL_VERSION_WINDOW
    candidates = table.released_before(cutoff)
    if not candidates:
        raise NoCandidate(
            f"no interpreter released on or before {cutoff} for {rel.name} {rel.version.raw}"
        )
    return max(candidates, key=_py_key)


def satisfying_candidates(snapshot: IndexSnapshot, name: NormalizedName,
                          spec_set: SpecifierSet) -> list[ReleaseRecord]:
    """Releases of *name* matching *spec_set*, ascending by version.

    With an empty constraint only final releases qualify (the installer
    convention: a bare requirement never picks a pre-release).
    """
    rels = snapshot.releases(name)
    out = [r for r in rels if spec_set.matches(r.version)]
    if not spec_set:
        out = [r for r in out if not r.version.is_prerelease]
    return out


def latest_satisfying(snapshot: IndexSnapshot, name: NormalizedName,
                      spec_set: SpecifierSet) -> Version:
    """Maximum version of *name* matching *spec_set*."""
    matching = satisfying_candidates(snapshot, name, spec_set)
    if not matching:
        rels = snapshot.releases(name)
        available_max = max((r.version for r in rels), default=None)
        raise NoSatisfyingVersion(name, spec_set, available_max)
    return matching[-1].version


def detect_version_date_inversions(
    snapshot: IndexSnapshot, name: NormalizedName
) -> list[tuple[Version, Version]]:
    """All pairs (older-version, newer-version) whose dates are inverted.

    A pair qualifies when the version-older release was published after the
    version-newer one, which silently invalidates upper-bound constraints.
    """
    rels = snapshot.releases(name)
    out = []
    for j in range(len(rels)):
        for i in range(j):
            if rels[i].release_date > rels[j].release_date:
                out.append((rels[i].version, rels[j].version))
    return out
