"""Parsing of dependency declarations.

Covers two surfaces: single requirement strings as found in metadata
Requires-Dist headers ("gym (>=0.9.7) ; python_version >= '3'"), and
requirements-style text files (one dependency per line, comments, blank
lines, backslash continuations).
"""
from __future__ import annotations

import re
from pathlib import Path

from .snapshot import DependencyDecl
from .versions import (
    InvalidName,
    InvalidSpecifier,
    SpecifierSet,
    normalize_name,
    parse_specifier_set,
)


class InvalidRequirement(ValueError):
    """Requirement string outside the supported grammar."""


_NAME_PART_RE = re.compile(r"^\s*(?P<name>[A-Za-z0-9][A-Za-z0-9._-]*)\s*")
_EXTRAS_RE = re.compile(r"^\[(?P<extras>[^\]]*)\]\s*")


def parse_requirement(text: str) -> tuple[DependencyDecl, list[str]]:
    """Parse one requirement string into a DependencyDecl.

    Returns the declaration plus any warnings (extras are accepted but
    ignored). Raises InvalidRequirement for URL/path/editable forms and
    malformed input.
    """
    warnings: list[str] = []
    stripped = text.strip()
    if not stripped:
        raise InvalidRequirement("empty requirement")
    if stripped.startswith("-"):
        raise InvalidRequirement(f"option or include directive: {stripped!r}")
    if "://" in stripped or re.search(r"\s@\s", stripped) or stripped[0] in "./":
        raise InvalidRequirement(f"URL or path requirement: {stripped!r}")

    body, _, marker = stripped.partition(";")
    marker = marker.strip() or None

    m = _NAME_PART_RE.match(body)
    if m is None:
        raise InvalidRequirement(f"cannot parse requirement name: {stripped!r}")
    raw_name = m.group("name")
    rest = body[m.end():].strip()

    em = _EXTRAS_RE.match(rest)
    if em is not None:
        warnings.append(f"extras ignored: {raw_name}[{em.group('extras')}]")
        rest = rest[em.end():].strip()

    if rest.startswith("(") and rest.endswith(")"):
        rest = rest[1:-1].strip()

    try:
        name = normalize_name(raw_name)
    except InvalidName as exc:
        raise InvalidRequirement(str(exc)) from exc
    try:
        constraint = parse_specifier_set(rest) if rest else SpecifierSet()
    except InvalidSpecifier as exc:
        raise InvalidRequirement(f"{raw_name}: {exc}") from exc
    return DependencyDecl(name, constraint, marker), warnings


def _logical_lines(text: str):
    """Yield (first_line_number, joined_text) after comment stripping and
    backslash continuation."""
    pending: list[str] = []
    start = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if start is None:
            start = lineno
        if line.endswith("\\"):
            pending.append(line[:-1])
            continue
        pending.append(line)
        joined = " ".join(p.strip() for p in pending).strip()
        if joined:
            yield start, joined
        pending = []
        start = None
    if pending:
        joined = " ".join(p.strip() for p in pending).strip()
        if joined:
            yield start, joined


def parse_requirements_text(text: str, origin: str = "requirements") -> tuple[list[DependencyDecl], list[str]]:
    """Parse requirements-file text; unusable lines become warnings, not errors."""
    deps: list[DependencyDecl] = []
    warnings: list[str] = []
    for lineno, line in _logical_lines(text):
        try:
            decl, line_warnings = parse_requirement(line)
        except InvalidRequirement as exc:
            warnings.append(f"{origin}:{lineno}: skipped: {exc}")
            continue
        warnings.extend(f"{origin}:{lineno}: {w}" for w in line_warnings)
        deps.append(decl)
    return deps, warnings


def parse_requirements_file(path: str | Path) -> tuple[list[DependencyDecl], list[str]]:
    path = Path(path)
    return parse_requirements_text(path.read_text(encoding="utf-8"), origin=str(path))
