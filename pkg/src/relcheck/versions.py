"""Package-name normalization, version parsing/ordering and specifier matching.

Implements the subset of the Python packaging version grammar that index
metadata for mainstream packages actually uses: release segments plus
optional pre/post/dev parts. Epochs (``1!2.0``) and local version labels
(``1.0+abc``) are rejected as invalid; they are vanishingly rare in the
popular-package corpus and excluding them keeps the ordering rules small
enough to audit.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import total_ordering

NormalizedName = str


class InvalidName(ValueError):
    """Raised for package names containing characters outside [A-Za-z0-9._-]."""


class InvalidVersion(ValueError):
    """Raised for version strings outside the supported grammar."""


class InvalidSpecifier(ValueError):
    """Raised for malformed version specifiers."""


_NAME_RE = re.compile(r"^[A-Za-z0-9]([A-Za-z0-9._-]*[A-Za-z0-9])?$")
_SEP_RUN_RE = re.compile(r"[-_.]+")


def normalize_name(raw: str) -> NormalizedName:
    """Lowercase *raw* and collapse every run of ``.``/``_``/``-`` to one dash.

    Idempotent: normalizing an already-normalized name returns it unchanged.
    """
    if not raw or not _NAME_RE.match(raw):
        raise InvalidName(f"invalid package name: {raw!r}")
    return _SEP_RUN_RE.sub("-", raw).lower()


_PRE_ALIASES = {
    "a": "a", "alpha": "a",
    "b": "b", "beta": "b",
    "c": "rc", "rc": "rc", "pre": "rc", "preview": "rc",
}

_VERSION_RE = re.compile(
    r"""^\s*v?
    (?P<release>\d+(?:\.\d+)*)
    (?:[._-]?(?P<pre_l>a|alpha|b|beta|c|rc|pre|preview)[._-]?(?P<pre_n>\d*))?
    (?:-(?P<post_i>\d+)|[._-]?(?:post|rev|r)[._-]?(?P<post_n>\d*))?
    (?:[._-]?dev[._-]?(?P<dev_n>\d*))?
    \s*$""",
    re.IGNORECASE | re.VERBOSE,
)

_PHASE_RANK = {"a": 0, "b": 1, "rc": 2}


@total_ordering
class Version:
    """A parsed version with a total order.

    Trailing zero release segments are insignificant (``1.0`` == ``1.0.0``).
    Ordering within one release number: dev < pre (a < b < rc) < final < post,
    with a dev tag sorting just below the segment it is attached to.
    """

    __slots__ = ("release", "pre", "post", "dev", "raw", "_key")

    def __init__(self, release: tuple[int, ...], pre: tuple[str, int] | None,
                 post: int | None, dev: int | None, raw: str):
        self.release = release
        self.pre = pre
        self.post = post
        self.dev = dev
        self.raw = raw
        self._key = self._compute_key()

    def _compute_key(self):
        rel = self.release
        while len(rel) > 1 and rel[-1] == 0:
            rel = rel[:-1]
        if self.pre is not None:
            pre_k = (-1, _PHASE_RANK[self.pre[0]], self.pre[1])
        elif self.post is None and self.dev is not None:
            pre_k = (-2,)  # bare dev release sorts below any pre-release
        else:
            pre_k = (1,)
        post_k = (0,) if self.post is None else (1, self.post)
        dev_k = (1,) if self.dev is None else (0, self.dev)
        return (rel, pre_k, post_k, dev_k)

    @property
    def release_key(self) -> tuple[int, ...]:
        return self._key[0]

    @property
    def is_prerelease(self) -> bool:
        """True for versions carrying a pre or dev tag."""
        return self.pre is not None or self.dev is not None

    def __repr__(self):
        return f"Version({self.raw!r})"

    def __str__(self):
        return self.raw

    def __eq__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key == other._key

    def __lt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key < other._key

    def __hash__(self):
        return hash(self._key)


def parse_version(text: str) -> Version:
    """Parse *text* into a :class:`Version`, preserving the raw string."""
    if not isinstance(text, str):
        raise InvalidVersion(f"version must be a string, got {type(text).__name__}")
    m = _VERSION_RE.match(text)
    if m is None:
        raise InvalidVersion(f"invalid version: {text!r}")
    release = tuple(int(p) for p in m.group("release").split("."))
    pre = None
    if m.group("pre_l") is not None:
        phase = _PRE_ALIASES[m.group("pre_l").lower()]
        pre = (phase, int(m.group("pre_n") or 0))
    post = None
    if m.group("post_i") is not None:
        post = int(m.group("post_i"))
    elif m.group("post_n") is not None:
        post = int(m.group("post_n") or 0)
    dev = int(m.group("dev_n") or 0) if m.group("dev_n") is not None else None
    return Version(release, pre, post, dev, text.strip())


def compare_versions(a: Version, b: Version) -> int:
    """Total order over versions: -1, 0 or 1."""
    if a == b:
        return 0
    return -1 if a < b else 1


_OPERATORS = ("~=", "==", "!=", "<=", ">=", "<", ">")
_SPECIFIER_RE = re.compile(r"^\s*(?P<op>~=|==|!=|<=|>=|<|>)\s*(?P<version>[^\s,]+)\s*$")


@dataclass(frozen=True)
class Specifier:
    """One operator/version clause. ``prefix`` marks the internal ==-prefix
    form produced by expanding ``~=``; it compares only the leading release
    segments."""

    op: str
    version: Version
    prefix: bool = False

    def __str__(self):
        if self.prefix:
            return f"=={'.'.join(str(n) for n in self.version.release)}.*"
        return f"{self.op}{self.version.raw}"

    def _matches_clause(self, v: Version) -> bool:
        if self.prefix:
            want = self.version.release
            have = v.release + (0,) * (len(want) - len(v.release))
            return have[: len(want)] == want
        s = self.version
        if self.op == "==":
            return v == s
        if self.op == "!=":
            return v != s
        if self.op == "<=":
            return v <= s
        if self.op == ">=":
            return v >= s
        if self.op == ">":
            # a post-release never satisfies ">" of its own base version
            if s.post is None and v.post is not None and v.release_key == s.release_key and v.pre == s.pre:
                return False
            return v > s
        if self.op == "<":
            # a pre-release never satisfies "<" of its own base version
            if s.pre is None and s.dev is None and v.is_prerelease and v.release_key == s.release_key:
                return False
            return v < s
        raise AssertionError(f"unhandled operator {self.op}")


@dataclass(frozen=True)
class SpecifierSet:
    """A conjunction of specifiers. The empty set matches every version."""

    specs: tuple[Specifier, ...] = ()
    raw: str = field(default="", compare=False)

    def __str__(self):
        return self.raw if self.raw else ",".join(str(s) for s in self.specs)

    def __bool__(self):
        return bool(self.specs)

    @property
    def names_prerelease(self) -> bool:
        """True when any member specifier's operand carries a pre or dev tag."""
        return any(s.version.is_prerelease for s in self.specs)

    def matches(self, v: Version) -> bool:
        """True iff every member clause accepts *v*.

        Pre-release gating: a version with a pre or dev tag is accepted only
        when the set itself names a pre/dev version. The empty set matches
        every version unconditionally.
        """
        if not self.specs:
            return True
        if v.is_prerelease and not self.names_prerelease:
            return False
        return all(s._matches_clause(v) for s in self.specs)


def _parse_one_specifier(text: str) -> list[Specifier]:
    m = _SPECIFIER_RE.match(text)
    if m is None:
        raise InvalidSpecifier(f"invalid specifier: {text!r}")
    op = m.group("op")
    vtext = m.group("version")
    if vtext.endswith(".*"):
        raise InvalidSpecifier(f"prefix matching is not supported: {text!r}")
    try:
        v = parse_version(vtext)
    except InvalidVersion as exc:
        raise InvalidSpecifier(str(exc)) from exc
    if op == "~=":
        # expand to the equivalent >= / ==-prefix pair up front
        if len(v.release) < 2:
            raise InvalidSpecifier(f"~= needs at least two release segments: {text!r}")
        prefix = Version(v.release[:-1], None, None, None, vtext)
        return [Specifier(">=", v), Specifier("==", prefix, prefix=True)]
    return [Specifier(op, v)]


def parse_specifier_set(text: str) -> SpecifierSet:
    """Parse a comma-separated conjunction of specifiers (whitespace-insensitive)."""
    if text is None:
        raise InvalidSpecifier("specifier set must be a string")
    specs: list[Specifier] = []
    for part in text.split(","):
        if not part.strip():
            if part != text:
                raise InvalidSpecifier(f"empty clause in specifier set: {text!r}")
            continue
        specs.extend(_parse_one_specifier(part))
    return SpecifierSet(tuple(specs), raw=text.strip())


def matches(spec_set: SpecifierSet, v: Version) -> bool:
    """Module-level alias for :meth:`SpecifierSet.matches`."""
    return spec_set.matches(v)
