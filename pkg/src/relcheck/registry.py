"""Registry JSON API client with an on-disk cache.

Talks to the index's per-package JSON metadata endpoint
(<base>/<name>/json) and converts payloads into snapshot release records.
Results are cached one JSON file per package; fetches within the TTL are
served from disk without touching the network.
"""
from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from collections import defaultdict
from datetime import date, datetime
from pathlib import Path

from .snapshot import (
    ReleaseRecord,
    SchemaError,
    release_from_dict,
    release_to_dict,
)
from .requirements import InvalidRequirement, parse_requirement
from .versions import NormalizedName, normalize_name

DEFAULT_BASE_URL = "https://pypi.org/pypi"
DEFAULT_TTL_DAYS = 7


class NetworkError(OSError):
    """Registry unreachable or the transfer failed."""


class NotFound(LookupError):
    """Package name absent from the registry."""


def _upload_date(file_obj) -> date | None:
    stamp = file_obj.get("upload_time_iso_8601") or file_obj.get("upload_time")
    if not isinstance(stamp, str):
        return None
    try:
        return datetime.fromisoformat(stamp.replace("Z", "+00:00")).date()
    except ValueError:
        return None


def releases_from_registry_payload(name: NormalizedName, payload: dict,
                                   warnings: list[str]) -> list[dict]:
    """Convert one registry JSON payload into snapshot-schema release dicts.

    The single metadata endpoint carries requires_dist and classifiers only
    for the latest version; other releases get empty lists. The release
    date is the earliest upload time across the version's files; versions
    with zero files are skipped.
    """
    if not isinstance(payload, dict) or "info" not in payload or "releases" not in payload:
        raise SchemaError(f"{name}: registry payload lacks info/releases")
    info = payload["info"]
    if not isinstance(info, dict) or not isinstance(payload["releases"], dict):
        raise SchemaError(f"{name}: malformed registry payload")
    latest = info.get("version")

    latest_requires = []
    for raw in info.get("requires_dist") or []:
        try:
            decl, _ = parse_requirement(raw)
        except InvalidRequirement as exc:
            warnings.append(f"{name}: requires_dist entry skipped: {exc}")
            continue
        latest_requires.append(
            {"name": decl.name, "constraint": decl.constraint.raw, "marker": decl.marker}
        )
    latest_classifiers = [c for c in info.get("classifiers") or [] if isinstance(c, str)]

    out = []
    for version, files in payload["releases"].items():
        if not isinstance(files, list) or not files:
            warnings.append(f"{name} {version}: no files; skipped")
            continue
        dates = [d for d in (_upload_date(f) for f in files if isinstance(f, dict)) if d]
        if not dates:
            warnings.append(f"{name} {version}: no upload dates; skipped")
            continue
        requires_python = next(
            (f.get("requires_python") for f in files
             if isinstance(f, dict) and f.get("requires_python")),
            None,
        )
        packagetypes = [f.get("packagetype") for f in files if isinstance(f, dict)]
        has_source = ("sdist" in packagetypes) if any(packagetypes) else True
        is_latest = version == latest
        out.append({
            "version": version,
            "release_date": min(dates).isoformat(),
            "requires_python": requires_python,
            "requires_dist": latest_requires if is_latest else [],
            "classifiers": latest_classifiers if is_latest else [],
            "top_level_modules": None,
            "has_source": has_source,
        })
    out.sort(key=lambda r: r["version"])
    return out


class RegistryClient:
    """Fetch per-package release records, caching them on disk."""

    def __init__(self, cache_dir: str | Path, base_url: str = DEFAULT_BASE_URL,
                 ttl_days: int = DEFAULT_TTL_DAYS, today=date.today, timeout: float = 30.0):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.base_url = base_url.rstrip("/")
        self.ttl_days = ttl_days
        self.today = today
        self.timeout = timeout
        self._master_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def _lock_for(self, name: str) -> threading.Lock:
        with self._master_lock:
            return self._locks[name]

    def _cache_path(self, name: str) -> Path:
        return self.cache_dir / f"{name}.json"

    def _read_cache(self, name: str) -> list[dict] | None:
        path = self._cache_path(name)
        if not path.is_file():
            return None
        try:
            cached = json.loads(path.read_text(encoding="utf-8"))
            fetched = date.fromisoformat(cached["fetched"])
            releases = cached["releases"]
        except (json.JSONDecodeError, KeyError, ValueError):
            return None
        if (self.today() - fetched).days >= self.ttl_days:
            return None
        return releases if isinstance(releases, list) else None

    def _write_cache(self, name: str, releases: list[dict]) -> None:
        path = self._cache_path(name)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps({"name": name, "fetched": self.today().isoformat(),
                        "releases": releases}, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        tmp.replace(path)

    def _http_get(self, name: str) -> dict:
        url = f"{self.base_url}/{name}/json"
        request = urllib.request.Request(url, headers={"Accept": "application/json"})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = response.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFound(name) from exc
            raise NetworkError(f"GET {url}: HTTP {exc.code}") from exc
        except urllib.error.URLError as exc:
            raise NetworkError(f"GET {url}: {exc.reason}") from exc
        except OSError as exc:
            raise NetworkError(f"GET {url}: {exc}") from exc
        try:
            return json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"{url}: not valid JSON: {exc}") from exc

    def fetch_package(self, raw_name: str) -> list[ReleaseRecord]:
        """Release records for one package, from cache when fresh."""
        name = normalize_name(raw_name)
        with self._lock_for(name):
            release_dicts = self._read_cache(name)
            if release_dicts is None:
                warnings: list[str] = []
                payload = self._http_get(name)
                release_dicts = releases_from_registry_payload(name, payload, warnings)
                self._write_cache(name, release_dicts)
        warnings = []
        records = []
        for i, obj in enumerate(release_dicts):
            rel = release_from_dict(name, obj, f"{name}[{i}]", warnings)
            if rel is not None:
                records.append(rel)
        records.sort(key=lambda r: r.version)
        return records


def snapshot_dict_from_records(records_by_name: dict[str, list[ReleaseRecord]],
                               snapshot_date: date) -> dict:
    """Assemble fetched records into the snapshot JSON structure."""
    return {
        "snapshot_date": snapshot_date.isoformat(),
        "packages": {
            name: [release_to_dict(r) for r in sorted(rels, key=lambda r: r.version)]
            for name, rels in sorted(records_by_name.items())
        },
    }
