"""Install simulation, environment scanning, consistency and import resolution."""
from __future__ import annotations

import random
import threading
from pathlib import Path

import pytest

import fixturelib
from relcheck.environment import (
    MISSING_SUBMODULE,
    MISSING_TOP_LEVEL,
    RESOLVED,
    InstallFailure,
    InstalledDist,
    ScanError,
    UnsupportedMarker,
    build_environment,
    check_env_consistency,
    evaluate_marker,
    resolve_import,
    scan_environment,
    simulate_install,
)
from relcheck.issues import IssueKind
from relcheck.requirements import parse_requirement
from relcheck.snapshot import snapshot_from_dict
from relcheck.versions import parse_version


def decl(text):
    d, _ = parse_requirement(text)
    return d


class TestEvaluateMarker:
    @pytest.mark.parametrize("marker,py,expected", [
        ('python_version >= "3.6"', "3.10", True),
        ('python_version < "3.0"', "3.10", False),
        ('python_version < "3.0"', "2.7", True),
        ('python_version == "3.10"', "3.10", True),
        ('python_version >= "3.6" and python_version < "4.0"', "3.10", True),
        ('python_version < "3.0" or python_version >= "3.8"', "3.10", True),
        ('"3.6" <= python_version', "3.10", True),
        ('extra == "dev"', "3.10", False),
        ('extra != "dev"', "3.10", True),
        ('(python_version >= "3.6")', "3.10", True),
    ])
    def test_cases(self, marker, py, expected):
        assert evaluate_marker(marker, py) is expected

    def test_version_compare_is_numeric(self):
        # 3.10 must sort above 3.6 despite "3.10" < "3.6" lexicographically
        assert evaluate_marker('python_version >= "3.6"', "3.10") is True

    @pytest.mark.parametrize("marker", [
        'sys_platform == "linux"',
        'platform_machine == "x86_64"',
        'python_version in "2.7 3.6"',
        "gibberish",
    ])
    def test_unsupported(self, marker):
        with pytest.raises(UnsupportedMarker):
            evaluate_marker(marker, "3.10")


class TestSimulateInstall:
    def test_gym_resolves_to_latest(self, stock_snapshot):
        env = simulate_install([decl("gym>=0.9.7")], stock_snapshot, "3.10")
        assert env.installed["gym"].version.raw == "0.26.2"
        assert env.module_index["gym"] == "gym"

    def test_enum_conflict(self, stock_snapshot):
        with pytest.raises(InstallFailure) as exc_info:
            simulate_install([decl("enum>=1.1.5")], stock_snapshot, "3.10")
        assert exc_info.value.reason == InstallFailure.DEPENDENCY_CONFLICT
        assert "0.4.7" in exc_info.value.evidence

    def test_empty_deps(self, stock_snapshot):
        env = simulate_install([], stock_snapshot, "3.8")
        assert env.installed == {}
        assert env.python_version == "3.8"

    def test_transitive_closure(self, stock_snapshot):
        env = simulate_install([decl("requests")], stock_snapshot, "3.10")
        assert set(env.installed) == {"requests", "urllib3"}

    def test_requires_python_filters_candidates(self, stock_snapshot):
        env = simulate_install([decl("gym")], stock_snapshot, "2.7")
        # every 3.6+ release is rejected under 2.7; the unconstrained 0.9.7 remains
        assert env.installed["gym"].version.raw == "0.9.7"

    def test_python_rejection(self, stock_snapshot):
        with pytest.raises(InstallFailure) as exc_info:
            simulate_install([decl("gym>=0.21.0")], stock_snapshot, "2.7")
        assert exc_info.value.reason == InstallFailure.PYTHON_VERSION_REJECTED

    def test_unknown_root_package(self, stock_snapshot):
        with pytest.raises(InstallFailure):
            simulate_install([decl("no-such-package")], stock_snapshot, "3.10")

    def test_marker_gated_dependency_skipped(self, stock_snapshot):
        env = simulate_install([decl("keras")], stock_snapshot, "3.8")
        assert "tensorflow" not in env.installed

    def test_unsupported_marker_warns_and_skips(self):
        snap = snapshot_from_dict({
            "snapshot_date": "2023-07-15",
            "packages": {
                "plat": [fixturelib.release(
                    "1.0", "2020-01-01",
                    requires_dist=[("winlib", "", 'sys_platform == "win32"')],
                    top_level_modules=["plat"])],
            },
        })
        env = simulate_install([decl("plat")], snap, "3.10")
        assert "winlib" not in env.installed
        assert any("winlib" in w for w in env.warnings)

    def test_constraint_accumulation(self):
        snap = snapshot_from_dict({
            "snapshot_date": "2023-07-15",
            "packages": {
                "b": [fixturelib.release("1.0", "2019-01-01", top_level_modules=["b"]),
                      fixturelib.release("2.0", "2020-01-01", top_level_modules=["b"]),
                      fixturelib.release("3.0", "2021-01-01", top_level_modules=["b"])],
                "a": [fixturelib.release("1.0", "2021-01-01",
                                         requires_dist=[("b", "<3.0", None)],
                                         top_level_modules=["a"])],
            },
        })
        env = simulate_install([decl("a"), decl("b")], snap, "3.10")
        assert env.installed["b"].version.raw == "2.0"

    def test_same_wave_invalidations_resolve_together(self):
        # two constraints discovered in one frontier collapse into a single
        # re-selection that satisfies both
        snap = snapshot_from_dict({
            "snapshot_date": "2023-07-15",
            "packages": {
                "b": [fixturelib.release("1.0", "2019-01-01", top_level_modules=["b"]),
                      fixturelib.release("2.0", "2020-01-01", top_level_modules=["b"]),
                      fixturelib.release("3.0", "2021-01-01", top_level_modules=["b"])],
                "a": [fixturelib.release("1.0", "2021-01-01",
                                         requires_dist=[("b", "<3.0", None)],
                                         top_level_modules=["a"])],
                "d": [fixturelib.release("1.0", "2021-03-01",
                                         requires_dist=[("b", "<2.0", None)],
                                         top_level_modules=["d"])],
            },
        })
        env = simulate_install([decl("b"), decl("a"), decl("d")], snap, "3.10")
        assert env.installed["b"].version.raw == "1.0"

    def test_reselection_once_then_conflict(self):
        # b is re-selected after the first invalidation; a second
        # invalidation in a later frontier aborts with a conflict
        snap = snapshot_from_dict({
            "snapshot_date": "2023-07-15",
            "packages": {
                "b": [fixturelib.release("1.0", "2019-01-01", top_level_modules=["b"]),
                      fixturelib.release("2.0", "2020-01-01", top_level_modules=["b"]),
                      fixturelib.release("3.0", "2021-01-01", top_level_modules=["b"])],
                "a": [fixturelib.release("1.0", "2021-01-01",
                                         requires_dist=[("b", "<3.0", None)],
                                         top_level_modules=["a"])],
                "c": [fixturelib.release("1.0", "2021-02-01",
                                         requires_dist=[("a", "", None),
                                                        ("e", "", None)],
                                         top_level_modules=["c"])],
                "e": [fixturelib.release("1.0", "2021-03-01",
                                         requires_dist=[("f", "", None)],
                                         top_level_modules=["e"])],
                "f": [fixturelib.release("1.0", "2021-04-01",
                                         requires_dist=[("b", "<2.0", None)],
                                         top_level_modules=["f"])],
            },
        })
        # wave 1: b=3.0, c; wave 2: a invalidates b (re-select 2.0) while e
        # pulls in f; wave 3: f's constraint invalidates b a second time
        with pytest.raises(InstallFailure) as exc_info:
            simulate_install([decl("b"), decl("c")], snap, "3.10")
        assert exc_info.value.reason == InstallFailure.DEPENDENCY_CONFLICT

    def test_order_independence(self, stock_snapshot):
        """Accumulate-then-select makes the result independent of dep order."""
        rng = random.Random(9)
        names = ["gym>=0.9.7", "requests", "keras", "pyyaml", "markupsafe"]
        baseline = simulate_install([decl(n) for n in names], stock_snapshot, "3.10")
        for _ in range(20):
            shuffled = names[:]
            rng.shuffle(shuffled)
            env = simulate_install([decl(n) for n in shuffled], stock_snapshot, "3.10")
            assert env == baseline

    def test_deterministic_across_runs_and_threads(self, stock_snapshot):
        deps = [decl("gym>=0.9.7"), decl("requests"), decl("pyyaml")]
        baseline = simulate_install(deps, stock_snapshot, "3.10")
        outcomes = []
        lock = threading.Lock()

        def worker():
            env = simulate_install(deps, stock_snapshot, "3.10")
            with lock:
                outcomes.append(env)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(env == baseline for env in outcomes)

    def test_posthoc_constraint_audit(self, stock_snapshot):
        """Every installed version satisfies the union of constraints that
        targeted it."""
        deps = [decl("gym>=0.9.7"), decl("requests"), decl("pyyaml"),
                decl("markupsafe>=2.0")]
        env = simulate_install(deps, stock_snapshot, "3.10")
        _audit(deps, env)

    def test_randomized_dependency_graphs(self):
        """Random snapshots with dependency edges: the simulation is
        order-insensitive and repeatable, successful environments pass the
        constraint audit, and failures carry a classified reason."""
        rng = random.Random(0xD1CE)
        successes = failures = 0
        for _ in range(250):
            snap, all_names = _random_dependency_snapshot(rng)
            roots = rng.sample(all_names, k=rng.randint(1, min(3, len(all_names))))
            deps = [decl(n) for n in roots]
            shuffled = deps[:]
            rng.shuffle(shuffled)
            try:
                env = simulate_install(deps, snap, "3.10")
            except InstallFailure as exc:
                failures += 1
                assert exc.reason in (InstallFailure.DEPENDENCY_CONFLICT,
                                      InstallFailure.PYTHON_VERSION_REJECTED)
                with pytest.raises(InstallFailure):
                    simulate_install(shuffled, snap, "3.10")
                continue
            successes += 1
            assert simulate_install(shuffled, snap, "3.10") == env
            assert simulate_install(deps, snap, "3.10") == env
            _audit(deps, env, env_only=True)
        assert successes > 20 and failures > 20


def _audit(deps, env, env_only=False):
    constraints: dict[str, list] = {}
    scratch: list[str] = []
    from relcheck.environment import _marker_gate

    for d in deps:
        if _marker_gate(d, env.python_version, scratch, "audit"):
            constraints.setdefault(d.name, []).append(d.constraint)
    for dist in env.installed.values():
        for req in dist.requires_dist:
            if _marker_gate(req, env.python_version, scratch, "audit"):
                constraints.setdefault(req.name, []).append(req.constraint)
    for name, specs in constraints.items():
        dist = env.installed.get(name)
        assert dist is not None, f"{name} required but absent"
        for spec in specs:
            assert spec.matches(dist.version), (name, spec.raw, dist.version.raw)


def _random_dependency_snapshot(rng: random.Random):
    """A snapshot of 4-8 packages with random versions and dependency edges
    pointing at alphabetically later packages (cycle-free)."""
    n = rng.randint(4, 8)
    names = [f"pkg{c}" for c in "abcdefgh"[:n]]
    packages = {}
    for i, name in enumerate(names):
        releases = []
        versions = sorted({rng.randint(1, 9) for _ in range(rng.randint(1, 4))})
        for major in versions:
            requires = []
            for target in names[i + 1:]:
                if rng.random() < 0.4:
                    bound = rng.randint(1, 9)
                    op = rng.choice(["<", "<=", ">=", ""])
                    constraint = f"{op}{bound}.0" if op else ""
                    requires.append((target, constraint, None))
            releases.append(fixturelib.release(
                f"{major}.0", f"20{10 + major}-01-01",
                requires_dist=requires, top_level_modules=[name]))
        packages[name] = releases
    snap = snapshot_from_dict({"snapshot_date": "2023-12-31", "packages": packages})
    return snap, names


def write_dist_info(site: Path, name: str, version: str, modules=None,
                    requires=(), top_level_file=True):
    meta = site / f"{name}-{version}.dist-info"
    meta.mkdir(parents=True)
    lines = [f"Name: {name}", f"Version: {version}"]
    lines += [f"Requires-Dist: {r}" for r in requires]
    (meta / "METADATA").write_text("\n".join(lines) + "\n")
    if top_level_file:
        (meta / "top_level.txt").write_text("".join(m + "\n" for m in modules or []))


class TestScanEnvironment:
    def test_empty_dir(self, tmp_path):
        env = scan_environment(tmp_path, python_version="3.10")
        assert env.installed == {}

    def test_single_dist(self, tmp_path):
        write_dist_info(tmp_path, "demo", "1.2.0", ["demo"])
        env = scan_environment(tmp_path, python_version="3.10")
        assert env.installed["demo"].version.raw == "1.2.0"
        assert env.module_index == {"demo": "demo"}

    def test_missing_top_level_inferred_with_warning(self, tmp_path):
        write_dist_info(tmp_path, "foo-bar", "1.0", top_level_file=False)
        (tmp_path / "foo_bar").mkdir()
        (tmp_path / "foo_bar" / "__init__.py").write_text("")
        env = scan_environment(tmp_path, python_version="3.10")
        assert env.installed["foo-bar"].top_level_modules == ("foo_bar",)
        assert any("top_level.txt" in w for w in env.warnings)

    def test_unreadable_metadata(self, tmp_path):
        meta = tmp_path / "broken-1.0.dist-info"
        meta.mkdir()
        with pytest.raises(ScanError):
            scan_environment(tmp_path)

    def test_round_trip_with_written_fixture(self, tmp_path):
        write_dist_info(tmp_path, "alpha", "1.0", ["alpha"], requires=["beta (>=2.0)"])
        write_dist_info(tmp_path, "beta", "2.5", ["beta", "beta.core"])
        env = scan_environment(tmp_path, python_version="3.9")
        assert set(env.installed) == {"alpha", "beta"}
        assert env.installed["alpha"].requires_dist[0].name == "beta"
        assert env.installed["beta"].top_level_modules == ("beta", "beta.core")


class TestEnvConsistency:
    def make_env(self, dists):
        return build_environment("3.10", dists)

    def test_missing_requirement(self):
        keras = InstalledDist("keras", parse_version("2.4.3"), ("keras",),
                              (decl("tensorflow>=2.0"),))
        issues = check_env_consistency(self.make_env([keras]))
        assert [i.kind for i in issues] == [IssueKind.MISSING_INDIRECT_IMPORT_MODULES]
        assert "tensorflow" in issues[0].evidence

    def test_consistent_env_is_clean(self):
        keras = InstalledDist("keras", parse_version("2.4.3"), ("keras",),
                              (decl("tensorflow>=2.0"),))
        tf = InstalledDist("tensorflow", parse_version("2.9.0"), ("tensorflow",))
        assert check_env_consistency(self.make_env([keras, tf])) == []

    def test_version_violation(self):
        flask = InstalledDist("flask", parse_version("2.1.0"), ("flask",),
                              (decl("markupsafe<2.1.0"),))
        bad = InstalledDist("markupsafe", parse_version("2.1.0"), ("markupsafe",))
        issues = check_env_consistency(self.make_env([flask, bad]))
        assert [i.kind for i in issues] == [IssueKind.MISSING_INDIRECT_IMPORT_MODULES]
        assert "2.1.0 is installed" in issues[0].evidence

    def test_marker_gated_requirement_ignored(self):
        keras = InstalledDist("keras", parse_version("2.4.3"), ("keras",),
                              (decl('tensorflow>=2.0; python_version < "3.0"'),))
        assert check_env_consistency(self.make_env([keras])) == []


class TestResolveImport:
    def make_env(self):
        gym = InstalledDist("gym", parse_version("0.26.2"),
                            ("gym", "gym.wrappers", "gym.spaces"))
        plain = InstalledDist("plain", parse_version("1.0"), ("plain",))
        return build_environment("3.10", [gym, plain])

    def test_missing_top_level(self):
        res = resolve_import(self.make_env(), "celery")
        assert res.status == MISSING_TOP_LEVEL

    def test_missing_submodule(self):
        res = resolve_import(self.make_env(), "gym.wrappers.monitor")
        assert res.status == MISSING_SUBMODULE
        assert res.provider.name == "gym"

    def test_listed_submodule_resolves(self):
        assert resolve_import(self.make_env(), "gym.wrappers").status == RESOLVED

    def test_resolved_top_level(self):
        res = resolve_import(self.make_env(), "plain")
        assert res.status == RESOLVED and res.provider.name == "plain"

    def test_no_inventory_decides_top_level_only(self):
        res = resolve_import(self.make_env(), "plain.anything.goes")
        assert res.status == RESOLVED

    def test_stdlib_always_resolves(self):
        env = build_environment("3.10", [])
        assert resolve_import(env, "os").status == RESOLVED
        assert resolve_import(env, "os.path").status == RESOLVED
        assert resolve_import(env, "urllib2").status == RESOLVED  # legacy stdlib
