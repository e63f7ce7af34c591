"""The three-check pipeline, the status machine and the taxonomy mapping."""
from __future__ import annotations

import pytest

import fixturelib
from fixturelib import write_project
from relcheck.checker import (
    LIVE,
    CheckOptions,
    CheckStatus,
    CorpusError,
    ProbeOutcome,
    SiblingCache,
    check_project,
    check_release,
    run_dependency_check,
    run_import_validation,
    run_installation_check,
)
from relcheck.issues import CheckName, IssueCategory, IssueKind, TAXONOMY
from relcheck.project import load_project
from relcheck.snapshot import InterpreterReleaseTable


# Kind -> (category, check, fatal), row for row.
EXPECTED_TAXONOMY = {
    IssueKind.MISSING_CONFIG_FILES: ("IncompleteConfiguration", "installation", True),
    IssueKind.MISSING_SETUP_REQUIRES: ("IncompleteConfiguration", "installation", True),
    IssueKind.MISSING_PYTHON_VERSION: ("IncompleteConfiguration", "dependency", False),
    IssueKind.MISSING_DIRECT_IMPORT_DEPS: ("IncompleteConfiguration", "import-validation", False),
    IssueKind.SETUP_DEPENDENCY_CONFLICT: ("IncorrectConfiguration", "installation", True),
    IssueKind.INCORRECT_PYTHON_VERSION: ("IncorrectConfiguration", "installation", True),
    IssueKind.OTHER_SETUP_RUNTIME_ERROR: ("IncorrectConfiguration", "installation", True),
    IssueKind.METADATA_INCONSISTENCY: ("IncorrectConfiguration", "dependency", False),
    IssueKind.VERSION_DATE_INCONSISTENCY: ("IncorrectConfiguration", "dependency", False),
    IssueKind.MISSING_INDIRECT_IMPORT_MODULES: ("IncorrectConfiguration", "import-validation", False),
    IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED: ("IncorrectConfiguration", "import-validation", False),
    IssueKind.OTHER_IMPORT_RUNTIME_ERROR: ("IncorrectConfiguration", "import-validation", False),
    IssueKind.MISSING_SOURCE_CODE: ("IncorrectCode", "dependency", True),
    IssueKind.PARSING_ERROR: ("IncorrectCode", "dependency", True),
    IssueKind.MULTIPLE_VERSION_CONTROL_FAILURE: ("IncorrectCode", "import-validation", False),
}


class TestTaxonomyTable:
    def test_fifteen_kinds(self):
        assert len(IssueKind) == 15
        assert len(TAXONOMY) == 15

    def test_three_categories_three_checks(self):
        assert len(IssueCategory) == 3
        assert len(CheckName) == 3

    @pytest.mark.parametrize("kind", list(IssueKind))
    def test_row_attribution(self, kind):
        category, check, fatal = EXPECTED_TAXONOMY[kind]
        info = TAXONOMY[kind]
        assert info.category.value == category
        assert info.check.value == check
        assert info.fatal is fatal


class TestInstallationCheck:
    def test_empty_deps_succeeds_on_initial_version(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires_python=">=3.6", top_level=["demo"],
                             sources={"demo/__init__.py": ""})
        project = load_project(root)
        outcome = run_installation_check(project, stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        assert outcome.env is not None
        assert outcome.issues == []
        # snapshot date 2023-07-15 minus 180 days admits 3.11 but not 3.12
        assert outcome.chosen_python == "3.11"
        assert [v for v, _ in outcome.attempts] == ["3.11"]

    def test_never_tries_a_version_twice(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires=["enum>=1.1.5"], requires_python=">=3.6",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        project = load_project(root)
        outcome = run_installation_check(project, stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        tried = [v for v, _ in outcome.attempts]
        assert len(tried) == len(set(tried))
        assert outcome.env is None

    def test_conflict_maps_to_setup_dependency_conflict(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires=["enum>=1.1.5"], requires_python=">=3.6",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        outcome = run_installation_check(load_project(root), stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        assert [i.kind for i in outcome.issues] == [IssueKind.SETUP_DEPENDENCY_CONFLICT]
        assert "enum" in outcome.issues[0].evidence

    def test_incorrect_python_still_returns_environment(self, stock_snapshot, tmp_path):
        # declared >=3.9, but the dependency installs only below 3.9; the
        # common-version fallback lands on 3.6
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires=["oldlib"], requires_python=">=3.9",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        outcome = run_installation_check(load_project(root), stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        assert outcome.env is not None
        assert outcome.chosen_python == "3.6"
        assert [i.kind for i in outcome.issues] == [IssueKind.INCORRECT_PYTHON_VERSION]

    def test_sibling_cache_consulted_before_common_versions(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="2.0",
                             requires=["oldlib"], requires_python=">=3.9",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        cache = SiblingCache()
        cache.add("demo", "3.8")
        outcome = run_installation_check(load_project(root), stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="2.0",
                                         sibling_cache=cache)
        assert outcome.chosen_python == "3.8"
        assert "3.8" in cache.get("demo")

    def test_missing_setup_requirement(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires_python=">=3.6", top_level=["demo"],
                             setup_requires=["no-such-buildlib"],
                             sources={"demo/__init__.py": ""})
        outcome = run_installation_check(load_project(root), stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        assert [i.kind for i in outcome.issues] == [IssueKind.MISSING_SETUP_REQUIRES]

    def test_unparseable_setup_script(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires_python=">=3.6", top_level=["demo"],
                             setup_py="def broken(:\n",
                             sources={"demo/__init__.py": ""})
        outcome = run_installation_check(load_project(root), stock_snapshot,
                                         InterpreterReleaseTable.default(),
                                         name="demo", version="1.0")
        assert [i.kind for i in outcome.issues] == [IssueKind.OTHER_SETUP_RUNTIME_ERROR]


class TestDependencyCheck:
    def test_version_date_inconsistency(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires=["multipart>=0.1"], requires_python=">=3.6",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        issues = run_dependency_check(load_project(root), None, stock_snapshot)
        assert [i.kind for i in issues] == [IssueKind.VERSION_DATE_INCONSISTENCY]

    def test_missing_python_version(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             top_level=["demo"], sources={"demo/__init__.py": ""})
        issues = run_dependency_check(load_project(root), None, stock_snapshot)
        assert [i.kind for i in issues] == [IssueKind.MISSING_PYTHON_VERSION]

    def test_clean_project(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires_python=">=3.6", top_level=["demo"],
                             sources={"demo/__init__.py": ""})
        assert run_dependency_check(load_project(root), None, stock_snapshot) == []

    def test_parsing_error_recorded_per_file(self, stock_snapshot, tmp_path):
        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires_python=">=3.6", top_level=["demo"],
                             sources={"demo/__init__.py": "",
                                      "demo/bad.py": "if True;\n    pass\n"})
        issues = run_dependency_check(load_project(root), None, stock_snapshot)
        assert [i.kind for i in issues] == [IssueKind.PARSING_ERROR]
        assert issues[0].location.endswith("bad.py")


class TestImportValidation:
    def run(self, tmp_path, stock_snapshot, sources, requires=(), mode="static",
            probe=None, python="3.10"):
        from relcheck.environment import simulate_install
        from relcheck.requirements import parse_requirement

        root = write_project(tmp_path / "p", name="demo", version="1.0",
                             requires=list(requires), requires_python=">=3.6",
                             top_level=["demo"], sources=sources)
        project = load_project(root)
        deps = [parse_requirement(r)[0] for r in requires]
        env = simulate_install(deps, stock_snapshot, python)
        return run_import_validation(project, env, mode, probe,
                                     deps=project.declared_deps,
                                     snapshot=stock_snapshot)

    def test_undeclared_direct_import(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import celery\n"})
        assert [i.kind for i in outcome.issues] == [IssueKind.MISSING_DIRECT_IMPORT_DEPS]
        assert not outcome.all_expressions_true

    def test_gym_monitor_inconsistency(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "from gym.wrappers.monitor import M\n"},
                           requires=["gym>=0.9.7"])
        assert [i.kind for i in outcome.issues] == \
            [IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED]

    def test_transitive_module_missing(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import keras\nimport tensorflow\n"},
                           requires=["keras"])
        assert [i.kind for i in outcome.issues] == \
            [IssueKind.MISSING_INDIRECT_IMPORT_MODULES]

    def test_multiple_version_control_failure(self, tmp_path, stock_snapshot):
        source = ("try:\n    import simplejson\nexcept ImportError:\n"
                  "    import ujson\n")
        outcome = self.run(tmp_path, stock_snapshot, {"demo/__init__.py": source})
        assert [i.kind for i in outcome.issues] == \
            [IssueKind.MULTIPLE_VERSION_CONTROL_FAILURE]

    def test_all_expressions_true(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import os\nimport yaml\n"},
                           requires=["pyyaml"])
        assert outcome.issues == []
        assert outcome.all_expressions_true

    def test_internal_imports_excluded(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot, {
            "demo/__init__.py": "from . import core\nimport helper\n",
            "demo/core.py": "",
            "demo/helper.py": "",
        })
        assert outcome.issues == []

    def test_absolute_self_import_excluded(self, tmp_path, stock_snapshot):
        # once installed, the release can import its own package absolutely
        outcome = self.run(tmp_path, stock_snapshot, {
            "demo/__init__.py": "",
            "demo/core.py": "import demo.util\nfrom demo import helper\n",
            "demo/util.py": "",
            "demo/helper.py": "",
        })
        assert outcome.issues == []
        assert outcome.all_expressions_true

    def test_empty_placeholder_release_is_direct_inconsistency(self, tmp_path,
                                                               stock_snapshot):
        # declared and installed, but the installed release provides nothing
        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import jtskit\n"},
                           requires=["jtskit"])
        assert [i.kind for i in outcome.issues] == \
            [IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED]

    def test_live_mode_runtime_error(self, tmp_path, stock_snapshot):
        def probe(statements):
            return [ProbeOutcome(False, "TypeError", "int() argument must be ...")
                    for _ in statements]

        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import glitchy\n"},
                           requires=["glitchy"], mode=LIVE, probe=probe)
        assert [i.kind for i in outcome.issues] == [IssueKind.OTHER_IMPORT_RUNTIME_ERROR]
        assert "TypeError" in outcome.issues[0].evidence

    def test_live_mode_indirect_missing_module(self, tmp_path, stock_snapshot):
        def probe(statements):
            return [ProbeOutcome(False, "ModuleNotFoundError",
                                 "No module named 'tensorflow'")
                    for _ in statements]

        outcome = self.run(tmp_path, stock_snapshot,
                           {"demo/__init__.py": "import keras\n"},
                           requires=["keras"], mode=LIVE, probe=probe)
        assert [i.kind for i in outcome.issues] == \
            [IssueKind.MISSING_INDIRECT_IMPORT_MODULES]

    def test_live_mode_requires_probe(self, tmp_path, stock_snapshot):
        with pytest.raises(ValueError):
            self.run(tmp_path, stock_snapshot, {"demo/__init__.py": ""}, mode=LIVE)

    def test_dynamic_import_recorded_as_warning(self, tmp_path, stock_snapshot):
        outcome = self.run(tmp_path, stock_snapshot, {
            "demo/__init__.py": "plugin = __import__('plugin_name')\n",
        })
        assert outcome.issues == []
        assert any("dynamic import" in w for w in outcome.warnings)


class TestCheckRelease:
    def test_clean_fixture_validates(self, stock_snapshot, taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        meta = entries["clean"]
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
        report = check_release(meta["name"], meta["version"], stock_snapshot, options)
        assert report.validated
        assert report.final_status is CheckStatus.S4
        assert report.issues == ()

    def test_parsing_error_fixture_fails_dependency_check(self, stock_snapshot,
                                                          taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        meta = entries["parsing-error"]
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
        report = check_release(meta["name"], meta["version"], stock_snapshot, options)
        assert not report.validated
        assert report.checks["dependency"] is False

    def test_every_fixture_reports_exactly_its_planted_kind(self, stock_snapshot,
                                                            taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        for key, meta in entries.items():
            if meta["mode"] == "live":
                continue
            options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
            report = check_release(meta["name"], meta["version"], stock_snapshot, options)
            kinds = {i.kind.value for i in report.issues}
            assert kinds == meta["expected_kinds"], key

    def test_missing_release_directory(self, stock_snapshot, tmp_path):
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=tmp_path)
        with pytest.raises(CorpusError):
            check_release("ghost", "1.0", stock_snapshot, options)

    def test_validated_iff_no_issues(self, stock_snapshot, taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
        for meta in entries.values():
            if meta["mode"] == "live":
                continue
            report = check_release(meta["name"], meta["version"], stock_snapshot, options)
            assert report.validated == (len(report.issues) == 0)
            if report.validated:
                assert report.final_status is CheckStatus.S4
                assert all(report.checks.values())

    def test_statuses_monotone(self, stock_snapshot, taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        order = [CheckStatus.S0, CheckStatus.S1, CheckStatus.S2,
                 CheckStatus.S3, CheckStatus.S4]
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
        for meta in entries.values():
            if meta["mode"] == "live":
                continue
            report = check_release(meta["name"], meta["version"], stock_snapshot, options)
            indices = [order.index(s) for s in report.statuses]
            assert indices == sorted(indices)
            assert len(set(indices)) == len(indices)
            assert not ({CheckStatus.S1, CheckStatus.S2} <= set(report.statuses))

    def test_determinism_byte_identical(self, stock_snapshot, taxonomy_corpus):
        corpus_dir, entries = taxonomy_corpus
        meta = entries["direct-import-inconsistent"]
        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir)
        first = check_release(meta["name"], meta["version"], stock_snapshot, options)
        second = check_release(meta["name"], meta["version"], stock_snapshot, options)
        assert first.to_dict() == second.to_dict()

    def test_live_fixture_with_probe_stub(self, stock_snapshot, taxonomy_corpus):
        """The run-time-error fixture, driven in live mode by a stub probe."""
        corpus_dir, entries = taxonomy_corpus
        meta = entries["other-import-runtime-error"]

        def probe(statements):
            out = []
            for stmt in statements:
                if "glitchy" in stmt:
                    out.append(ProbeOutcome(False, "TypeError",
                                            "int() argument must be a string"))
                else:
                    out.append(ProbeOutcome(True))
            return out

        options = CheckOptions(snapshot=stock_snapshot, corpus_dir=corpus_dir,
                               mode=LIVE, probe=probe)
        report = check_release(meta["name"], meta["version"], stock_snapshot, options)
        kinds = {i.kind.value for i in report.issues}
        assert kinds == meta["expected_kinds"]
        assert report.mode == "live"


class TestFig1Scenario:
    def test_open_constraint_flags_monitor(self, stock_snapshot, tmp_path):
        open_dir, pinned_dir = fixturelib.build_fig1_projects(tmp_path)
        options = CheckOptions(snapshot=stock_snapshot)
        report = check_project(open_dir, options)
        assert report.environment["installed"]["gym"] == "0.26.2"
        kinds = [i.kind for i in report.issues]
        assert kinds == [IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED]

    def test_pinned_constraint_validates(self, stock_snapshot, tmp_path):
        open_dir, pinned_dir = fixturelib.build_fig1_projects(tmp_path)
        options = CheckOptions(snapshot=stock_snapshot)
        report = check_project(pinned_dir, options)
        assert report.environment["installed"]["gym"] == "0.22.0"
        assert report.validated
