from __future__ import annotations

import pytest

import fixturelib


@pytest.fixture(scope="session")
def stock_snapshot():
    return fixturelib.stock_snapshot()


@pytest.fixture(scope="session")
def taxonomy_corpus(tmp_path_factory):
    corpus_dir = tmp_path_factory.mktemp("taxonomy-corpus")
    entries = fixturelib.build_taxonomy_corpus(corpus_dir)
    return corpus_dir, entries


@pytest.fixture(scope="session")
def bench_corpus(tmp_path_factory):
    base = tmp_path_factory.mktemp("bench")
    corpus_dir = base / "corpus"
    inferred = base / "inferred.json"
    expected_validated = fixturelib.build_bench_corpus(corpus_dir, inferred)
    return corpus_dir, inferred, expected_validated


@pytest.fixture(scope="session")
def snapshot_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("snap") / "snapshot.json"
    fixturelib.write_snapshot(path)
    return path
