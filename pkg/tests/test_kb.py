"""Triple store: loading, vocabularies, adjacency, split isolation."""

import numpy as np
import pytest

from kbcomplete import ParseError, TripleStore, load_triples, write_vocab
from kbcomplete.kb import read_vocab

from helpers import random_store


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")
    return path


@pytest.fixture
def toy_files(tmp_path):
    def make(train=(), valid=(), test=()):
        return (write_tsv(tmp_path / "train.tsv", train),
                write_tsv(tmp_path / "valid.tsv", valid),
                write_tsv(tmp_path / "test.tsv", test))
    return make


class TestLoading:
    def test_dedup_and_counts(self, toy_files):
        paths = toy_files(train=[("a", "r", "b"), ("b", "r", "c"), ("a", "r", "b")])
        store, report = load_triples(*paths)
        assert store.n_entities == 3
        assert store.n_relations == 1
        assert len(store.train) == 2
        assert report.duplicates["train"] == 1
        assert report.counts == {"train": 2, "valid": 0, "test": 0}

    def test_empty_files(self, toy_files):
        store, report = load_triples(*toy_files())
        assert store.n_entities == 0
        assert store.n_relations == 0
        assert all(len(store.split(s)) == 0 for s in ("train", "valid", "test"))

    def test_wrong_column_count_reports_line(self, tmp_path, toy_files):
        train, valid, test = toy_files(train=[("a", "r", "b")])
        with open(train, "a", encoding="utf-8") as fh:
            fh.write("only\ttwo\n")
        with pytest.raises(ParseError) as exc:
            load_triples(train, valid, test)
        assert exc.value.lineno == 2
        assert "2" in str(exc.value)

    def test_empty_token_rejected(self, tmp_path, toy_files):
        train, valid, test = toy_files()
        with open(train, "w", encoding="utf-8") as fh:
            fh.write("a\t\tb\n")
        with pytest.raises(ParseError) as exc:
            load_triples(train, valid, test)
        assert exc.value.lineno == 1

    def test_blank_line_rejected(self, toy_files):
        train, valid, test = toy_files(train=[("a", "r", "b")])
        with open(train, "a", encoding="utf-8") as fh:
            fh.write("\n")
        with pytest.raises(ParseError):
            load_triples(train, valid, test)

    def test_valid_only_entities_interned_and_reported(self, toy_files):
        paths = toy_files(train=[("a", "r", "b")], valid=[("a", "r", "zz")],
                          test=[("yy", "r2", "b")])
        store, report = load_triples(*paths)
        assert "zz" in store.entities and "yy" in store.entities
        assert set(report.unseen_entities) == {"zz", "yy"}
        assert set(report.unseen_relations) == {"r2"}


class TestVocab:
    def test_round_trip_identity(self):
        store, _ = TripleStore.from_labeled(
            train=[("alpha", "rel/x", "beta"), ("beta", "rel/y", "gamma")])
        for label in ("alpha", "beta", "gamma"):
            assert store.entities.label(store.entities.id(label)) == label
        for i in range(store.n_entities):
            assert store.entities.id(store.entities.label(i)) == i

    def test_dump_and_read_back(self, tmp_path):
        store, _ = TripleStore.from_labeled(train=[("a", "r", "b")])
        path = tmp_path / "entities.tsv"
        write_vocab(store.entities, path)
        assert path.read_text() == "0\ta\n1\tb\n"
        assert read_vocab(path) == store.entities


class TestMembershipAndAdjacency:
    def test_examples(self):
        store, _ = TripleStore.from_labeled(
            train=[("a", "r", "b"), ("a", "r", "c")])
        a, b, c = (store.entities.id(x) for x in "abc")
        r = store.relations.id("r")
        assert store.neighbors_out(a, r) == {b, c}
        assert store.neighbors_in(b, r) == {a}
        assert store.neighbors_out(b, r) == frozenset()
        assert store.exists(a, r, b)
        assert not store.exists(b, r, a)

    def test_exists_matches_linear_scan(self):
        rng = np.random.default_rng(7)
        store = random_store(rng, n_entities=12, n_relations=3, n_train=60,
                             n_valid=10, n_test=10)
        raw = set()
        for split in ("train", "valid", "test"):
            raw |= {tuple(t) for t in store.split(split)}
        for h, r, t in raw:
            assert store.exists(h, r, t)
        for _ in range(1000):
            h = int(rng.integers(store.n_entities))
            r = int(rng.integers(store.n_relations))
            t = int(rng.integers(store.n_entities))
            assert store.exists(h, r, t) == ((h, r, t) in raw)

    def test_adjacency_matches_linear_scan(self):
        rng = np.random.default_rng(8)
        store = random_store(rng, n_entities=10, n_relations=3, n_train=50)
        train = set(map(tuple, store.train))
        for h, r, t in train:
            assert t in store.neighbors_out(h, r)
            assert h in store.neighbors_in(t, r)
        for h in range(store.n_entities):
            for r in range(store.n_relations):
                expect_out = {t for hh, rr, t in train if (hh, rr) == (h, r)}
                expect_in = {hh for hh, rr, t in train if (rr, t) == (r, h)}
                assert store.neighbors_out(h, r) == expect_out
                assert store.neighbors_in(h, r) == expect_in

    def test_split_isolation(self):
        train = [("a", "r", "b"), ("b", "r", "c")]
        extra = ("a", "r", "c")
        bare, _ = TripleStore.from_labeled(train=train)
        with_test, _ = TripleStore.from_labeled(train=train, test=[extra])
        a, r, c = (bare.entities.id("a"), bare.relations.id("r"),
                   bare.entities.id("c"))
        assert not bare.exists(a, r, c)
        assert with_test.exists(a, r, c)
        for h in range(bare.n_entities):
            assert with_test.neighbors_out(h, r) == bare.neighbors_out(h, r)
            assert with_test.neighbors_in(h, r) == bare.neighbors_in(h, r)

    def test_filter_indexes_span_all_splits(self):
        store, _ = TripleStore.from_labeled(
            train=[("a", "r", "b")], valid=[("a", "r", "c")],
            test=[("a", "r", "d")])
        a = store.entities.id("a")
        r = store.relations.id("r")
        assert store.true_tails(a, r) == {store.entities.id(x) for x in "bcd"}
        assert store.neighbors_out(a, r) == {store.entities.id("b")}
