"""Triple storage: vocabularies, train/valid/test splits, adjacency indexes.

Facts are (head, relation, tail) triples over interned integer ids.
Adjacency indexes are built from the training split only, so rule mining
and feature extraction never observe validation or test edges.  The
membership indexes used for filtered ranking span the union of all splits.
A store is immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import DataError, ParseError

SPLITS = ("train", "valid", "test")

_EMPTY: frozenset[int] = frozenset()


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocab:
    """Bijection between string labels and dense contiguous integer ids."""

    def __init__(self, labels: Iterable[str] = ()) -> None:
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.intern(label)

    def intern(self, label: str) -> int:
        """Return the id for `label`, assigning the next free id if new."""
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._labels.append(label)
            self._index[label] = idx
        return idx

    def id(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise DataError(f"unknown label: {label!r}") from None

    def label(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._labels == other._labels


@dataclass
class LoadReport:
    """What was ingested: sizes, dropped duplicates, vocabulary oddities."""

    n_entities: int
    n_relations: int
    counts: dict[str, int]
    duplicates: dict[str, int]
    unseen_entities: tuple[str, ...]  # interned but absent from the training split
    unseen_relations: tuple[str, ...]

    def lines(self) -> list[str]:
        out = [
            f"entities\t{self.n_entities}",
            f"relations\t{self.n_relations}",
        ]
        for split in SPLITS:
            out.append(f"{split}_triples\t{self.counts[split]}")
            if self.duplicates[split]:
                out.append(f"{split}_duplicates_dropped\t{self.duplicates[split]}")
        if self.unseen_entities:
            out.append(f"entities_not_in_train\t{len(self.unseen_entities)}")
        if self.unseen_relations:
            out.append(f"relations_not_in_train\t{len(self.unseen_relations)}")
        return out


class TripleStore:
    """Immutable indexed view of a knowledge base split into train/valid/test."""

    def __init__(self, entities: Vocab, relations: Vocab,
                 splits: dict[str, list[Triple]]) -> None:
        self.entities = entities
        self.relations = relations
        self._splits: dict[str, tuple[Triple, ...]] = {
            name: tuple(splits.get(name, ())) for name in SPLITS
        }

        out_by_hr: dict[tuple[int, int], set[int]] = defaultdict(set)
        in_by_tr: dict[tuple[int, int], set[int]] = defaultdict(set)
        out_edges: dict[int, list[tuple[int, int]]] = defaultdict(list)
        in_edges: dict[int, list[tuple[int, int]]] = defaultdict(list)
        by_relation: dict[int, list[tuple[int, int]]] = defaultdict(list)
        train_set: set[Triple] = set()
        for h, r, t in self._splits["train"]:
            out_by_hr[h, r].add(t)
            in_by_tr[t, r].add(h)
            out_edges[h].append((r, t))
            in_edges[t].append((r, h))
            by_relation[r].append((h, t))
            train_set.add(Triple(h, r, t))

        true_tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        true_heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        all_true: set[Triple] = set()
        for name in SPLITS:
            for h, r, t in self._splits[name]:
                true_tails[h, r].add(t)
                true_heads[t, r].add(h)
                all_true.add(Triple(h, r, t))

        self._out_by_hr = {k: frozenset(v) for k, v in out_by_hr.items()}
        self._in_by_tr = {k: frozenset(v) for k, v in in_by_tr.items()}
        self._out_edges = {k: tuple(v) for k, v in out_edges.items()}
        self._in_edges = {k: tuple(v) for k, v in in_edges.items()}
        self._by_relation = {k: tuple(v) for k, v in by_relation.items()}
        self._train_set = frozenset(train_set)
        self._true_tails = {k: frozenset(v) for k, v in true_tails.items()}
        self._true_heads = {k: frozenset(v) for k, v in true_heads.items()}
        self._all_true = frozenset(all_true)

    @classmethod
    def from_labeled(cls, train: Iterable[tuple[str, str, str]] = (),
                     valid: Iterable[tuple[str, str, str]] = (),
                     test: Iterable[tuple[str, str, str]] = ()
                     ) -> tuple["TripleStore", LoadReport]:
        """Build a store from labeled string triples (mainly for tests/demos)."""
        return _build_store({"train": list(train), "valid": list(valid),
                             "test": list(test)})

    # -- sizes and raw triples ------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> tuple[Triple, ...]:
        if name not in SPLITS:
            raise DataError(f"unknown split: {name!r}")
        return self._splits[name]

    @property
    def train(self) -> tuple[Triple, ...]:
        return self._splits["train"]

    @property
    def valid(self) -> tuple[Triple, ...]:
        return self._splits["valid"]

    @property
    def test(self) -> tuple[Triple, ...]:
        return self._splits["test"]

    # -- membership -----------------------------------------------------------

    def exists(self, h: int, r: int, t: int) -> bool:
        """True iff (h, r, t) was loaded into any split."""
        return Triple(h, r, t) in self._all_true

    def in_train(self, h: int, r: int, t: int) -> bool:
        return Triple(h, r, t) in self._train_set

    # -- adjacency (training split only) ---------------------------------------

    def neighbors_out(self, h: int, r: int) -> frozenset[int]:
        """Tails t with (h, r, t) in the training split."""
        return self._out_by_hr.get((h, r), _EMPTY)

    def neighbors_in(self, t: int, r: int) -> frozenset[int]:
        """Heads h with (h, r, t) in the training split."""
        return self._in_by_tr.get((t, r), _EMPTY)

    def out_edges(self, h: int) -> tuple[tuple[int, int], ...]:
        """All (relation, tail) training edges leaving `h`."""
        return self._out_edges.get(h, ())

    def in_edges(self, t: int) -> tuple[tuple[int, int], ...]:
        """All (relation, head) training edges entering `t`."""
        return self._in_edges.get(t, ())

    def train_pairs(self, r: int) -> tuple[tuple[int, int], ...]:
        """All (head, tail) pairs of relation `r` in the training split."""
        return self._by_relation.get(r, ())

    # -- filtered-ranking membership (union of all splits) ---------------------

    def true_tails(self, h: int, r: int) -> frozenset[int]:
        return self._true_tails.get((h, r), _EMPTY)

    def true_heads(self, t: int, r: int) -> frozenset[int]:
        return self._true_heads.get((t, r), _EMPTY)

    def check_entity(self, e: int) -> int:
        if not 0 <= e < len(self.entities):
            raise DataError(f"unknown entity id: {e}")
        return e

    def check_relation(self, r: int) -> int:
        if not 0 <= r < len(self.relations):
            raise DataError(f"unknown relation id: {r}")
        return r


def _parse_triple_file(path) -> list[tuple[str, str, str]]:
    rows: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno,
                                 f"expected 3 tab-separated columns, found {len(parts)}")
            h, r, t = parts
            if not h or not r or not t:
                raise ParseError(path, lineno, "empty entity or relation token")
            rows.append((h, r, t))
    return rows


def _build_store(rows: dict[str, list[tuple[str, str, str]]]
                 ) -> tuple[TripleStore, LoadReport]:
    entities, relations = Vocab(), Vocab()
    splits: dict[str, list[Triple]] = {}
    counts: dict[str, int] = {}
    duplicates: dict[str, int] = {}
    for name in SPLITS:
        seen: set[Triple] = set()
        kept: list[Triple] = []
        dups = 0
        for h, r, t in rows.get(name, ()):
            trip = Triple(entities.intern(h), relations.intern(r), entities.intern(t))
            if trip in seen:
                dups += 1
            else:
                seen.add(trip)
                kept.append(trip)
        splits[name] = kept
        counts[name] = len(kept)
        duplicates[name] = dups

    train_ents: set[int] = set()
    train_rels: set[int] = set()
    for h, r, t in splits["train"]:
        train_ents.add(h)
        train_ents.add(t)
        train_rels.add(r)
    unseen_entities = tuple(label for i, label in enumerate(entities.labels)
                            if i not in train_ents)
    unseen_relations = tuple(label for i, label in enumerate(relations.labels)
                             if i not in train_rels)

    store = TripleStore(entities, relations, splits)
    report = LoadReport(
        n_entities=len(entities),
        n_relations=len(relations),
        counts=counts,
        duplicates=duplicates,
        unseen_entities=unseen_entities,
        unseen_relations=unseen_relations,
    )
    return store, report


def load_triples(train_path, valid_path, test_path) -> tuple[TripleStore, LoadReport]:
    """Load one tab-separated `head<TAB>relation<TAB>tail` file per split.

    Vocabularies are interned over the union of all splits (entities that only
    occur in valid/test still get ids so ranking can score them; the report
    lists them).  Duplicate lines within a split are dropped and counted.
    """
    rows = {
        "train": _parse_triple_file(train_path),
        "valid": _parse_triple_file(valid_path),
        "test": _parse_triple_file(test_path),
    }
    return _build_store(rows)


def write_vocab(vocab: Vocab, path) -> None:
    """Dump a vocabulary as `id<TAB>label` lines (reproducibility artifact)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(vocab.labels):
            fh.write(f"{i}\t{label}\n")


def read_vocab(path) -> Vocab:
    vocab = Vocab()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, "expected `id<TAB>label`")
            idx, label = parts
            if int(idx) != vocab.intern(label):
                raise ParseError(path, lineno, f"non-contiguous id {idx}")
    return vocab
