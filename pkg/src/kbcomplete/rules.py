"""Horn-style path rules over the training graph.

A rule body is a directed path of one or two relation steps between a
candidate head and tail entity; each step traverses its relation forward
(`+`) or inverse (`-`).  Bodies are mined per head relation by exact
counting of head coverage: the fraction of the relation's training pairs
that the body connects.  The resulting per-relation formula lists define
a binary feature vector for any entity pair.
"""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .kb import TripleStore, Vocab

FORWARD = "+"
INVERSE = "-"
_DIRECTIONS = (FORWARD, INVERSE)


@dataclass(frozen=True)
class PathFormula:
    """A one- or two-step directed path pattern between a head and a tail."""

    relations: tuple[int, ...]
    directions: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.relations) not in (1, 2):
            raise ValueError("path length must be 1 or 2")
        if len(self.relations) != len(self.directions):
            raise ValueError("one direction per relation step")
        if any(d not in _DIRECTIONS for d in self.directions):
            raise ValueError(f"directions must be '+' or '-', got {self.directions}")

    @property
    def length(self) -> int:
        return len(self.relations)

    def describe(self, relations: Vocab) -> str:
        return ",".join(f"{relations.label(q)}{d}"
                        for q, d in zip(self.relations, self.directions))


@dataclass(frozen=True)
class MinedRule:
    """A path formula with optional head-coverage statistics from mining."""

    formula: PathFormula
    coverage: float | None = None
    support: int | None = None
    head_count: int | None = None


class RuleSet:
    """Ordered per-relation lists of path formulas (the relational features)."""

    def __init__(self, rules: dict[int, list[MinedRule]] | None = None) -> None:
        rules = rules or {}
        self._rules: dict[int, tuple[MinedRule, ...]] = {
            r: tuple(lst) for r, lst in rules.items() if lst
        }
        self._formulas: dict[int, tuple[PathFormula, ...]] = {
            r: tuple(m.formula for m in lst) for r, lst in self._rules.items()
        }

    def rules_for(self, r: int) -> tuple[MinedRule, ...]:
        return self._rules.get(r, ())

    def formulas_for(self, r: int) -> tuple[PathFormula, ...]:
        return self._formulas.get(r, ())

    def feature_dim(self, r: int) -> int:
        return len(self._formulas.get(r, ()))

    @property
    def relations(self) -> tuple[int, ...]:
        return tuple(sorted(self._rules))

    def total_features(self) -> int:
        return sum(len(v) for v in self._rules.values())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RuleSet) and self._rules == other._rules

    def __repr__(self) -> str:
        return (f"RuleSet({len(self._rules)} relations, "
                f"{self.total_features()} formulas)")


def _sort_key(rule: MinedRule):
    # descending coverage, ties broken lexicographically on the body
    f = rule.formula
    return (-(rule.coverage or 0.0), f.relations, f.directions)


def _mine_relation(store: TripleStore, r: int, max_body_len: int,
                   min_head_coverage: float, min_head_support: int,
                   pair_rels: dict[tuple[int, int], frozenset[int]]
                   ) -> list[MinedRule]:
    pairs = store.train_pairs(r)
    n = len(pairs)
    if n < min_head_support:
        return []
    counts: dict[tuple, int] = defaultdict(int)
    for h, t in pairs:
        # length-1 bodies; the body that is the head relation itself, forward,
        # is trivially always true and is not a candidate
        for q in pair_rels.get((h, t), ()):
            if q != r:
                counts[q, FORWARD] += 1
        for q in pair_rels.get((t, h), ()):
            counts[q, INVERSE] += 1
        if max_body_len < 2:
            continue
        # length-2 bodies: enumerate midpoints x adjacent to h, then look up
        # the edge types between x and t in both directions
        found: set[tuple] = set()
        steps = [(q1, FORWARD, x) for q1, x in store.out_edges(h)]
        steps += [(q1, INVERSE, x) for q1, x in store.in_edges(h)]
        for q1, d1, x in steps:
            for q2 in pair_rels.get((x, t), ()):
                found.add((q1, d1, q2, FORWARD))
            for q2 in pair_rels.get((t, x), ()):
                found.add((q1, d1, q2, INVERSE))
        for body in found:
            counts[body] += 1

    mined: list[MinedRule] = []
    for body, support in counts.items():
        coverage = support / n
        if coverage >= min_head_coverage:
            if len(body) == 2:
                formula = PathFormula((body[0],), (body[1],))
            else:
                formula = PathFormula((body[0], body[2]), (body[1], body[3]))
            mined.append(MinedRule(formula, coverage, support, n))
    mined.sort(key=_sort_key)
    return mined


def mine_rules(store: TripleStore, max_body_len: int = 2,
               min_head_coverage: float = 0.01, min_head_support: int = 1,
               threads: int = 1) -> RuleSet:
    """Mine all path bodies meeting the head-coverage threshold, per relation.

    Counting is exact (no sampling): a body counts for a relation r once per
    training pair (h, t) of r that it connects.  Relations with fewer than
    `min_head_support` training triples get an empty feature list.
    """
    if not 0.0 < min_head_coverage <= 1.0:
        raise ValueError("min_head_coverage must be in (0, 1]")
    if min_head_support < 1:
        raise ValueError("min_head_support must be >= 1")
    if max_body_len not in (1, 2):
        raise ValueError("max_body_len must be 1 or 2")

    pair_rels: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in store.train:
        pair_rels[h, t].add(r)
    frozen = {k: frozenset(v) for k, v in pair_rels.items()}

    rel_ids = sorted({r for _, r, _ in store.train})

    def work(r: int) -> tuple[int, list[MinedRule]]:
        return r, _mine_relation(store, r, max_body_len, min_head_coverage,
                                 min_head_support, frozen)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(work, rel_ids))
    else:
        results = dict(work(r) for r in rel_ids)
    return RuleSet({r: results[r] for r in rel_ids})


def formula_holds(store: TripleStore, formula: PathFormula, r: int,
                  h: int, t: int) -> bool:
    """Evaluate one path formula on (h, t) against the training split.

    A one-step membership probe that coincides with the triple (h, r, t)
    itself is treated as absent, so scoring a training triple never reads
    its own edge (label-leakage guard).
    """
    if formula.length == 1:
        q = formula.relations[0]
        if formula.directions[0] == FORWARD:
            probe = (h, q, t)
        else:
            probe = (t, q, h)
        if probe == (h, r, t):
            return False
        return store.in_train(*probe)

    q1, q2 = formula.relations
    d1, d2 = formula.directions
    fwd = store.neighbors_out(h, q1) if d1 == FORWARD else store.neighbors_in(h, q1)
    if not fwd:
        return False
    bwd = store.neighbors_in(t, q2) if d2 == FORWARD else store.neighbors_out(t, q2)
    if not bwd:
        return False
    # existence check over the smaller frontier
    small, large = (fwd, bwd) if len(fwd) <= len(bwd) else (bwd, fwd)
    return not large.isdisjoint(small)


def relational_vector(store: TripleStore, rules: RuleSet, r: int,
                      h: int, t: int) -> np.ndarray:
    """Binary feature vector of rules[r] evaluated on the pair (h, t)."""
    store.check_entity(h)
    store.check_entity(t)
    formulas = rules.formulas_for(r)
    vec = np.zeros(len(formulas), dtype=np.float64)
    for i, formula in enumerate(formulas):
        if formula_holds(store, formula, r, h, t):
            vec[i] = 1.0
    return vec


# -- rule file format ---------------------------------------------------------
#
# One rule per line:
#   head_relation<TAB>body[<TAB>coverage[<TAB>support<TAB>head_count]]
# body is `r1+`, `r1-`, or two such steps joined by a comma.  Coverage and the
# counts appear only for mined rule sets; externally curated files carry the
# first two columns.


def save_rules(rules: RuleSet, relations: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rules.relations:
            head = relations.label(r)
            for rule in rules.rules_for(r):
                cols = [head, rule.formula.describe(relations)]
                if rule.coverage is not None:
                    cols.append(repr(rule.coverage))
                    if rule.support is not None:
                        cols.append(str(rule.support))
                        cols.append(str(rule.head_count))
                fh.write("\t".join(cols) + "\n")


def _parse_step(token: str, relations: Vocab, path, lineno: int) -> tuple[int, str]:
    if len(token) < 2 or token[-1] not in _DIRECTIONS:
        raise ParseError(path, lineno, f"malformed body step: {token!r}")
    label = token[:-1]
    if label not in relations:
        raise ParseError(path, lineno, f"unknown relation label: {label!r}")
    return relations.id(label), token[-1]


def load_rules(path, relations: Vocab) -> RuleSet:
    """Load a rule file; inverse of `save_rules` (bitwise on coverage floats)."""
    rules: dict[int, list[MinedRule]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3, 5):
                raise ParseError(path, lineno,
                                 f"expected 2, 3, or 5 columns, found {len(cols)}")
            head_label, body = cols[0], cols[1]
            if head_label not in relations:
                raise ParseError(path, lineno,
                                 f"unknown relation label: {head_label!r}")
            steps = [_parse_step(tok, relations, path, lineno)
                     for tok in body.split(",")]
            if len(steps) not in (1, 2):
                raise ParseError(path, lineno, f"malformed body: {body!r}")
            formula = PathFormula(tuple(q for q, _ in steps),
                                  tuple(d for _, d in steps))
            coverage = support = head_count = None
            if len(cols) >= 3:
                try:
                    coverage = float(cols[2])
                except ValueError:
                    raise ParseError(path, lineno,
                                     f"bad coverage value: {cols[2]!r}") from None
            if len(cols) == 5:
                try:
                    support, head_count = int(cols[3]), int(cols[4])
                except ValueError:
                    raise ParseError(path, lineno, "bad support/head_count") from None
            rules[relations.id(head_label)].append(
                MinedRule(formula, coverage, support, head_count))
    return RuleSet(dict(rules))
