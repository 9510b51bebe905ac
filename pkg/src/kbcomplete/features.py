"""Feature assembly for triple scoring.

Bundles the rule indicators and numeric difference vectors a model consumes.
Batch variants score one query side against many candidate entities at once;
they must agree exactly with the per-pair functions (tested), they just avoid
re-deriving path frontiers per candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kb import TripleStore
from .numeric import NumericTable, RelationNumericSpec, numeric_diff_vector
from .rules import FORWARD, PathFormula, RuleSet, relational_vector


@dataclass
class TripleFeatures:
    rvec: np.ndarray   # (m,) binary rule indicators
    diffs: np.ndarray  # (d,) signed numeric differences, 0.0 where absent
    mask: np.ndarray   # (d,) bool, True where both sides have a value


@dataclass
class FeatureBatch:
    rmat: np.ndarray   # (C, m)
    diffs: np.ndarray  # (C, d)
    mask: np.ndarray   # (C, d)


class TripleFeaturizer:
    """Computes model input features from the training graph and numeric table."""

    def __init__(self, store: TripleStore, rules: RuleSet | None = None,
                 numeric_table: NumericTable | None = None,
                 numeric_spec: RelationNumericSpec | None = None) -> None:
        if (numeric_table is None) != (numeric_spec is None):
            raise ValueError("numeric_table and numeric_spec go together")
        self.store = store
        self.rules = rules
        self.numeric_table = numeric_table
        self.numeric_spec = numeric_spec

    def rel_dim(self, r: int) -> int:
        return self.rules.feature_dim(r) if self.rules is not None else 0

    def num_dim(self, r: int) -> int:
        return self.numeric_spec.dim(r) if self.numeric_spec is not None else 0

    def features(self, r: int, h: int, t: int) -> TripleFeatures:
        if self.rules is not None:
            rvec = relational_vector(self.store, self.rules, r, h, t)
        else:
            rvec = np.empty(0, dtype=np.float64)
        if self.numeric_spec is not None:
            diffs, mask = numeric_diff_vector(self.numeric_table,
                                              self.numeric_spec, r, h, t)
        else:
            diffs = np.empty(0, dtype=np.float64)
            mask = np.empty(0, dtype=bool)
        return TripleFeatures(rvec, diffs, mask)

    # -- batch evaluation -------------------------------------------------

    def tail_batch(self, r: int, h: int, tails: np.ndarray) -> FeatureBatch:
        """Features for the triples (h, r, tails[i])."""
        tails = np.asarray(tails, dtype=np.int64)
        rmat = self._rule_matrix(r, tails, self._tail_formula_set, h)
        diffs, mask = self._numeric_batch(r, np.full_like(tails, h), tails)
        return FeatureBatch(rmat, diffs, mask)

    def head_batch(self, r: int, t: int, heads: np.ndarray) -> FeatureBatch:
        """Features for the triples (heads[i], r, t)."""
        heads = np.asarray(heads, dtype=np.int64)
        rmat = self._rule_matrix(r, heads, self._head_formula_set, t)
        diffs, mask = self._numeric_batch(r, heads, np.full_like(heads, t))
        return FeatureBatch(rmat, diffs, mask)

    def _rule_matrix(self, r, candidates, formula_set, fixed) -> np.ndarray:
        if self.rules is None:
            return np.empty((len(candidates), 0), dtype=np.float64)
        formulas = self.rules.formulas_for(r)
        rmat = np.zeros((len(candidates), len(formulas)), dtype=np.float64)
        if not formulas:
            return rmat
        lookup = np.zeros(self.store.n_entities, dtype=bool)
        for j, formula in enumerate(formulas):
            members = formula_set(formula, r, fixed)
            if not members:
                continue
            idx = np.fromiter(members, dtype=np.int64, count=len(members))
            lookup[idx] = True
            rmat[:, j] = lookup[candidates]
            lookup[idx] = False
        return rmat

    def _tail_formula_set(self, formula: PathFormula, r: int, h: int) -> set[int]:
        """All tails t with formula(h, t) true, self-probe excluded."""
        store = self.store
        if formula.length == 1:
            q = formula.relations[0]
            if formula.directions[0] == FORWARD:
                # probe (h, q, t) equals the scored triple whenever q == r
                return set() if q == r else set(store.neighbors_out(h, q))
            members = set(store.neighbors_in(h, q))
            if q == r:
                # probe (t, q, h) is the scored triple only for t == h
                members.discard(h)
            return members
        q1, q2 = formula.relations
        d1, d2 = formula.directions
        mids = store.neighbors_out(h, q1) if d1 == FORWARD else store.neighbors_in(h, q1)
        out: set[int] = set()
        for x in mids:
            out |= store.neighbors_out(x, q2) if d2 == FORWARD else store.neighbors_in(x, q2)
        return out

    def _head_formula_set(self, formula: PathFormula, r: int, t: int) -> set[int]:
        """All heads h with formula(h, t) true, self-probe excluded."""
        store = self.store
        if formula.length == 1:
            q = formula.relations[0]
            if formula.directions[0] == FORWARD:
                return set() if q == r else set(store.neighbors_in(t, q))
            members = set(store.neighbors_out(t, q))
            if q == r:
                members.discard(t)
            return members
        q1, q2 = formula.relations
        d1, d2 = formula.directions
        mids = store.neighbors_in(t, q2) if d2 == FORWARD else store.neighbors_out(t, q2)
        out: set[int] = set()
        for x in mids:
            out |= store.neighbors_in(x, q1) if d1 == FORWARD else store.neighbors_out(x, q1)
        return out

    def _numeric_batch(self, r, heads, tails) -> tuple[np.ndarray, np.ndarray]:
        n = len(heads)
        if self.numeric_spec is None:
            return (np.empty((n, 0), dtype=np.float64),
                    np.empty((n, 0), dtype=bool))
        fids = np.asarray(self.numeric_spec.feature_ids(r), dtype=np.int64)
        if fids.size == 0:
            return (np.empty((n, 0), dtype=np.float64),
                    np.empty((n, 0), dtype=bool))
        values = self.numeric_table.values
        vh = values[heads[:, None], fids[None, :]]
        vt = values[tails[:, None], fids[None, :]]
        mask = np.isfinite(vh) & np.isfinite(vt)
        diffs = np.where(mask, vh - vt, 0.0)
        return diffs, mask
