"""Per-entity numeric attributes and per-relation difference statistics.

Raw attribute values live in a `NumericTable`.  For each relation, features
whose values are present on both sides of at least a fraction `tau` of the
relation's training triples are selected, and a Gaussian bump is fitted to
the signed head-minus-tail differences: center = mean difference, width =
population standard deviation (clamped below by `sigma_floor`).  The fitted
parameters stay fixed; only the per-relation mixing weights are learned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DataError, ParseError
from .kb import TripleStore, Vocab

DEFAULT_TAU = 0.9
DEFAULT_SIGMA_FLOOR = 1e-6


class NumericTable:
    """Entity x feature value matrix; missing entries are NaN."""

    def __init__(self, features: Vocab, values: np.ndarray) -> None:
        self.features = features
        self.values = values  # (n_entities, n_features) float64, NaN = absent

    @property
    def n_features(self) -> int:
        return len(self.features)

    def has_value(self, entity: int, feature: int) -> bool:
        return bool(np.isfinite(self.values[entity, feature]))

    def value(self, entity: int, feature: int) -> float:
        v = self.values[entity, feature]
        if not np.isfinite(v):
            raise DataError(f"entity {entity} has no value for feature {feature}")
        return float(v)

    def entities_with_any_value(self) -> int:
        if self.values.size == 0:
            return 0
        return int(np.isfinite(self.values).any(axis=1).sum())


@dataclass
class NumericLoadReport:
    n_rows: int
    n_stored: int
    skipped_unknown: tuple[tuple[int, str], ...]   # (lineno, entity label)
    duplicates: tuple[tuple[int, str, str], ...]   # (lineno, entity, feature)

    def lines(self) -> list[str]:
        out = [f"numeric_rows\t{self.n_rows}", f"numeric_stored\t{self.n_stored}"]
        if self.skipped_unknown:
            out.append(f"numeric_skipped_unknown_entities\t{len(self.skipped_unknown)}")
        if self.duplicates:
            out.append(f"numeric_duplicates_ignored\t{len(self.duplicates)}")
        return out


def build_numeric_table(entities: Vocab,
                        rows: Iterable[tuple[str, str, float]]
                        ) -> tuple[NumericTable, NumericLoadReport]:
    """Assemble a table from (entity, feature, value) rows.

    Rows for entities outside the KB vocabulary are skipped and reported.
    The first value wins for duplicate (entity, feature) pairs; later ones
    are reported.
    """
    features = Vocab()
    stored: dict[tuple[int, int], float] = {}
    skipped: list[tuple[int, str]] = []
    dups: list[tuple[int, str, str]] = []
    n_rows = 0
    for lineno, (ent, feat, value) in enumerate(rows, start=1):
        n_rows += 1
        if ent not in entities:
            skipped.append((lineno, ent))
            continue
        key = (entities.id(ent), features.intern(feat))
        if key in stored:
            dups.append((lineno, ent, feat))
            continue
        stored[key] = float(value)

    values = np.full((len(entities), len(features)), np.nan, dtype=np.float64)
    for (e, f), v in stored.items():
        values[e, f] = v
    table = NumericTable(features, values)
    report = NumericLoadReport(n_rows, len(stored), tuple(skipped), tuple(dups))
    return table, report


def load_numeric(path, entities: Vocab) -> tuple[NumericTable, NumericLoadReport]:
    """Load `entity<TAB>feature<TAB>value` rows from a file."""
    rows: list[tuple[str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno,
                                 f"expected 3 tab-separated columns, found {len(parts)}")
            ent, feat, raw = parts
            if not ent or not feat:
                raise ParseError(path, lineno, "empty entity or feature token")
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(path, lineno, f"unparseable value: {raw!r}") from None
            if not np.isfinite(value):
                raise ParseError(path, lineno, f"non-finite value: {raw!r}")
            rows.append((ent, feat, value))
    return build_numeric_table(entities, rows)


def select_features(store: TripleStore, table: NumericTable, r: int,
                    tau: float = DEFAULT_TAU) -> list[int]:
    """Features covering at least `tau` of r's training triples on both sides.

    Ordered by descending support, ties by feature id.  A relation with no
    training triples selects nothing.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    pairs = store.train_pairs(r)
    if not pairs or table.n_features == 0:
        return []
    heads = np.fromiter((h for h, _ in pairs), dtype=np.int64, count=len(pairs))
    tails = np.fromiter((t for _, t in pairs), dtype=np.int64, count=len(pairs))
    present = np.isfinite(table.values)
    both = present[heads] & present[tails]        # (n_pairs, n_features)
    support = both.sum(axis=0)
    n = len(pairs)
    selected = [f for f in range(table.n_features) if support[f] / n >= tau]
    selected.sort(key=lambda f: (-int(support[f]), f))
    return selected


def fit_rbf(store: TripleStore, table: NumericTable, r: int, feature: int,
            sigma_floor: float = DEFAULT_SIGMA_FLOOR
            ) -> tuple[float, float, int]:
    """Fit (center, width) to the signed head-minus-tail differences.

    center = mean difference over the relation's training triples where both
    sides carry the feature; width = population standard deviation (divisor
    |T|), clamped below by `sigma_floor`.  Returns (center, width, |T|).
    """
    diffs = _training_diffs(store, table, r, feature)
    if diffs.size == 0:
        raise DataError(
            f"cannot fit: no training triple of relation {r} has feature "
            f"{feature} on both sides")
    c = float(np.mean(diffs))
    sigma = float(np.sqrt(np.mean((diffs - c) ** 2)))
    return c, max(sigma, sigma_floor), int(diffs.size)


def _training_diffs(store: TripleStore, table: NumericTable, r: int,
                    feature: int) -> np.ndarray:
    pairs = store.train_pairs(r)
    if not pairs:
        return np.empty(0, dtype=np.float64)
    heads = np.fromiter((h for h, _ in pairs), dtype=np.int64, count=len(pairs))
    tails = np.fromiter((t for _, t in pairs), dtype=np.int64, count=len(pairs))
    vh = table.values[heads, feature]
    vt = table.values[tails, feature]
    ok = np.isfinite(vh) & np.isfinite(vt)
    return vh[ok] - vt[ok]


@dataclass(frozen=True)
class RelationNumericEntry:
    features: tuple[int, ...]
    centers: np.ndarray
    widths: np.ndarray
    support: np.ndarray  # per-feature |T| used for the fit

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, RelationNumericEntry)
                and self.features == other.features
                and np.array_equal(self.centers, other.centers)
                and np.array_equal(self.widths, other.widths)
                and np.array_equal(self.support, other.support))


class RelationNumericSpec:
    """Per-relation selected features with their fitted bump parameters."""

    def __init__(self, entries: dict[int, RelationNumericEntry] | None = None) -> None:
        entries = entries or {}
        self._entries = {r: e for r, e in entries.items() if e.features}

    def entry(self, r: int) -> RelationNumericEntry | None:
        return self._entries.get(r)

    def feature_ids(self, r: int) -> tuple[int, ...]:
        e = self._entries.get(r)
        return e.features if e else ()

    def dim(self, r: int) -> int:
        return len(self.feature_ids(r))

    def centers(self, r: int) -> np.ndarray:
        e = self._entries.get(r)
        return e.centers if e else np.empty(0)

    def widths(self, r: int) -> np.ndarray:
        e = self._entries.get(r)
        return e.widths if e else np.empty(0)

    @property
    def relations(self) -> tuple[int, ...]:
        return tuple(sorted(self._entries))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, RelationNumericSpec)
                and self._entries == other._entries)


def fit_numeric_spec(store: TripleStore, table: NumericTable,
                     tau: float = DEFAULT_TAU,
                     sigma_floor: float = DEFAULT_SIGMA_FLOOR
                     ) -> RelationNumericSpec:
    """Select and fit numeric features for every relation with training triples."""
    entries: dict[int, RelationNumericEntry] = {}
    for r in sorted({t.relation for t in store.train}):
        selected = select_features(store, table, r, tau)
        if not selected:
            continue
        fits = [fit_rbf(store, table, r, f, sigma_floor) for f in selected]
        entries[r] = RelationNumericEntry(
            features=tuple(selected),
            centers=np.array([c for c, _, _ in fits], dtype=np.float64),
            widths=np.array([s for _, s, _ in fits], dtype=np.float64),
            support=np.array([n for _, _, n in fits], dtype=np.int64),
        )
    return RelationNumericSpec(entries)


def numeric_diff_vector(table: NumericTable, spec: RelationNumericSpec, r: int,
                        h: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed differences value(h) - value(t) over r's selected features.

    Returns (values, mask); positions where either side is missing have
    mask False and value 0.0 (a placeholder that is never read).
    """
    fids = np.asarray(spec.feature_ids(r), dtype=np.int64)
    if fids.size == 0:
        return np.empty(0, dtype=np.float64), np.empty(0, dtype=bool)
    vh = table.values[h, fids]
    vt = table.values[t, fids]
    mask = np.isfinite(vh) & np.isfinite(vt)
    values = np.where(mask, vh - vt, 0.0)
    return values, mask


# -- fitted-spec file format ---------------------------------------------------
#
# One selected feature per line:
#   relation<TAB>feature<TAB>center<TAB>sigma<TAB>support


def save_numeric_spec(spec: RelationNumericSpec, relations: Vocab,
                      features: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in spec.relations:
            e = spec.entry(r)
            for i, f in enumerate(e.features):
                fh.write(f"{relations.label(r)}\t{features.label(f)}\t"
                         f"{e.centers[i]!r}\t{e.widths[i]!r}\t{e.support[i]}\n")


def load_numeric_spec(path, relations: Vocab, features: Vocab
                      ) -> RelationNumericSpec:
    rows: dict[int, list[tuple[int, float, float, int]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise ParseError(path, lineno,
                                 f"expected 5 columns, found {len(cols)}")
            rel_label, feat_label, c_raw, s_raw, n_raw = cols
            if rel_label not in relations:
                raise ParseError(path, lineno,
                                 f"unknown relation label: {rel_label!r}")
            if feat_label not in features:
                raise ParseError(path, lineno,
                                 f"unknown feature label: {feat_label!r}")
            try:
                c, s, n = float(c_raw), float(s_raw), int(n_raw)
            except ValueError:
                raise ParseError(path, lineno, "bad numeric column") from None
            rows.setdefault(relations.id(rel_label), []).append(
                (features.id(feat_label), c, s, n))
    entries = {
        r: RelationNumericEntry(
            features=tuple(f for f, _, _, _ in lst),
            centers=np.array([c for _, c, _, _ in lst], dtype=np.float64),
            widths=np.array([s for _, _, s, _ in lst], dtype=np.float64),
            support=np.array([n for _, _, _, n in lst], dtype=np.int64),
        )
        for r, lst in rows.items()
    }
    return RelationNumericSpec(entries)
