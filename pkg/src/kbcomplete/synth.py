"""Synthetic benchmark: a KB whose single relation is a numeric-difference band.

Every entity carries one numeric attribute drawn uniformly at random.  The
relation holds for an ordered pair (h, t) exactly when value(h) - value(t)
falls inside a band, plus a small fraction of uniformly chosen noise edges;
edges are shuffled into an 80/10/10 split.  Latent-only models must memorize
the graph, while the numeric expert can read the attribute differences
directly, which makes this dataset a controlled probe of how much signal the
numeric features carry.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kb import LoadReport, TripleStore
from .numeric import NumericLoadReport, NumericTable, build_numeric_table

RELATION = "band_rel"
FEATURE = "attr"


@dataclass
class SyntheticKb:
    store: TripleStore
    table: NumericTable
    report: LoadReport
    numeric_report: NumericLoadReport
    values: dict[str, float]          # entity label -> attribute value
    n_band_edges: int
    n_noise_edges: int


def numeric_band_kb(n_entities: int = 200, band: tuple[float, float] = (25.0, 40.0),
                    noise_rate: float = 0.05, value_span: float = 600.0,
                    seed: int = 0, splits: tuple[float, float] = (0.8, 0.9)
                    ) -> SyntheticKb:
    """Generate the band-relation KB with the given seed.

    `splits` gives the train and train+valid cumulative fractions of the
    shuffled edge list; the remainder is the test split.
    """
    rng = np.random.default_rng(seed)
    lo, hi = band
    labels = [f"e{i}" for i in range(n_entities)]
    values = rng.uniform(0.0, value_span, size=n_entities)

    diff = values[:, None] - values[None, :]
    in_band = (diff >= lo) & (diff <= hi)
    np.fill_diagonal(in_band, False)
    heads, tails = np.nonzero(in_band)
    edges = list(zip(heads.tolist(), tails.tolist()))

    n_noise = int(round(noise_rate * len(edges)))
    noise: set[tuple[int, int]] = set()
    while len(noise) < n_noise:
        h = int(rng.integers(0, n_entities))
        t = int(rng.integers(0, n_entities))
        if h != t and not in_band[h, t]:
            noise.add((h, t))
    all_edges = edges + sorted(noise)
    order = rng.permutation(len(all_edges))

    n_train = int(splits[0] * len(all_edges))
    n_valid = int(splits[1] * len(all_edges)) - n_train
    triples = [(labels[all_edges[i][0]], RELATION, labels[all_edges[i][1]])
               for i in order]
    store, report = TripleStore.from_labeled(
        train=triples[:n_train],
        valid=triples[n_train:n_train + n_valid],
        test=triples[n_train + n_valid:],
    )
    rows = [(labels[i], FEATURE, float(values[i])) for i in range(n_entities)]
    table, num_report = build_numeric_table(store.entities, rows)
    return SyntheticKb(
        store=store, table=table, report=report, numeric_report=num_report,
        values=dict(zip(labels, values.tolist())),
        n_band_edges=len(edges), n_noise_edges=n_noise,
    )


def write_kb_files(kb: SyntheticKb, out_dir) -> dict[str, Path]:
    """Dump the synthetic KB as the standard TSV files (for CLI demos)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for split in ("train", "valid", "test"):
        path = out / f"{split}.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t in kb.store.split(split):
                fh.write(f"{kb.store.entities.label(h)}\t"
                         f"{kb.store.relations.label(r)}\t"
                         f"{kb.store.entities.label(t)}\n")
        paths[split] = path
    numeric = out / "numeric.tsv"
    with open(numeric, "w", encoding="utf-8") as fh:
        for label, value in kb.values.items():
            fh.write(f"{label}\t{FEATURE}\t{value!r}\n")
    paths["numeric"] = numeric
    return paths
