"""Filtered-ranking evaluation, PR-AUC, and query-cardinality breakdowns.

Each test triple yields two completion queries (tail side and head side).
A query's candidates are all entities; candidates forming a known-true
triple in any split, other than the gold answer, are discarded before the
gold's rank is computed.  Ties get the mid-rank: 1 + #strictly-better +
floor(#equal-others / 2).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError
from .features import TripleFeaturizer
from .kb import TripleStore, Vocab
from .model import PoeModel

TAIL = "tail"
HEAD = "head"

HITS_AT = (1, 3, 5, 10)


@dataclass(frozen=True)
class CompletionQuery:
    """(h, r, ?) when direction is 'tail', (?, r, t) when 'head'."""

    direction: str
    entity: int    # the fixed side
    relation: int
    gold: int      # the entity that completes the query

    def __post_init__(self) -> None:
        if self.direction not in (TAIL, HEAD):
            raise ValueError(f"direction must be 'tail' or 'head', got "
                             f"{self.direction!r}")


def queries_for_split(store: TripleStore, split: str) -> list[CompletionQuery]:
    """Both query directions for every triple of the split."""
    out: list[CompletionQuery] = []
    for h, r, t in store.split(split):
        out.append(CompletionQuery(TAIL, h, r, t))
        out.append(CompletionQuery(HEAD, t, r, h))
    return out


def score_completions(model: PoeModel, featurizer: TripleFeaturizer,
                      query: CompletionQuery,
                      candidates: np.ndarray | None = None) -> np.ndarray:
    """Total logits of the query completed by each candidate entity."""
    if candidates is None:
        candidates = np.arange(model.n_entities, dtype=np.int64)
    else:
        candidates = np.asarray(candidates, dtype=np.int64)
    r = query.relation
    if query.direction == TAIL:
        fb = featurizer.tail_batch(r, query.entity, candidates)
        heads = np.full_like(candidates, query.entity)
        return model.logits_batch(r, heads, candidates, fb)
    fb = featurizer.head_batch(r, query.entity, candidates)
    tails = np.full_like(candidates, query.entity)
    return model.logits_batch(r, candidates, tails, fb)


def _filter_ids(store: TripleStore, query: CompletionQuery) -> frozenset[int]:
    if query.direction == TAIL:
        return store.true_tails(query.entity, query.relation)
    return store.true_heads(query.entity, query.relation)


def rank_query(model: PoeModel, featurizer: TripleFeaturizer,
               store: TripleStore, query: CompletionQuery,
               filtered: bool = True) -> int:
    scores = score_completions(model, featurizer, query)
    keep = np.ones(len(scores), dtype=bool)
    if filtered:
        for e in _filter_ids(store, query):
            keep[e] = False
        keep[query.gold] = True
    gold_score = scores[query.gold]
    kept = scores[keep]
    greater = int((kept > gold_score).sum())
    equal_others = int((kept == gold_score).sum()) - 1
    return 1 + greater + equal_others // 2


@dataclass
class Metrics:
    """Aggregated ranking quality; fractions are stored raw (0..1)."""

    mr: float
    mrr: float
    hits: dict[int, float]
    count: int

    @classmethod
    def from_ranks(cls, ranks: list[int]) -> "Metrics":
        if not ranks:
            raise DataError("no queries to aggregate")
        arr = np.asarray(ranks, dtype=np.float64)
        return cls(
            mr=float(arr.mean()),
            mrr=float((1.0 / arr).mean()),
            hits={k: float((arr <= k).mean()) for k in HITS_AT},
            count=len(ranks),
        )

    def report_lines(self) -> list[str]:
        """Machine-readable key=value lines, x100 like the usual tables."""
        out = [f"queries={self.count}",
               f"mr={self.mr!r}",
               f"mrr={100.0 * self.mrr!r}"]
        for k in sorted(self.hits):
            out.append(f"hits@{k}={100.0 * self.hits[k]!r}")
        return out

    def table(self) -> str:
        cols = [("MR", f"{self.mr:.1f}"), ("MRR", f"{100 * self.mrr:.2f}")]
        cols += [(f"Hits@{k}", f"{100 * self.hits[k]:.2f}")
                 for k in sorted(self.hits)]
        header = "  ".join(f"{name:>8}" for name, _ in cols)
        values = "  ".join(f"{val:>8}" for _, val in cols)
        return header + "\n" + values


def rank_queries(model: PoeModel, featurizer: TripleFeaturizer,
                 store: TripleStore, queries: list[CompletionQuery],
                 filtered: bool = True, threads: int = 1) -> list[int]:
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(
                lambda q: rank_query(model, featurizer, store, q, filtered),
                queries))
    return [rank_query(model, featurizer, store, q, filtered) for q in queries]


def evaluate(model: PoeModel, featurizer: TripleFeaturizer, store: TripleStore,
             split: str = "test", queries: list[CompletionQuery] | None = None,
             filtered: bool = True, threads: int = 1) -> Metrics:
    """Filtered ranking metrics over a split (or an explicit query list)."""
    if queries is None:
        queries = queries_for_split(store, split)
    if not queries:
        raise DataError(f"split {split!r} has no triples to evaluate")
    ranks = rank_queries(model, featurizer, store, queries, filtered, threads)
    return Metrics.from_ranks(ranks)


def pr_auc(model: PoeModel, featurizer: TripleFeaturizer,
           query: CompletionQuery, gold_labels: dict[int, int]) -> float:
    """Average precision of the query's ranking against complete ground truth.

    `gold_labels` maps every candidate entity to 1 (correct completion) or 0.
    Candidates are sorted by descending logit; tied scores collapse into one
    precision/recall point (all positives in a tie block share the precision
    at the block's end), and the area is the sum of precision times recall
    increment over blocks.  No filtering is applied.
    """
    if not gold_labels:
        raise DataError("empty ground-truth set")
    entities = np.fromiter(gold_labels.keys(), dtype=np.int64,
                           count=len(gold_labels))
    labels = np.fromiter((gold_labels[e] for e in entities), dtype=np.int64,
                         count=len(entities))
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("ground-truth set has no positive entity")
    scores = score_completions(model, featurizer, query, entities)

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    auc = 0.0
    tp = 0
    i = 0
    n = len(order)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        block_pos = int(sorted_labels[i:j].sum())
        tp += block_pos
        if block_pos:
            auc += (block_pos / n_pos) * (tp / j)
        i = j
    return auc


def load_gold_labels(path, entities: Vocab) -> dict[int, int]:
    """Ground-truth file: one `entity<TAB>{1|0}` line per candidate."""
    labels: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2 or cols[1] not in ("0", "1"):
                raise ParseError(path, lineno, "expected `entity<TAB>{1|0}`")
            if cols[0] not in entities:
                raise ParseError(path, lineno,
                                 f"unknown entity label: {cols[0]!r}")
            labels[entities.id(cols[0])] = int(cols[1])
    return labels


def split_by_cardinality(store: TripleStore, queries: list[CompletionQuery]
                         ) -> dict[str, list[CompletionQuery]]:
    """Bucket queries by whether exactly one entity completes them.

    Completions are counted over the union of all splits; a query with a
    single completion anywhere in the KB is 'one', otherwise 'many'.
    """
    buckets: dict[str, list[CompletionQuery]] = {"one": [], "many": []}
    for q in queries:
        completions = _filter_ids(store, q)
        buckets["one" if len(completions) == 1 else "many"].append(q)
    return buckets
