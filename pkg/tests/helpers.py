"""Shared test oracles: brute-force implementations kept deliberately naive.

Everything here recomputes results from raw triple lists with double loops
and dict lookups, independent of the indexed/vectorized production paths it
is used to check.
"""

from __future__ import annotations

import numpy as np

from kbcomplete import (CandidateSet, PoeModel, TripleFeaturizer, TripleStore,
                        loss_and_gradients, mine_rules)
from kbcomplete.evaluation import TAIL
from kbcomplete.features import FeatureBatch


def random_store(rng: np.random.Generator, n_entities: int = 10,
                 n_relations: int = 3, n_train: int = 40, n_valid: int = 0,
                 n_test: int = 0) -> TripleStore:
    def rand_triples(n):
        rows = set()
        attempts = 0
        while len(rows) < n and attempts < 50 * n:
            attempts += 1
            rows.add((f"e{rng.integers(n_entities)}",
                      f"r{rng.integers(n_relations)}",
                      f"e{rng.integers(n_entities)}"))
        return sorted(rows)

    # make sure every entity/relation label is interned
    base = [(f"e{i}", "r0", f"e{(i + 1) % n_entities}") for i in range(n_entities)]
    base += [(f"e0", f"r{j}", "e1") for j in range(n_relations)]
    store, _ = TripleStore.from_labeled(
        train=base + rand_triples(n_train),
        valid=rand_triples(n_valid),
        test=rand_triples(n_test),
    )
    return store


def random_model(rng: np.random.Generator, store: TripleStore, k: int = 4,
                 rel_dims=None, num_dims=None, experts: str = "lrn",
                 transform: str = "rbf") -> PoeModel:
    n_ent, n_rel = store.n_entities, store.n_relations
    rel_dims = rel_dims if rel_dims is not None else [int(rng.integers(0, 4)) for _ in range(n_rel)]
    num_dims = num_dims if num_dims is not None else [int(rng.integers(0, 3)) for _ in range(n_rel)]
    return PoeModel(
        entity_emb=rng.normal(size=(n_ent, k)),
        w_latent=rng.normal(size=(n_rel, k)),
        w_rel=[rng.normal(size=m) for m in rel_dims],
        w_num=[rng.normal(size=d) for d in num_dims],
        centers=[rng.normal(size=d) for d in num_dims],
        widths=[np.abs(rng.normal(size=d)) + 0.5 for d in num_dims],
        experts=experts,
        transform=transform,
    )


def random_candidate_set(rng: np.random.Generator, model: PoeModel, r: int,
                         size: int) -> CandidateSet:
    n_ent = model.n_entities
    m, d = model.rel_dim(r), model.num_dim(r)
    mask = rng.integers(0, 2, (size, d)).astype(bool)
    diffs = np.where(mask, rng.normal(size=(size, d)), 0.0)
    return CandidateSet(
        relation=r,
        heads=rng.integers(0, n_ent, size),
        tails=rng.integers(0, n_ent, size),
        features=FeatureBatch(
            rmat=rng.integers(0, 2, (size, m)).astype(np.float64),
            diffs=diffs,
            mask=mask,
        ),
        positive=int(rng.integers(0, size)),
    )


def finite_difference_gradients(model: PoeModel, sets: list[CandidateSet],
                                eps: float = 1e-5):
    """Central finite differences of the batch loss for every parameter entry."""
    def f() -> float:
        return loss_and_gradients(model, sets)[0]

    analytic = loss_and_gradients(model, sets)[1]
    pairs = [(model.entity_emb, analytic.entity),
             (model.w_latent, analytic.w_latent)]
    pairs += [(model.w_rel[r], analytic.w_rel[r])
              for r in range(model.n_relations)]
    pairs += [(model.w_num[r], analytic.w_num[r])
              for r in range(model.n_relations)]
    for arr, grad in pairs:
        if arr.size == 0:
            continue
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = f()
            arr[idx] = orig - eps
            f_minus = f()
            arr[idx] = orig
            yield grad[idx], (f_plus - f_minus) / (2 * eps)


def assert_gradients_match(model, sets, rel_tol=1e-5, abs_floor=1e-8):
    for analytic, numeric in finite_difference_gradients(model, sets):
        if max(abs(analytic), abs(numeric)) < abs_floor:
            assert abs(analytic - numeric) < abs_floor
        else:
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
            assert err < rel_tol, (analytic, numeric, err)


# -- brute-force rule mining ---------------------------------------------------

ALL_DIRS = ("+", "-")


def brute_mine(store: TripleStore, min_head_coverage: float,
               min_head_support: int, max_body_len: int = 2):
    """Double-loop miner over all candidate bodies and all training triples.

    Returns {relation: {body tuple: (coverage, support, head_count)}} where a
    body tuple is (q, d) or (q1, d1, q2, d2).
    """
    train = list(store.train)
    triples = {(h, r, t) for h, r, t in train}
    rel_ids = list(range(store.n_relations))

    def step(q, d, a, b):
        return ((a, q, b) in triples) if d == "+" else ((b, q, a) in triples)

    def holds(body, h, t):
        if len(body) == 2:
            return step(body[0], body[1], h, t)
        q1, d1, q2, d2 = body
        return any(step(q1, d1, h, x) and step(q2, d2, x, t)
                   for x in range(store.n_entities))

    bodies1 = [(q, d) for q in rel_ids for d in ALL_DIRS]
    bodies2 = ([(q1, d1, q2, d2) for q1 in rel_ids for d1 in ALL_DIRS
                for q2 in rel_ids for d2 in ALL_DIRS]
               if max_body_len >= 2 else [])

    result = {}
    for r in sorted({q.relation for q in store.train}):
        pairs = [(h, t) for h, q, t in train if q == r]
        n = len(pairs)
        found = {}
        if n >= min_head_support:
            for body in bodies1 + bodies2:
                if len(body) == 2 and body == (r, "+"):
                    continue  # trivially true for every pair of r
                support = sum(1 for h, t in pairs if holds(body, h, t))
                coverage = support / n
                if support and coverage >= min_head_coverage:
                    found[body] = (coverage, support, n)
        result[r] = found
    return result


def ruleset_as_bodies(rules):
    """Mined RuleSet -> the same {relation: {body: (cov, support, heads)}}."""
    out = {}
    for r in rules.relations:
        out[r] = {}
        for m in rules.rules_for(r):
            body = tuple(x for pair in zip(m.formula.relations,
                                           m.formula.directions) for x in pair)
            out[r][body] = (m.coverage, m.support, m.head_count)
    return out


def mined_bodies(store, min_cov, min_support, max_body_len=2):
    rules = mine_rules(store, max_body_len=max_body_len,
                       min_head_coverage=min_cov, min_head_support=min_support)
    return ruleset_as_bodies(rules)


# -- brute-force ranking ------------------------------------------------------


def brute_rank(model: PoeModel, featurizer: TripleFeaturizer,
               store: TripleStore, query, filtered: bool = True) -> int:
    """Score every entity one by one, drop known-true non-gold, mid-tie rank."""
    r = query.relation
    logits = []
    for e in range(store.n_entities):
        h, t = (query.entity, e) if query.direction == TAIL else (e, query.entity)
        feats = featurizer.features(r, h, t)
        logits.append(model.total_logit(h, r, t, feats))
    if query.direction == TAIL:
        known = store.true_tails(query.entity, r)
    else:
        known = store.true_heads(query.entity, r)
    gold_logit = logits[query.gold]
    greater = equal_others = 0
    for e in range(store.n_entities):
        if e == query.gold:
            continue
        if filtered and e in known:
            continue
        if logits[e] > gold_logit:
            greater += 1
        elif logits[e] == gold_logit:
            equal_others += 1
    return 1 + greater + equal_others // 2
