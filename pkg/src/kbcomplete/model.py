"""Product-of-experts triple scorer with exact analytic gradients.

Three experts contribute per-relation log-scores that are summed:

  latent      (e_h * e_t) . w_r          (bilinear, element-wise product)
  relational  rvec . w_rel_r             (binary path-rule indicators)
  numerical   act(diffs) . w_num_r       (bump or sign activations)

The bump activation is exp(-(x - c)^2 / sigma^2) with fixed (c, sigma) per
feature; in sign mode the activation is +1/-1 by the sign of the difference
(sign(0) = +1).  Masked-absent numeric entries contribute 0, as does any
expert disabled by configuration, so the log-score of an unused expert is
exactly neutral.

Probabilities over a candidate set are a max-shifted softmax of the summed
log-scores; the experts' exponentials are never materialized individually.
Gradients are closed-form: with p the softmax and `pos` the observed triple,
d(-log p_pos)/d(logit_c) = p_c - [c == pos], chained through the three
linear/bilinear forms above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureBatch, TripleFeatures
from .kb import TripleStore
from .numeric import RelationNumericSpec
from .rules import RuleSet

EXPERTS = "lrn"  # latent, relational, numerical
ABLATIONS = ("l", "r", "n", "lr", "ln", "rn", "lrn")

RBF = "rbf"
SIGN = "sign"

# cap on elements of the largest temporary (B, C, k) block in batched scoring
_CHUNK_ELEMENTS = 1 << 22


def _normalize_experts(experts: str) -> frozenset[str]:
    chars = frozenset(experts)
    if not chars <= frozenset(EXPERTS):
        raise ValueError(f"unknown expert letters in {experts!r}")
    return chars


class PoeModel:
    """All learnable parameters plus the fixed numeric activation constants."""

    def __init__(self, entity_emb: np.ndarray, w_latent: np.ndarray,
                 w_rel: list[np.ndarray], w_num: list[np.ndarray],
                 centers: list[np.ndarray], widths: list[np.ndarray],
                 experts: str = "lrn", transform: str = RBF) -> None:
        if transform not in (RBF, SIGN):
            raise ValueError(f"unknown numeric transform: {transform!r}")
        self.entity_emb = entity_emb
        self.w_latent = w_latent
        self.w_rel = w_rel
        self.w_num = w_num
        self.centers = centers
        self.widths = widths
        self.experts = _normalize_experts(experts)
        self.transform = transform

    @property
    def n_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n_relations(self) -> int:
        return self.w_latent.shape[0]

    @property
    def k(self) -> int:
        return self.entity_emb.shape[1]

    def rel_dim(self, r: int) -> int:
        return len(self.w_rel[r])

    def num_dim(self, r: int) -> int:
        return len(self.w_num[r])

    def copy(self) -> "PoeModel":
        return PoeModel(
            self.entity_emb.copy(), self.w_latent.copy(),
            [w.copy() for w in self.w_rel], [w.copy() for w in self.w_num],
            [c.copy() for c in self.centers], [s.copy() for s in self.widths],
            experts="".join(sorted(self.experts)), transform=self.transform)

    def experts_string(self) -> str:
        return "".join(c for c in EXPERTS if c in self.experts)

    # -- per-expert log-scores ------------------------------------------------

    def latent_logit(self, h: int, r: int, t: int) -> float:
        return float((self.entity_emb[h] * self.entity_emb[t]) @ self.w_latent[r])

    def relational_logit(self, r: int, rvec: np.ndarray) -> float:
        rvec = np.asarray(rvec, dtype=np.float64)
        if rvec.shape != (self.rel_dim(r),):
            raise ValueError(
                f"rule vector for relation {r} must have length "
                f"{self.rel_dim(r)}, got {rvec.shape}")
        return float(rvec @ self.w_rel[r])

    def numeric_activation(self, r: int, diffs: np.ndarray,
                           mask: np.ndarray) -> np.ndarray:
        """Element-wise activation of numeric differences; 0 where absent."""
        if self.transform == RBF:
            z = (diffs - self.centers[r]) / self.widths[r]
            act = np.exp(-(z * z))
        else:
            act = np.where(diffs >= 0.0, 1.0, -1.0)
        return np.where(mask, act, 0.0)

    def numerical_logit(self, r: int, diffs: np.ndarray,
                        mask: np.ndarray) -> float:
        diffs = np.asarray(diffs, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if diffs.shape != (self.num_dim(r),) or mask.shape != diffs.shape:
            raise ValueError(
                f"numeric vector for relation {r} must have length "
                f"{self.num_dim(r)}, got {diffs.shape}")
        return float(self.numeric_activation(r, diffs, mask) @ self.w_num[r])

    def total_logit(self, h: int, r: int, t: int,
                    features: TripleFeatures) -> float:
        z = 0.0
        if "l" in self.experts:
            z += self.latent_logit(h, r, t)
        if "r" in self.experts:
            z += self.relational_logit(r, features.rvec)
        if "n" in self.experts:
            z += self.numerical_logit(r, features.diffs, features.mask)
        return z

    def logits_batch(self, r: int, heads: np.ndarray, tails: np.ndarray,
                     features: FeatureBatch) -> np.ndarray:
        """Total log-scores for C candidate triples sharing relation r."""
        heads = np.asarray(heads, dtype=np.int64)
        tails = np.asarray(tails, dtype=np.int64)
        n = len(heads)
        if len(tails) != n:
            raise ValueError("heads and tails must have equal length")
        z = np.zeros(n, dtype=np.float64)
        if "l" in self.experts:
            eh = self.entity_emb[heads]
            et = self.entity_emb[tails]
            z += (eh * et) @ self.w_latent[r]
        if "r" in self.experts:
            if features.rmat.shape != (n, self.rel_dim(r)):
                raise ValueError(
                    f"rule matrix shape {features.rmat.shape} does not match "
                    f"({n}, {self.rel_dim(r)}) for relation {r}")
            if self.rel_dim(r):
                z += features.rmat @ self.w_rel[r]
        if "n" in self.experts:
            if features.diffs.shape != (n, self.num_dim(r)):
                raise ValueError(
                    f"numeric matrix shape {features.diffs.shape} does not "
                    f"match ({n}, {self.num_dim(r)}) for relation {r}")
            if self.num_dim(r):
                z += self.numeric_activation(r, features.diffs,
                                             features.mask) @ self.w_num[r]
        return z


def init_model(store: TripleStore, rules: RuleSet | None = None,
               numeric_spec: RelationNumericSpec | None = None,
               k: int = 100, seed=0, experts: str = "lrn",
               transform: str = RBF) -> PoeModel:
    """Glorot-uniform initialization, deterministic under a fixed seed.

    The embedding matrix is one lookup layer (fan_in = #entities, fan_out = k);
    each per-relation weight vector maps its feature vector to a scalar
    (fan_in = vector length, fan_out = 1), giving bound sqrt(6 / (len + 1)).
    Numeric bump parameters come fixed from the fitted spec and are not drawn.
    All weight vectors are allocated regardless of the enabled experts so that
    ablation variants of the same seed share their initial parameters.
    """
    if k < 1:
        raise ValueError("embedding dimension must be positive")
    rng = np.random.default_rng(seed)
    n_ent, n_rel = store.n_entities, store.n_relations

    bound_emb = np.sqrt(6.0 / (n_ent + k)) if n_ent else 0.0
    entity_emb = rng.uniform(-bound_emb, bound_emb, size=(n_ent, k))

    bound_w = np.sqrt(6.0 / (k + 1))
    w_latent = rng.uniform(-bound_w, bound_w, size=(n_rel, k))

    w_rel: list[np.ndarray] = []
    w_num: list[np.ndarray] = []
    centers: list[np.ndarray] = []
    widths: list[np.ndarray] = []
    for r in range(n_rel):
        m = rules.feature_dim(r) if rules is not None else 0
        if m:
            b = np.sqrt(6.0 / (m + 1))
            w_rel.append(rng.uniform(-b, b, size=m))
        else:
            w_rel.append(np.empty(0, dtype=np.float64))
        d = numeric_spec.dim(r) if numeric_spec is not None else 0
        if d:
            b = np.sqrt(6.0 / (d + 1))
            w_num.append(rng.uniform(-b, b, size=d))
            centers.append(np.array(numeric_spec.centers(r), dtype=np.float64))
            widths.append(np.array(numeric_spec.widths(r), dtype=np.float64))
        else:
            w_num.append(np.empty(0, dtype=np.float64))
            centers.append(np.empty(0, dtype=np.float64))
            widths.append(np.empty(0, dtype=np.float64))
    return PoeModel(entity_emb, w_latent, w_rel, w_num, centers, widths,
                    experts=experts, transform=transform)


def softmax_prob(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; stable for logits spanning hundreds of units."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax over an empty candidate set")
    p = np.exp(z - z.max())
    return p / p.sum()


@dataclass
class CandidateSet:
    """One positive triple with its corruption candidates (positive included)."""

    relation: int
    heads: np.ndarray
    tails: np.ndarray
    features: FeatureBatch
    positive: int  # index of the observed triple among the candidates

    def __len__(self) -> int:
        return len(self.heads)


@dataclass
class Gradients:
    """Dense gradient buffers matching the model's parameter shapes."""

    entity: np.ndarray
    w_latent: np.ndarray
    w_rel: list[np.ndarray]
    w_num: list[np.ndarray]

    @classmethod
    def zeros_like(cls, model: PoeModel) -> "Gradients":
        return cls(
            entity=np.zeros_like(model.entity_emb),
            w_latent=np.zeros_like(model.w_latent),
            w_rel=[np.zeros_like(w) for w in model.w_rel],
            w_num=[np.zeros_like(w) for w in model.w_num],
        )

    def arrays(self):
        yield "entity_emb", self.entity
        yield "w_latent", self.w_latent
        for r, w in enumerate(self.w_rel):
            yield f"w_rel/{r}", w
        for r, w in enumerate(self.w_num):
            yield f"w_num/{r}", w


def loss_and_gradients(model: PoeModel, batch: list[CandidateSet]
                       ) -> tuple[float, Gradients]:
    """Summed negative log-likelihood over candidate sets, with exact gradients.

    Candidate sets are grouped by (relation, size) and scored in vectorized
    blocks; accumulation order is fixed, so results are deterministic for a
    given batch order.  Parameters appearing in several candidates (or on both
    sides of a self-loop) accumulate every contribution.
    """
    if not batch:
        raise ValueError("empty batch")
    for cs in batch:
        if not 0 <= cs.positive < len(cs):
            raise ValueError("positive index outside the candidate set")

    grads = Gradients.zeros_like(model)
    total = 0.0
    k = model.k

    groups: dict[tuple[int, int], list[CandidateSet]] = {}
    for cs in batch:
        groups.setdefault((cs.relation, len(cs)), []).append(cs)

    for (r, c), sets in groups.items():
        H = np.stack([cs.heads for cs in sets]).astype(np.int64, copy=False)
        T = np.stack([cs.tails for cs in sets]).astype(np.int64, copy=False)
        pos = np.array([cs.positive for cs in sets], dtype=np.int64)
        use_rel = "r" in model.experts and model.rel_dim(r) > 0
        use_num = "n" in model.experts and model.num_dim(r) > 0
        rmat = np.stack([cs.features.rmat for cs in sets]) if use_rel else None
        if "r" in model.experts:
            for cs in sets:
                if cs.features.rmat.shape != (c, model.rel_dim(r)):
                    raise ValueError(
                        f"rule matrix shape {cs.features.rmat.shape} does not "
                        f"match ({c}, {model.rel_dim(r)}) for relation {r}")
        if "n" in model.experts:
            for cs in sets:
                if cs.features.diffs.shape != (c, model.num_dim(r)):
                    raise ValueError(
                        f"numeric matrix shape {cs.features.diffs.shape} does "
                        f"not match ({c}, {model.num_dim(r)}) for relation {r}")
        if use_num:
            diffs = np.stack([cs.features.diffs for cs in sets])
            nmask = np.stack([cs.features.mask for cs in sets])

        step = max(1, _CHUNK_ELEMENTS // max(1, c * k))
        for lo in range(0, len(sets), step):
            hi = min(lo + step, len(sets))
            sl = slice(lo, hi)
            b = hi - lo
            z = np.zeros((b, c), dtype=np.float64)
            if "l" in model.experts:
                eh = model.entity_emb[H[sl]]          # (b, c, k)
                et = model.entity_emb[T[sl]]
                ew = eh * et
                z += ew @ model.w_latent[r]
            if use_rel:
                z += rmat[sl] @ model.w_rel[r]
            if use_num:
                act = model.numeric_activation(r, diffs[sl], nmask[sl])
                z += act @ model.w_num[r]

            zmax = z.max(axis=1, keepdims=True)
            lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            rows = np.arange(b)
            total += float((lse - z[rows, pos[sl]]).sum())

            a = np.exp(z - lse[:, None])              # softmax probabilities
            a[rows, pos[sl]] -= 1.0                   # d loss / d logit
            if "l" in model.experts:
                grads.w_latent[r] += np.einsum("bc,bck->k", a, ew)
                gw = a[:, :, None] * (et * model.w_latent[r])
                np.add.at(grads.entity, H[sl].ravel(), gw.reshape(-1, k))
                gw = a[:, :, None] * (eh * model.w_latent[r])
                np.add.at(grads.entity, T[sl].ravel(), gw.reshape(-1, k))
            if use_rel:
                grads.w_rel[r] += np.einsum("bc,bcm->m", a, rmat[sl])
            if use_num:
                grads.w_num[r] += np.einsum("bc,bcd->d", a, act)

    return total, grads
