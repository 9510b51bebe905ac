"""Mini-batch training: negative sampling, Adam, MRR-based early stopping.

Every positive triple contributes two cross-entropy terms per epoch, one with
the tail corrupted and one with the head corrupted, each against N entities
drawn uniformly with replacement (accidental true triples are kept; filtering
only happens at evaluation time).  Validation MRR is computed every
`validate_every` epochs in the filtered setting; training stops on the first
value below the best seen, and the best-MRR parameters are returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DataError, ParseError
from .features import TripleFeaturizer
from .kb import Triple, TripleStore
from .model import (ABLATIONS, CandidateSet, Gradients, PoeModel, RBF, SIGN,
                    init_model, loss_and_gradients)
from .numeric import NumericTable, RelationNumericSpec
from .rules import RuleSet


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 512
    num_negatives: int = 500
    epochs: int = 100
    validate_every: int = 5
    embedding_dim: int = 100
    ablation: str = "lrn"
    numeric_transform: str = RBF
    seed: int = 0
    deterministic: bool = False
    threads: int = 1

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("batch_size", "num_negatives", "validate_every",
                     "embedding_dim", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.numeric_transform not in (RBF, SIGN):
            raise ValueError("numeric_transform must be 'rbf' or 'sign'")


_BOOLS = {"true": True, "1": True, "yes": True,
          "false": False, "0": False, "no": False}


def config_from_mapping(mapping: dict[str, str],
                        base: TrainConfig | None = None) -> TrainConfig:
    """Apply string key=value settings on top of `base` (or the defaults)."""
    cfg = replace(base) if base is not None else TrainConfig()
    types = {f.name: f.type for f in fields(TrainConfig)}
    for key, raw in mapping.items():
        if key not in types:
            raise DataError(f"unknown config key: {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            if raw.lower() not in _BOOLS:
                raise DataError(f"bad boolean for {key}: {raw!r}")
            value = _BOOLS[raw.lower()]
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Read a flat key=value file into a TrainConfig."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(path, lineno, "expected key=value")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    try:
        return config_from_mapping(mapping, base)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def config_to_mapping(cfg: TrainConfig) -> dict[str, str]:
    out: dict[str, str] = {}
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        out[f.name] = repr(v) if isinstance(v, float) else str(v)
    return out


class AdamState:
    """First/second moment accumulators mirroring the model parameters."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, m: Gradients, v: Gradients, t: int = 0) -> None:
        self.m = m
        self.v = v
        self.t = t

    @classmethod
    def for_model(cls, model: PoeModel) -> "AdamState":
        return cls(Gradients.zeros_like(model), Gradients.zeros_like(model))


def adam_step(model: PoeModel, grads: Gradients, state: AdamState,
              lr: float) -> None:
    """One bias-corrected Adam update, in place.

    Moments decay everywhere each step; the parameter update itself is applied
    only at entries with a nonzero gradient, so untouched parameters never
    move.  Non-finite gradients abort before any state is modified.
    """
    pairs = list(zip(_param_arrays(model), grads.arrays(),
                     state.m.arrays(), state.v.arrays()))
    for _, (name, g_arr), _, _ in pairs:
        if g_arr.size and not np.isfinite(g_arr).all():
            raise ValueError(f"non-finite gradient in {name}")

    state.t += 1
    bc1 = 1.0 - AdamState.beta1 ** state.t
    bc2 = 1.0 - AdamState.beta2 ** state.t
    for (_, param), (_, g), (_, m), (_, v) in pairs:
        if param.size == 0:
            continue
        m *= AdamState.beta1
        m += (1.0 - AdamState.beta1) * g
        v *= AdamState.beta2
        v += (1.0 - AdamState.beta2) * (g * g)
        touched = g != 0.0
        if touched.any():
            mhat = m[touched] / bc1
            vhat = v[touched] / bc2
            param[touched] -= lr * mhat / (np.sqrt(vhat) + AdamState.eps)
        if not np.isfinite(param).all():
            raise ValueError("non-finite parameter after update")


def _param_arrays(model: PoeModel):
    yield "entity_emb", model.entity_emb
    yield "w_latent", model.w_latent
    for r, w in enumerate(model.w_rel):
        yield f"w_rel/{r}", w
    for r, w in enumerate(model.w_num):
        yield f"w_num/{r}", w


def sample_negatives(store: TripleStore, positive: Triple, n: int,
                     rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Corrupted-candidate id arrays of size n + 1, positive first.

    Tails (resp. heads) are drawn uniformly with replacement from all
    entities; accidental rediscoveries of true triples are kept.
    """
    if n < 1:
        raise ValueError("need at least one negative sample")
    if store.n_entities == 0:
        raise ValueError("cannot sample from an empty vocabulary")
    tails = np.empty(n + 1, dtype=np.int64)
    tails[0] = positive.tail
    tails[1:] = rng.integers(0, store.n_entities, size=n)
    heads = np.empty(n + 1, dtype=np.int64)
    heads[0] = positive.head
    heads[1:] = rng.integers(0, store.n_entities, size=n)
    return tails, heads


@dataclass
class TrainLog:
    """Per-epoch loss and per-validation MRR, in occurrence order."""

    epoch_loss: list[tuple[int, float]] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)
    _lines: list[str] = field(default_factory=list)

    def record_epoch(self, epoch: int, loss: float) -> None:
        self.epoch_loss.append((epoch, loss))
        self._lines.append(f"{epoch}\t{loss!r}")

    def record_validation(self, epoch: int, mrr: float) -> None:
        self.validations.append((epoch, mrr))
        self._lines.append(f"validation\t{epoch}\t{mrr!r}")

    @property
    def lines(self) -> tuple[str, ...]:
        return tuple(self._lines)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self._lines:
                fh.write(line + "\n")


@dataclass
class TrainResult:
    model: PoeModel          # best-validation parameters (final if never validated)
    final_model: PoeModel
    log: TrainLog
    best_mrr: float | None
    best_epoch: int | None
    stopped_early: bool


def train(store: TripleStore, config: TrainConfig,
          rules: RuleSet | None = None,
          numeric_table: NumericTable | None = None,
          numeric_spec: RelationNumericSpec | None = None,
          validation_fn=None) -> TrainResult:
    """Run the full training loop and return the best checkpoint plus the log.

    `validation_fn(model) -> mrr` defaults to filtered MRR over the validation
    split; it is injectable for tests.  Validation is skipped when the
    validation split is empty and no override is given.
    """
    config.validate()
    experts = config.ablation
    ss = np.random.SeedSequence(config.seed)
    s_init, s_neg, s_shuffle = ss.spawn(3)
    model = init_model(store, rules, numeric_spec, k=config.embedding_dim,
                       seed=s_init, experts=experts,
                       transform=config.numeric_transform)
    featurizer = TripleFeaturizer(
        store,
        rules if "r" in experts else None,
        numeric_table if "n" in experts else None,
        numeric_spec if "n" in experts else None,
    )
    if validation_fn is None and store.valid:
        from .evaluation import evaluate  # local import; evaluation imports model

        def validation_fn(m: PoeModel) -> float:
            return evaluate(m, featurizer, store, split="valid",
                            threads=config.threads).mrr

    state = AdamState.for_model(model)
    rng_neg = np.random.default_rng(s_neg)
    rng_shuffle = np.random.default_rng(s_shuffle)
    log = TrainLog()
    positives = store.train
    best: PoeModel | None = None
    best_mrr = -np.inf
    best_epoch: int | None = None
    stopped = False

    for epoch in range(1, config.epochs + 1):
        if positives:
            order = rng_shuffle.permutation(len(positives))
            total_loss = 0.0
            n_terms = 0
            for lo in range(0, len(order), config.batch_size):
                sets: list[CandidateSet] = []
                for idx in order[lo:lo + config.batch_size]:
                    h, r, t = positives[idx]
                    tails, heads = sample_negatives(
                        store, Triple(h, r, t), config.num_negatives, rng_neg)
                    sets.append(CandidateSet(
                        r, np.full_like(tails, h), tails,
                        featurizer.tail_batch(r, h, tails), 0))
                    sets.append(CandidateSet(
                        r, heads, np.full_like(heads, t),
                        featurizer.head_batch(r, t, heads), 0))
                loss, grads = loss_and_gradients(model, sets)
                if not np.isfinite(loss):
                    raise ValueError(f"non-finite loss at epoch {epoch}")
                adam_step(model, grads, state, config.learning_rate)
                total_loss += loss
                n_terms += len(sets)
            log.record_epoch(epoch, total_loss / n_terms)
        else:
            log.record_epoch(epoch, 0.0)

        if validation_fn is not None and epoch % config.validate_every == 0:
            mrr = float(validation_fn(model))
            log.record_validation(epoch, mrr)
            if mrr < best_mrr:
                stopped = True
                break
            if mrr > best_mrr:
                best_mrr = mrr
                best_epoch = epoch
                best = model.copy()

    if best is None:
        return TrainResult(model, model, log, None, None, stopped)
    return TrainResult(best, model, log, float(best_mrr), best_epoch, stopped)
