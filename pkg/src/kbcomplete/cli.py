"""Command-line pipeline: ingest, mine-rules, fit-numeric, train, eval, predict, prauc.

Exit codes: 0 success, 1 usage error, 2 data/validation error.  Every shared
flag has a key of the same name in the flat key=value config file; explicit
flags override file values, and the effective configuration is echoed before
work starts.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import evaluation, kb, numeric, rules as rules_mod, training
from .errors import DataError
from .features import TripleFeaturizer
from .model import ABLATIONS, RBF, SIGN

USAGE_ERROR = 1
DATA_ERROR = 2


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with TrainConfig settings")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--numeric-transform", choices=(RBF, SIGN), default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")


def _add_kb_files(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--train", required=required)
    p.add_argument("--valid", required=required)
    p.add_argument("--test", required=required)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbcomplete")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate triple files")
    _add_kb_files(p)
    _add_shared(p)

    p = sub.add_parser("mine-rules", help="mine path rules from the training split")
    _add_kb_files(p)
    p.add_argument("--min-coverage", type=float, default=0.01)
    p.add_argument("--min-support", type=int, default=1)
    p.add_argument("--max-body-len", type=int, default=2, choices=(1, 2))
    _add_shared(p)

    p = sub.add_parser("fit-numeric", help="select and fit numeric features")
    _add_kb_files(p)
    p.add_argument("--numeric", required=True)
    p.add_argument("--tau", type=float, default=numeric.DEFAULT_TAU)
    p.add_argument("--sigma-floor", type=float,
                   default=numeric.DEFAULT_SIGMA_FLOOR)
    _add_shared(p)

    p = sub.add_parser("train", help="train a model")
    _add_kb_files(p)
    p.add_argument("--rules", help="rules file (required for ablations with r)")
    p.add_argument("--numeric", help="numeric values file (required with n)")
    p.add_argument("--numeric-spec", help="fitted numeric spec (required with n)")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--num-negatives", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--validate-every", type=int, default=None)
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--save-adam", action="store_true")
    p.add_argument("--f32", action="store_true",
                   help="store checkpoint tensors as float32")
    _add_shared(p)

    p = sub.add_parser("eval", help="filtered ranking metrics for a checkpoint")
    _add_kb_files(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--numeric", help="numeric values file (needed with n)")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--cardinality", action="store_true",
                   help="also report the one/many query breakdown")
    _add_shared(p)

    p = sub.add_parser("predict", help="top-k completions for one query")
    _add_kb_files(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--numeric")
    p.add_argument("--query", required=True,
                   help=r"`h<TAB>r<TAB>?` or `?<TAB>r<TAB>t` (\t accepted)")
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--filtered", action="store_true",
                   help="drop completions already known to be true")
    _add_shared(p)

    p = sub.add_parser("prauc", help="PR-AUC for one query with full ground truth")
    _add_kb_files(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--numeric")
    p.add_argument("--query", required=True)
    p.add_argument("--gold", required=True,
                   help="file of `entity<TAB>{1|0}` labels")
    _add_shared(p)
    return parser


def _effective_config(args) -> training.TrainConfig:
    cfg = training.TrainConfig()
    if getattr(args, "config", None):
        cfg = training.load_config(args.config, cfg)
    overrides = {
        "seed": args.seed,
        "deterministic": args.deterministic,
        "ablation": args.ablation,
        "numeric_transform": args.numeric_transform,
        "threads": args.threads,
        "learning_rate": getattr(args, "learning_rate", None),
        "batch_size": getattr(args, "batch_size", None),
        "num_negatives": getattr(args, "num_negatives", None),
        "epochs": getattr(args, "epochs", None),
        "validate_every": getattr(args, "validate_every", None),
        "embedding_dim": getattr(args, "embedding_dim", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _echo_config(cfg: training.TrainConfig) -> None:
    for key, value in training.config_to_mapping(cfg).items():
        print(f"config: {key}={value}")


def _default_threads(cfg: training.TrainConfig) -> int:
    if cfg.threads != 1:
        return cfg.threads
    return max(1, os.cpu_count() or 1)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_store(args):
    return kb.load_triples(args.train, args.valid, args.test)


def _parse_query(raw: str, store: kb.TripleStore) -> evaluation.CompletionQuery:
    text = raw if "\t" in raw else raw.replace("\\t", "\t")
    parts = text.split("\t")
    if len(parts) != 3 or parts.count("?") != 1 or parts[1] == "?":
        raise DataError(f"query must be `h<TAB>r<TAB>?` or `?<TAB>r<TAB>t`, "
                        f"got {raw!r}")
    relation = store.relations.id(parts[1])
    if parts[2] == "?":
        return evaluation.CompletionQuery(evaluation.TAIL,
                                          store.entities.id(parts[0]),
                                          relation, gold=0)
    return evaluation.CompletionQuery(evaluation.HEAD,
                                      store.entities.id(parts[2]),
                                      relation, gold=0)


def _featurizer_for(model, loaded: ckpt_mod.Checkpoint, store, numeric_path):
    table = None
    if "n" in model.experts and loaded.numeric_spec is not None:
        if not numeric_path:
            raise DataError("this checkpoint uses numeric features; "
                            "pass --numeric with the values file")
        table, _ = numeric.load_numeric(numeric_path, store.entities)
        if tuple(table.features.labels) != loaded.feature_labels:
            raise DataError("numeric feature vocabulary does not match "
                            "the checkpoint")
    return TripleFeaturizer(
        store,
        loaded.rules if "r" in model.experts else None,
        table,
        loaded.numeric_spec if table is not None else None,
    )


def _check_vocab(loaded: ckpt_mod.Checkpoint, store: kb.TripleStore) -> None:
    if (tuple(store.entities.labels) != loaded.entity_labels
            or tuple(store.relations.labels) != loaded.relation_labels):
        raise DataError("triple files do not match the checkpoint "
                        "vocabularies; use the files the model was trained on")


def cmd_ingest(args) -> int:
    store, report = _load_store(args)
    out = _out_dir(args)
    kb.write_vocab(store.entities, out / "entities.tsv")
    kb.write_vocab(store.relations, out / "relations.tsv")
    for line in report.lines():
        print(line)
    print(f"vocabulary dumps written to {out}")
    return 0


def cmd_mine_rules(args) -> int:
    cfg = _effective_config(args)
    _echo_config(cfg)
    store, _ = _load_store(args)
    mined = rules_mod.mine_rules(store, max_body_len=args.max_body_len,
                                 min_head_coverage=args.min_coverage,
                                 min_head_support=args.min_support,
                                 threads=_default_threads(cfg))
    out = _out_dir(args)
    rules_mod.save_rules(mined, store.relations, out / "rules.tsv")
    print(f"relations_with_rules\t{len(mined.relations)}")
    print(f"total_rules\t{mined.total_features()}")
    print(f"rules written to {out / 'rules.tsv'}")
    return 0


def cmd_fit_numeric(args) -> int:
    store, _ = _load_store(args)
    table, report = numeric.load_numeric(args.numeric, store.entities)
    for line in report.lines():
        print(line)
    spec = numeric.fit_numeric_spec(store, table, tau=args.tau,
                                    sigma_floor=args.sigma_floor)
    out = _out_dir(args)
    numeric.save_numeric_spec(spec, store.relations, table.features,
                              out / "numeric_spec.tsv")
    print(f"relations_with_numeric_features\t{len(spec.relations)}")
    print(f"numeric spec written to {out / 'numeric_spec.tsv'}")
    return 0


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    _echo_config(cfg)
    store, report = _load_store(args)
    for line in report.lines():
        print(line)

    ruleset = None
    if "r" in cfg.ablation:
        if not args.rules:
            raise DataError("ablation includes the relational expert; "
                            "pass --rules")
        ruleset = rules_mod.load_rules(args.rules, store.relations)
    table = spec = None
    if "n" in cfg.ablation:
        if not args.numeric or not args.numeric_spec:
            raise DataError("ablation includes the numerical expert; "
                            "pass --numeric and --numeric-spec")
        table, num_report = numeric.load_numeric(args.numeric, store.entities)
        for line in num_report.lines():
            print(line)
        spec = numeric.load_numeric_spec(args.numeric_spec, store.relations,
                                         table.features)

    result = training.train(store, cfg, rules=ruleset, numeric_table=table,
                            numeric_spec=spec)
    out = _out_dir(args)
    result.log.write(out / "train.log")
    ck = ckpt_mod.Checkpoint(
        model=result.model,
        entity_labels=store.entities.labels,
        relation_labels=store.relations.labels,
        feature_labels=(table.features.labels if table is not None else ()),
        config=cfg,
        rules=ruleset,
        numeric_spec=spec,
    )
    ckpt_mod.save_checkpoint(ck, out / "model.ckpt", f32=args.f32)
    if result.best_mrr is not None:
        print(f"best_validation_mrr\t{result.best_mrr!r}")
        print(f"best_epoch\t{result.best_epoch}")
    print(f"checkpoint written to {out / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _effective_config(args)
    store, _ = _load_store(args)
    loaded = ckpt_mod.load_checkpoint(args.checkpoint)
    _check_vocab(loaded, store)
    model = loaded.model
    featurizer = _featurizer_for(model, loaded, store, args.numeric)
    threads = _default_threads(cfg)

    queries = evaluation.queries_for_split(store, args.split)
    metrics = evaluation.evaluate(model, featurizer, store, queries=queries,
                                  threads=threads)
    lines = [f"split={args.split}"] + metrics.report_lines()
    print(metrics.table())
    if args.cardinality:
        buckets = evaluation.split_by_cardinality(store, queries)
        for name in ("one", "many"):
            if not buckets[name]:
                lines.append(f"{name}_queries=0")
                continue
            sub = evaluation.evaluate(model, featurizer, store,
                                      queries=buckets[name], threads=threads)
            lines += [f"{name}_{line}" for line in sub.report_lines()]
            print(f"[{name}]")
            print(sub.table())
    out = _out_dir(args)
    with open(out / "metrics.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"metrics written to {out / 'metrics.txt'}")
    return 0


def cmd_predict(args) -> int:
    store, _ = _load_store(args)
    loaded = ckpt_mod.load_checkpoint(args.checkpoint)
    _check_vocab(loaded, store)
    model = loaded.model
    featurizer = _featurizer_for(model, loaded, store, args.numeric)
    query = _parse_query(args.query, store)

    scores = evaluation.score_completions(model, featurizer, query)
    candidates = np.arange(model.n_entities)
    if args.filtered:
        known = evaluation._filter_ids(store, query)
        keep = np.ones(model.n_entities, dtype=bool)
        for e in known:
            keep[e] = False
        candidates = candidates[keep]
        scores = scores[keep]
    order = np.lexsort((candidates, -scores))
    for idx in order[:max(args.topk, 0)]:
        print(f"{store.entities.label(int(candidates[idx]))}\t{scores[idx]!r}")
    return 0


def cmd_prauc(args) -> int:
    store, _ = _load_store(args)
    loaded = ckpt_mod.load_checkpoint(args.checkpoint)
    _check_vocab(loaded, store)
    model = loaded.model
    featurizer = _featurizer_for(model, loaded, store, args.numeric)
    query = _parse_query(args.query, store)
    gold = evaluation.load_gold_labels(args.gold, store.entities)
    auc = evaluation.pr_auc(model, featurizer, query, gold)
    print(f"pr_auc={auc!r}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "mine-rules": cmd_mine_rules,
    "fit-numeric": cmd_fit_numeric,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "prauc": cmd_prauc,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    sys.exit(run())
