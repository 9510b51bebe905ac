"""Knowledge-base completion with latent, rule-based, and numeric experts.

The public surface mirrors the pipeline stages: load triples into a
`TripleStore`, mine a `RuleSet`, fit a `RelationNumericSpec`, initialize a
`PoeModel`, train it, evaluate with filtered ranking, and persist it all as
a single checkpoint file.
"""

from .errors import DataError, ParseError
from .kb import LoadReport, Triple, TripleStore, Vocab, load_triples, write_vocab
from .rules import (FORWARD, INVERSE, MinedRule, PathFormula, RuleSet,
                    load_rules, mine_rules, relational_vector, save_rules)
from .numeric import (NumericTable, RelationNumericSpec, build_numeric_table,
                      fit_numeric_spec, fit_rbf, load_numeric,
                      load_numeric_spec, numeric_diff_vector, save_numeric_spec,
                      select_features)
from .features import FeatureBatch, TripleFeaturizer, TripleFeatures
from .model import (ABLATIONS, CandidateSet, Gradients, PoeModel, init_model,
                    loss_and_gradients, softmax_prob)
from .training import (AdamState, TrainConfig, TrainLog, TrainResult,
                       adam_step, load_config, sample_negatives, train)
from .evaluation import (CompletionQuery, Metrics, evaluate, pr_auc,
                         queries_for_split, rank_query, score_completions,
                         split_by_cardinality)
from .checkpoint import (Checkpoint, CheckpointCorruptionError,
                         CheckpointError, CheckpointSchemaError,
                         CheckpointVersionError, load_checkpoint,
                         save_checkpoint)

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "AdamState", "CandidateSet", "Checkpoint",
    "CheckpointCorruptionError", "CheckpointError", "CheckpointSchemaError",
    "CheckpointVersionError", "CompletionQuery", "DataError", "FORWARD",
    "FeatureBatch", "Gradients", "INVERSE", "LoadReport", "Metrics",
    "MinedRule", "NumericTable", "ParseError", "PathFormula", "PoeModel",
    "RelationNumericSpec", "RuleSet", "TrainConfig", "TrainLog", "TrainResult",
    "Triple", "TripleFeaturizer", "TripleFeatures", "TripleStore", "Vocab",
    "adam_step", "build_numeric_table", "evaluate", "fit_numeric_spec",
    "fit_rbf", "init_model", "load_checkpoint", "load_config", "load_numeric",
    "load_numeric_spec", "load_rules", "load_triples", "loss_and_gradients",
    "mine_rules", "numeric_diff_vector", "pr_auc", "queries_for_split",
    "rank_query", "relational_vector", "sample_negatives", "save_checkpoint",
    "save_numeric_spec", "save_rules", "score_completions", "select_features",
    "softmax_prob", "split_by_cardinality", "train", "write_vocab",
]
