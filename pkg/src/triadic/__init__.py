"""Differentiable ternary relational operators with algebraic regularizers.

The package trains scoring models of the form s(h, r, t) built from a
three-argument product indexed by the relation, penalizes deviations from
distributivity and nested associativity, and ships exact oracle operators
for which those laws hold identically.
"""

from .autodiff import Node, Tape, eval_loss, eval_loss_and_grads, grad_check, inject_tanh_adjoint_bug
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DatasetConfig, RunConfig, build_dataset, load_config, parse_config
from .datasets import (RuleSet, TripleDataset, gen_parity, gen_rules, gen_toy_kg,
                       load_tsv, save_tsv)
from .errors import (ConfigError, DataError, NumericError, ParseError, ShapeError,
                     TriadicError)
from .evaluation import (MetricsReport, RankResult, axiom_report, calibrate_threshold,
                         compute_metrics, lambda_sweep_trend, rank_split, rank_tail,
                         rule_satisfaction, score_value)
from .operators import (BASELINE_KINDS, KINDS, TernaryOpSpec, apply_ternary,
                        init_params, materialize_cp, monoid_add, param_shapes)
from .regularizers import (ResidualSampleConfig, assoc_residual, dist_residual,
                           regularizer_loss)
from .training import (AdamState, TrainConfig, TrainResult, adam_step, composite_loss,
                       margin_loss, nll_loss, sample_corruptions, score, train)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BASELINE_KINDS", "ConfigError", "DataError", "DatasetConfig",
    "KINDS", "MetricsReport", "Node", "NumericError", "ParseError", "RankResult",
    "ResidualSampleConfig", "RuleSet", "RunConfig", "ShapeError", "Tape",
    "TernaryOpSpec", "TrainConfig", "TrainResult", "TriadicError", "TripleDataset",
    "adam_step", "apply_ternary", "assoc_residual", "axiom_report", "build_dataset",
    "calibrate_threshold", "composite_loss", "compute_metrics", "dist_residual",
    "eval_loss", "eval_loss_and_grads", "gen_parity", "gen_rules", "gen_toy_kg",
    "grad_check", "init_params", "inject_tanh_adjoint_bug", "lambda_sweep_trend",
    "load_checkpoint", "load_config", "load_tsv", "margin_loss", "materialize_cp",
    "monoid_add", "nll_loss", "param_shapes", "parse_config", "rank_split",
    "rank_tail", "regularizer_loss", "rule_satisfaction", "sample_corruptions",
    "save_checkpoint", "save_tsv", "score", "score_value", "train",
]
