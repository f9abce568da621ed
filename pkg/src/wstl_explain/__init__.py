"""Explain labelled trajectory datasets with weighted temporal-logic formulas.

The public surface is re-exported here; see the submodules for details.
"""

from __future__ import annotations

from .data import (
    DatasetSplit,
    ReachAvoidConfig,
    Schema,
    Trajectory,
    generate_reach_avoid,
    literals_for,
    load_dataset,
    load_schema,
    reach_avoid_schema,
    save_dataset,
    save_schema,
    stratified_split,
)
from .errors import (
    BoundsWarning,
    ConfigError,
    DomainError,
    InputError,
    NoDiscriminatingPredicates,
    NonFiniteLoss,
    ParseError,
    StructuralError,
)
from .metrics import (
    ClauseView,
    MetricsReport,
    accuracy,
    clause_views,
    conciseness,
    consistency,
    evaluate_runs,
    stl_counterpart,
    strictness,
)
from .simplify import Explanation, SimplifyConfig, filter_predicates, prune_step, run_pipeline, topk_truncate
from .tlnet import TlnetParams, TrainConfig, optimize, template_forward, to_formula, total_loss
from .wstl import (
    AggregationConfig,
    And,
    Eventually,
    Feature,
    Formula,
    Globally,
    Interval,
    Literal,
    Not,
    Or,
    PredicateSpec,
    Top,
    WstlFormula,
    distribute_weights,
    robustness,
    to_canonical_string,
)

__version__ = "0.1.0"
