"""Predicate filtering, iterative weight pruning and the explanation pipeline."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import DatasetSplit, Trajectory, stratified_split
from .errors import ConfigError, InputError, NoDiscriminatingPredicates
from .tlnet import TemplateBatch, TlnetParams, TrainConfig, make_batch, optimize, template_robustness, to_formula, total_loss
from .wstl import Formula, Literal, PredicateSpec, formula_to_json, to_canonical_string

log = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12


@dataclass(frozen=True)
class RobustnessDistribution:
    always_sat: float
    sometimes_sat: float
    never_sat: float

    def as_array(self) -> np.ndarray:
        return np.array([self.always_sat, self.sometimes_sat, self.never_sat])


@dataclass(frozen=True)
class SimplifyConfig:
    s_threshold: float = 0.99
    n_prune_iters: int = 20
    n_weights_per_prune: int = 1

    def __post_init__(self):
        if not -1.0 <= self.s_threshold <= 1.0:
            raise ConfigError("s_threshold must lie in [-1, 1]")
        if self.n_prune_iters < 0 or self.n_weights_per_prune < 1:
            raise ConfigError("n_prune_iters must be >= 0 and n_weights_per_prune >= 1")


def _distribution(signals: Sequence[np.ndarray]) -> RobustnessDistribution:
    n = len(signals)
    always = sum(bool(np.all(s >= 0)) for s in signals)
    never = sum(bool(np.all(s < 0)) for s in signals)
    return RobustnessDistribution(always / n, (n - always - never) / n, never / n)


def robustness_distribution(data: Sequence[Trajectory], p: Literal | PredicateSpec) -> RobustnessDistribution:
    """Fractions of trajectories on which ``p`` holds always, sometimes, never."""
    if not data:
        raise InputError("robustness distribution of an empty dataset")
    lit = p if isinstance(p, Literal) else Literal(p)
    signals = []
    for traj in data:
        sig = lit.predicate.signal(traj.states)
        signals.append(-sig if lit.negated else sig)
    return _distribution(signals)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@dataclass
class FilterEntry:
    predicate: str
    positive: list[float]
    negative: list[float]
    similarity: float
    retained: bool


def filter_predicates(
    dataset: Sequence[Trajectory],
    predicates: Sequence[PredicateSpec],
    cfg: SimplifyConfig = SimplifyConfig(),
) -> tuple[list[PredicateSpec], list[FilterEntry]]:
    """Drop predicates whose satisfaction pattern looks the same in both classes.

    Returns the retained predicates in their original order and one report
    entry per input predicate.
    """
    pos = [t for t in dataset if t.label == 1]
    neg = [t for t in dataset if t.label == -1]
    if not pos or not neg:
        raise InputError("filtering needs at least one positive and one negative trajectory")
    kept, report = [], []
    for p in predicates:
        dp = robustness_distribution(pos, p).as_array()
        dn = robustness_distribution(neg, p).as_array()
        s = cosine(dp, dn)
        keep = s < cfg.s_threshold
        report.append(FilterEntry(p.id, dp.tolist(), dn.tolist(), s, keep))
        if keep:
            kept.append(p)
    return kept, report


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------

def prune_step(params: TlnetParams, cfg: SimplifyConfig = SimplifyConfig()) -> TlnetParams:
    """Mask zeroed weights, then the ``N_w`` smallest survivors of ``wF || wG``.

    Ties go to the lexicographically smallest (matrix, row, column).  If the
    step would leave a matrix with no active entry, ``params`` is returned
    unchanged.  Renormalization is implicit in the masked softmax.
    """
    masks = [params.mask_F.copy(), params.mask_G.copy()]
    weights = [params.weights_F, params.weights_G]
    for m, w in zip(masks, weights):
        m &= ~(w < ZERO_WEIGHT)
    candidates = sorted(
        (float(w[i, j]), k, i, j)
        for k, (m, w) in enumerate(zip(masks, weights))
        for i, j in zip(*np.nonzero(m))
    )
    for _, k, i, j in candidates[: cfg.n_weights_per_prune]:
        masks[k][i, j] = False
    if not masks[0].any() or not masks[1].any():
        return params
    return params.with_masks(masks[0], masks[1])


def topk_truncate(params: TlnetParams, k: int) -> TlnetParams:
    """Keep only the ``k`` largest effective weights across both matrices."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    weights = [params.weights_F, params.weights_G]
    masks = [params.mask_F, params.mask_G]
    ranked = sorted(
        ((-float(w[i, j]), m, i, j) for m, (mask, w) in enumerate(zip(masks, weights)) for i, j in zip(*np.nonzero(mask))),
    )
    keep = [np.zeros_like(params.mask_F), np.zeros_like(params.mask_G)]
    for _, m, i, j in ranked[:k]:
        keep[m][i, j] = True
    return params.with_masks(keep[0], keep[1])


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class Explanation:
    formula: Formula
    params: TlnetParams
    history: list[dict]
    filter_report: list[FilterEntry]
    split: DatasetSplit
    horizon: int
    train_cfg: TrainConfig
    simp_cfg: SimplifyConfig
    timings: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return to_canonical_string(self.formula)

    @property
    def complete(self) -> bool:
        return bool(self.params.mask_F.any() and self.params.mask_G.any())

    @property
    def n_predicates(self) -> int:
        return self.params.n_ap

    def manifest(self) -> dict:
        return {
            "config": {"train": self.train_cfg.to_json(), "simplify": asdict(self.simp_cfg)},
            "split": {
                "fraction": self.split.split_fraction,
                "seed": self.split.seed,
                "train_ids": [t.id for t in self.split.train],
                "test_ids": [t.id for t in self.split.test],
            },
            "choices": {"after_prune": "continue from current scores", "zero_weight": ZERO_WEIGHT},
            "filter": [asdict(e) for e in self.filter_report],
            "history": self.history,
            "horizon": self.horizon,
            "complete": self.complete,
            "params": self.params.to_json(),
            "formula": formula_to_json(self.formula),
            "explanation": self.text,
            "timing_seconds": self.timings,
        }


def _train_accuracy(params: TlnetParams, batch: TemplateBatch, sigma: float) -> float:
    r = template_robustness(params, batch, sigma)
    return float(np.mean(np.where(r >= 0, 1.0, -1.0) == batch.labels))


def run_pipeline(
    dataset: Sequence[Trajectory] | DatasetSplit,
    predicates: Sequence[PredicateSpec],
    train_cfg: TrainConfig = TrainConfig(),
    simp_cfg: SimplifyConfig = SimplifyConfig(),
    split_fraction: float = 0.8,
    split_seed: int = 0,
) -> Explanation:
    """Filter, train, prune and re-train, then emit the explanation formula.

    All randomness (initial scores, minibatch order) comes from
    ``train_cfg.seed``; the train/test split from ``split_seed``.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    split = dataset if isinstance(dataset, DatasetSplit) else stratified_split(dataset, split_fraction, split_seed)
    retained, report = filter_predicates(split.train, predicates, simp_cfg)
    timings["filter"] = time.perf_counter() - t0
    if not retained:
        raise NoDiscriminatingPredicates("every predicate was removed by the similarity filter")
    log.info("filter kept %s", [p.id for p in retained])

    rng = np.random.default_rng(train_cfg.seed)
    params = TlnetParams.initial(retained, rng)
    batch = make_batch(split.train, params.predicate_order)
    horizon = max(t.horizon for t in split.train)
    history: list[dict] = []

    def record(stage: str, p: TlnetParams, started: float) -> None:
        history.append({
            "stage": stage,
            "loss": total_loss(p, batch, train_cfg),
            "train_accuracy": _train_accuracy(p, batch, train_cfg.sigma),
            "active": list(p.active_counts()),
        })
        timings[stage] = time.perf_counter() - started

    t0 = time.perf_counter()
    params = optimize(params, batch, train_cfg, rng)
    record("initial", params, t0)

    for it in range(1, simp_cfg.n_prune_iters + 1):
        t0 = time.perf_counter()
        pruned = prune_step(params, simp_cfg)
        if pruned is params:
            break
        params = optimize(pruned, batch, train_cfg, rng)
        record(f"prune-{it}", params, t0)
        if min(params.active_counts()) <= 1:
            break

    formula = to_formula(params, horizon)
    return Explanation(formula, params, history, report, split, horizon, train_cfg, simp_cfg, timings)
