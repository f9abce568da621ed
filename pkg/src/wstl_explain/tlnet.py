"""The two-clause wSTL template and its training loop.

The template is

    0.5 F[ AND_i OR_j wF_ij psi_j ]  AND  0.5 G[ AND_i OR_j wG_ij psi_j ]

over ``I = [0, H]`` with uniform temporal weights.  Each weight matrix has
shape ``(N_AP, 2 N_AP)``; columns index the positive literals followed by
their negations.  A matrix is stored as unconstrained scores plus an
active-entry mask, and its effective weights are the masked softmax of the
scores over the whole matrix, so every matrix always sums to one.

Inside a clause, row ``i`` is a disjunction aggregated with its raw row of
weights and the conjunction over rows uses the row sums.  Because the
aggregations are ratios, this equals the nested form with normalized inner
weights.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Trajectory, literals_for, precompute_robustness
from .errors import ConfigError, InputError, NonFiniteLoss
from .wstl import (
    AggregationConfig,
    And,
    Eventually,
    Formula,
    Globally,
    Interval,
    Literal,
    Or,
    PredicateSpec,
    robustness,
)

log = logging.getLogger(__name__)

CLAUSE_WEIGHTS = (0.5, 0.5)


@dataclass(frozen=True, eq=False)
class TlnetParams:
    scores_F: np.ndarray
    scores_G: np.ndarray
    mask_F: np.ndarray
    mask_G: np.ndarray
    predicate_order: tuple[Literal, ...]

    def __post_init__(self):
        n = self.n_ap
        for name in ("scores_F", "scores_G", "mask_F", "mask_G"):
            arr = np.array(getattr(self, name), dtype=bool if name.startswith("mask") else float)
            if arr.shape != (n, 2 * n):
                raise ConfigError(f"{name} must have shape ({n}, {2 * n}), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "predicate_order", tuple(self.predicate_order))

    @property
    def n_ap(self) -> int:
        return len(self.predicate_order) // 2

    @classmethod
    def initial(cls, predicates: Sequence[PredicateSpec], rng: np.random.Generator | int = 0) -> "TlnetParams":
        """Fully active template with scores drawn uniformly from [-0.1, 0.1]."""
        rng = np.random.default_rng(rng)
        n = len(predicates)
        if n == 0:
            raise ConfigError("template needs at least one predicate")
        shape = (n, 2 * n)
        return cls(
            rng.uniform(-0.1, 0.1, shape),
            rng.uniform(-0.1, 0.1, shape),
            np.ones(shape, bool),
            np.ones(shape, bool),
            tuple(literals_for(predicates)),
        )

    @property
    def weights_F(self) -> np.ndarray:
        return _effective(self.scores_F, self.mask_F)

    @property
    def weights_G(self) -> np.ndarray:
        return _effective(self.scores_G, self.mask_G)

    def flat_scores(self) -> np.ndarray:
        return np.concatenate([self.scores_F.ravel(), self.scores_G.ravel()])

    def flat_mask(self) -> np.ndarray:
        return np.concatenate([self.mask_F.ravel(), self.mask_G.ravel()])

    def with_scores(self, flat: np.ndarray) -> "TlnetParams":
        k = self.scores_F.size
        shape = self.scores_F.shape
        return replace(self, scores_F=flat[:k].reshape(shape), scores_G=flat[k:].reshape(shape))

    def with_masks(self, mask_F: np.ndarray, mask_G: np.ndarray) -> "TlnetParams":
        return replace(self, mask_F=mask_F, mask_G=mask_G)

    @property
    def predicates(self) -> list[PredicateSpec]:
        return [lit.predicate for lit in self.predicate_order[: self.n_ap]]

    def active_counts(self) -> tuple[int, int]:
        return int(self.mask_F.sum()), int(self.mask_G.sum())

    # -- checkpoint --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "predicates": [p.to_json() for p in self.predicates],
            "predicate_order": [
                {"predicate": lit.predicate.id, "negated": lit.negated} for lit in self.predicate_order
            ],
            "scores_F": [[repr(float(x)) for x in row] for row in self.scores_F],
            "scores_G": [[repr(float(x)) for x in row] for row in self.scores_G],
            "mask_F": self.mask_F.astype(int).tolist(),
            "mask_G": self.mask_G.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TlnetParams":
        preds = {p["id"]: PredicateSpec.from_json(p) for p in obj["predicates"]}
        order = tuple(Literal(preds[o["predicate"]], bool(o["negated"])) for o in obj["predicate_order"])
        return cls(
            np.array([[float(x) for x in row] for row in obj["scores_F"]]),
            np.array([[float(x) for x in row] for row in obj["scores_G"]]),
            np.array(obj["mask_F"], dtype=bool),
            np.array(obj["mask_G"], dtype=bool),
            order,
        )


def _effective(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.zeros_like(scores)
    return ad.simplex(scores, mask)


@dataclass(frozen=True)
class TrainConfig:
    sigma: float = 0.5
    zeta: float = 1.0
    lambda_rt: float = 0.01
    lambda_rd: float = 0.1
    epochs: int = 30
    step_size: float = 2.0
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma > 0 and self.zeta > 0 and self.step_size > 0):
            raise ConfigError("sigma, zeta and step_size must be positive")
        if self.lambda_rt < 0 or self.lambda_rd < 0:
            raise ConfigError("regularizer weights must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    @property
    def aggregation(self) -> AggregationConfig:
        return AggregationConfig(self.sigma)

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TemplateBatch:
    """Precomputed literal robustness for a set of trajectories.

    ``rob`` is ``(B, 2 N_AP, T)`` with padded steps zeroed; ``time_w`` holds the
    uniform temporal weights ``1/|I|`` per trajectory, zero on padding.
    """

    rob: np.ndarray
    time_w: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return self.rob.shape[0]

    def subset(self, idx) -> "TemplateBatch":
        return TemplateBatch(
            self.rob[idx], self.time_w[idx], self.labels[idx],
            tuple(np.asarray(self.ids, dtype=object)[idx]) if self.ids else (),
        )


def make_batch(data: Sequence[Trajectory], literals: Sequence[Literal]) -> TemplateBatch:
    if not data:
        raise InputError("empty trajectory set")
    rob = precompute_robustness(data, literals)
    valid = ~np.isnan(rob[:, 0, :])
    time_w = valid / valid.sum(axis=1, keepdims=True)
    return TemplateBatch(
        np.nan_to_num(rob, nan=0.0),
        time_w,
        np.array([t.label for t in data], dtype=float),
        tuple(t.id for t in data),
    )


# ---------------------------------------------------------------------------
# Forward pass (works on tape variables or plain arrays)
# ---------------------------------------------------------------------------

def _clause(W, mask: np.ndarray, rob: np.ndarray, time_w: np.ndarray, temporal_sign: float, sigma: float):
    rows = np.flatnonzero(mask.any(axis=1))
    n_rows, n_lit = len(rows), mask.shape[1]
    Wr = ad.getitem(W, rows)
    # OR over literals for every active row: (B, rows, T)
    d = ad.ratio_aggregate(
        ad.reshape(Wr, (1, n_rows, n_lit, 1)), rob[:, None, :, :], +1.0, sigma, axis=2
    )
    # AND over rows weighted by row sums: (B, T)
    row_w = ad.reshape(ad.sum_(Wr, axis=1), (1, n_rows, 1))
    c = ad.ratio_aggregate(row_w, d, -1.0, sigma, axis=1)
    return ad.ratio_aggregate(time_w, c, temporal_sign, sigma, axis=1)


def _template(WF, WG, mask_F, mask_G, batch: TemplateBatch, sigma: float):
    parts = []
    if mask_F.any():
        parts.append(_clause(WF, mask_F, batch.rob, batch.time_w, +1.0, sigma))
    if mask_G.any():
        parts.append(_clause(WG, mask_G, batch.rob, batch.time_w, -1.0, sigma))
    if not parts:
        raise ConfigError("template has no active weights")
    if len(parts) == 1:
        return parts[0]
    return ad.ratio_aggregate(np.array(CLAUSE_WEIGHTS), ad.stack(parts, axis=1), -1.0, sigma, axis=1)


def _split(x, params: TlnetParams):
    k = params.scores_F.size
    shape = params.scores_F.shape
    WF = ad.simplex(ad.reshape(ad.getitem(x, slice(0, k)), shape), params.mask_F) if params.mask_F.any() else None
    WG = ad.simplex(ad.reshape(ad.getitem(x, slice(k, 2 * k)), shape), params.mask_G) if params.mask_G.any() else None
    return WF, WG


def template_robustness(params: TlnetParams, batch: TemplateBatch, sigma: float = 0.5) -> np.ndarray:
    """Template robustness at t=0 for every trajectory in ``batch``."""
    return np.asarray(_template(params.weights_F, params.weights_G, params.mask_F, params.mask_G, batch, sigma))


def template_forward(params: TlnetParams, tau, cfg: AggregationConfig = AggregationConfig()) -> float:
    """Robustness of the template on one trajectory."""
    if not isinstance(tau, Trajectory):
        states = np.asarray(tau, dtype=float)
        if states.ndim != 2 or states.shape[0] == 0:
            raise InputError("empty trajectory")
        tau = Trajectory(states, 1, "") if states.shape[0] > 1 else None
        if tau is None:
            raise InputError("trajectory needs at least two states")
    if cfg.mode == "exact":
        return robustness(to_formula(params, tau.horizon), tau, 0, cfg)
    batch = make_batch([tau], params.predicate_order)
    return float(template_robustness(params, batch, cfg.sigma)[0])


# ---------------------------------------------------------------------------
# Regularizers and loss
# ---------------------------------------------------------------------------

def _rt(WF, WG, n: int):
    cf = ad.sum_(WF, axis=0)
    cg = ad.sum_(WG, axis=0)
    mf = ad.maximum(ad.getitem(cf, slice(0, n)), ad.getitem(cf, slice(n, 2 * n)))
    mg = ad.maximum(ad.getitem(cg, slice(0, n)), ad.getitem(cg, slice(n, 2 * n)))
    return ad.sum_(mf * mg)


def _rd(W):
    # sum_{i<j} sum_k W_ik W_jk = ((sum of column sums squared) - sum W^2) / 2
    col = ad.sum_(W, axis=0)
    return (ad.sum_(col * col) - ad.sum_(W * W)) * 0.5


def regularizer_T(params: TlnetParams) -> float:
    """Overlap between the literal mass of the F and G clauses."""
    return float(_rt(params.weights_F, params.weights_G, params.n_ap))


def regularizer_D(weights: np.ndarray) -> float:
    """Overlap between the rows (disjunctions) of one clause matrix."""
    return float(_rd(np.asarray(weights, dtype=float)))


def _loss(x, params: TlnetParams, batch: TemplateBatch, cfg: TrainConfig):
    WF, WG = _split(x, params)
    zeros = np.zeros(params.scores_F.shape)
    r = _template(WF, WG, params.mask_F, params.mask_G, batch, cfg.sigma)
    cls = ad.mean(ad.exp(r * (-cfg.zeta * batch.labels)))
    WF0 = zeros if WF is None else WF
    WG0 = zeros if WG is None else WG
    total = cls
    if cfg.lambda_rt:
        total = total + cfg.lambda_rt * _rt(WF0, WG0, params.n_ap)
    if cfg.lambda_rd:
        total = total + cfg.lambda_rd * (_rd(WF0) + _rd(WG0))
    return total


def _check_labels(batch: TemplateBatch) -> None:
    if len(batch) == 0:
        raise InputError("empty batch")
    if not np.all(np.isin(batch.labels, (1.0, -1.0))):
        raise InputError("labels must be 1 or -1")


def total_loss(params: TlnetParams, batch: TemplateBatch | Sequence[Trajectory], cfg: TrainConfig = TrainConfig()) -> float:
    """Mean classification loss ``exp(-zeta l r)`` plus the weighted regularizers."""
    if not isinstance(batch, TemplateBatch):
        batch = make_batch(batch, params.predicate_order)
    _check_labels(batch)
    return float(_loss(params.flat_scores(), params, batch, cfg))


def loss_and_grad(params: TlnetParams, batch: TemplateBatch, cfg: TrainConfig) -> tuple[float, np.ndarray]:
    """Total loss and its gradient with respect to the flat score vector."""
    _check_labels(batch)
    value, tape = ad.forward_record(lambda x: _loss(x, params, batch, cfg), params.flat_scores())
    return value, ad.gradient(tape)


def optimize(
    params: TlnetParams,
    data: TemplateBatch | Sequence[Trajectory],
    cfg: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
) -> TlnetParams:
    """Minibatch gradient descent on the scores.

    Masked entries get zero gradient and never move.  The training loss is
    measured after every epoch and the best parameters seen (including the
    starting point) are returned, so the result never has a higher loss
    than the input.
    """
    batch = data if isinstance(data, TemplateBatch) else make_batch(data, params.predicate_order)
    _check_labels(batch)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    best_x = params.flat_scores()
    best = float(_loss(best_x, params, batch, cfg))
    if not np.isfinite(best):
        raise NonFiniteLoss(0, -1, best)
    x = best_x.copy()
    live = params.flat_mask()
    n = len(batch)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            sub = batch.subset(order[start:start + cfg.batch_size])
            value, g = loss_and_grad(params.with_scores(x), sub, cfg)
            if not (np.isfinite(value) and np.all(np.isfinite(g))):
                raise NonFiniteLoss(epoch, b, value)
            with np.errstate(over="ignore", invalid="ignore"):
                x = x - cfg.step_size * np.where(live, g, 0.0)
            if not np.all(np.isfinite(x)):
                raise NonFiniteLoss(epoch, b, value)
        current = float(_loss(x, params, batch, cfg))
        if not np.isfinite(current):
            raise NonFiniteLoss(epoch, -1, current)
        log.debug("epoch %d loss %.6f", epoch, current)
        if current <= best:
            best, best_x = current, x.copy()
    return params.with_scores(best_x)


# ---------------------------------------------------------------------------
# Formula emission
# ---------------------------------------------------------------------------

def _cnf(W: np.ndarray, literals: Sequence[Literal], tol: float) -> And | None:
    rows = []
    for row in W:
        keep = np.flatnonzero(row > tol)
        if keep.size:
            rows.append((keep, row[keep]))
    if not rows:
        return None
    sums = np.array([w.sum() for _, w in rows])
    children = [Or(tuple(literals[j] for j in keep), tuple(w / w.sum())) for keep, w in rows]
    return And(tuple(children), tuple(sums / sums.sum()))


def to_formula(params: TlnetParams, horizon: int, tol: float = 1e-12) -> Formula:
    """The nested wSTL formula represented by ``params`` over ``[0, horizon]``.

    Zero-weight literals and empty rows are dropped; a clause whose matrix has
    no weight left is omitted and the other clause is returned on its own.
    """
    interval = Interval(0, horizon)
    parts = []
    f = _cnf(params.weights_F, params.predicate_order, tol)
    if f is not None:
        parts.append(Eventually(f, interval))
    g = _cnf(params.weights_G, params.predicate_order, tol)
    if g is not None:
        parts.append(Globally(g, interval))
    if not parts:
        raise ConfigError("template has no active weights")
    if len(parts) == 1:
        return parts[0]
    return And(tuple(parts), CLAUSE_WEIGHTS)


def save_checkpoint(path, params: TlnetParams, cfg: TrainConfig) -> None:
    obj = {"params": params.to_json(), "config": cfg.to_json(), "seed": cfg.seed}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, ensure_ascii=False)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TlnetParams, TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return TlnetParams.from_json(obj["params"]), TrainConfig(**obj["config"])
