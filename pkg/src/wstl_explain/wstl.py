"""Weighted STL formulas and their normalized robustness.

Formulas are immutable trees of small dataclasses.  Every Boolean and
temporal node carries a weight vector that sums to one; zero weights are
allowed and simply drop out of the aggregation.

Robustness uses the weighted exponential-ratio aggregations

    conj(w, r) = sum_i w_i r_i exp(-r_i/sigma) / sum_i w_i exp(-r_i/sigma)
    disj(w, r) = sum_i w_i r_i exp(+r_i/sigma) / sum_i w_i exp(+r_i/sigma)

with globally/eventually using the same forms over the time window.  An
``exact`` mode replaces them by min/max over the positively weighted
entries and is used as a reference in tests.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import BoundsWarning, ConfigError, DomainError, InputError, StructuralError

WEIGHT_TOL = 1e-9


# ---------------------------------------------------------------------------
# Features and predicates
# ---------------------------------------------------------------------------

def _distance(states: np.ndarray, a0: int, a1: int, b0: int, b1: int) -> np.ndarray:
    return np.linalg.norm(states[..., a0:a1] - states[..., b0:b1], axis=-1)


def _proximity(states: np.ndarray, a0: int, a1: int, b0: int, b1: int) -> np.ndarray:
    return -_distance(states, a0, a1, b0, b1)


def _coordinate(states: np.ndarray, index: int) -> np.ndarray:
    return states[..., index]


FEATURES: dict[str, Callable[..., np.ndarray]] = {
    "distance": _distance,
    "proximity": _proximity,
    "coordinate": _coordinate,
}


def register_feature(kind: str, fn: Callable[..., np.ndarray]) -> None:
    """Add a state-to-scalar map.  ``fn(states, *args)`` must accept a
    ``(..., n)`` array and reduce the last axis."""
    FEATURES[kind] = fn


@dataclass(frozen=True)
class Feature:
    """A named feature map plus its integer arguments (slice bounds or indices)."""

    kind: str
    args: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in FEATURES:
            raise ConfigError(f"unknown feature map {self.kind!r}")
        object.__setattr__(self, "args", tuple(int(a) for a in self.args))

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return FEATURES[self.kind](np.asarray(states, dtype=float), *self.args)


@dataclass(frozen=True)
class PredicateSpec:
    """Atomic predicate ``f(s) >= c`` with the bounds used to normalize it."""

    id: str
    feature: Feature
    c: float
    sup_f: float
    inf_f: float

    def __post_init__(self):
        if not (self.inf_f < self.c < self.sup_f):
            raise ConfigError(
                f"predicate {self.id!r}: need inf_f < c < sup_f, got "
                f"{self.inf_f} < {self.c} < {self.sup_f}"
            )

    @property
    def feature_fn_id(self) -> str:
        return self.feature.kind

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Map raw feature values to normalized robustness in [-1, 1]."""
        values = np.asarray(values, dtype=float)
        diff = values - self.c
        # violation is scaled by the distance to the infimum and stays negative
        out = np.where(diff >= 0, diff / (self.sup_f - self.c), diff / (self.c - self.inf_f))
        if np.any(np.abs(out) > 1.0):
            warnings.warn(
                f"predicate {self.id!r}: feature value outside [{self.inf_f}, {self.sup_f}], clamping",
                BoundsWarning,
                stacklevel=3,
            )
            out = np.clip(out, -1.0, 1.0)
        return out

    def signal(self, states: np.ndarray) -> np.ndarray:
        return self.normalize(self.feature(states))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "feature": {"kind": self.feature.kind, "args": list(self.feature.args)},
            "c": self.c,
            "sup": self.sup_f,
            "inf": self.inf_f,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PredicateSpec":
        feat = obj["feature"]
        return cls(
            id=str(obj["id"]),
            feature=Feature(feat["kind"], tuple(feat.get("args", ()))),
            c=float(obj["c"]),
            sup_f=float(obj["sup"]),
            inf_f=float(obj["inf"]),
        )


def predicate_robustness(p: PredicateSpec, s: np.ndarray, negated: bool = False) -> float:
    """Normalized robustness of ``p`` (or its negation) at a single state."""
    value = float(p.signal(np.asarray(s, dtype=float)))
    return -value if negated else value


# ---------------------------------------------------------------------------
# Formula tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    a: int
    b: int

    def __post_init__(self):
        if self.a < 0 or self.b < self.a:
            raise StructuralError(f"invalid interval [{self.a}, {self.b}]")

    def __len__(self) -> int:
        return self.b - self.a + 1


class Formula:
    """Base class of all wSTL nodes."""

    kind: str = ""

    @property
    def extent(self) -> int:
        """Largest future offset the formula looks at."""
        return 0


def _check_weights(weights: Sequence[float], n: int, what: str) -> tuple[float, ...]:
    w = tuple(float(x) for x in weights)
    if len(w) != n:
        raise StructuralError(f"{what}: expected {n} weights, got {len(w)}")
    if any(not (0.0 <= x <= 1.0) for x in w):
        raise StructuralError(f"{what}: weights must lie in [0, 1]")
    if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
        raise StructuralError(f"{what}: weights sum to {math.fsum(w)!r}, expected 1")
    return w


@dataclass(frozen=True)
class Top(Formula):
    kind = "true"


@dataclass(frozen=True)
class Literal(Formula):
    predicate: PredicateSpec
    negated: bool = False

    kind = "literal"

    @property
    def signed_id(self) -> str:
        return ("¬ψ_" if self.negated else "ψ_") + self.predicate.id

    def flip(self) -> "Literal":
        return Literal(self.predicate, not self.negated)


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    kind = "not"

    @property
    def extent(self) -> int:
        return self.child.extent


@dataclass(frozen=True)
class _Boolean(Formula):
    children: tuple[Formula, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise StructuralError(f"{self.kind}: needs at least one child")
        object.__setattr__(
            self, "weights", _check_weights(self.weights, len(self.children), self.kind)
        )

    @property
    def extent(self) -> int:
        return max(c.extent for c in self.children)


class And(_Boolean):
    kind = "and"


class Or(_Boolean):
    kind = "or"


@dataclass(frozen=True)
class _Temporal(Formula):
    child: Formula
    interval: Interval
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        w = self.weights if len(self.weights) else [1.0 / len(self.interval)] * len(self.interval)
        object.__setattr__(self, "weights", _check_weights(w, len(self.interval), self.kind))

    @property
    def extent(self) -> int:
        return self.interval.b + self.child.extent


class Globally(_Temporal):
    kind = "globally"


class Eventually(_Temporal):
    kind = "eventually"


WstlFormula = Formula


def conj(children: Sequence[Formula], weights: Sequence[float] | None = None) -> And:
    if weights is None:
        weights = [1.0 / len(children)] * len(children)
    return And(tuple(children), tuple(weights))


def disj(children: Sequence[Formula], weights: Sequence[float] | None = None) -> Or:
    if weights is None:
        weights = [1.0 / len(children)] * len(children)
    return Or(tuple(children), tuple(weights))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AggregationConfig:
    sigma: float = 0.5
    mode: str = "smooth"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.mode not in ("smooth", "exact"):
            raise ConfigError(f"mode must be 'smooth' or 'exact', got {self.mode!r}")


def _aggregate(w, r, sign: float, cfg: AggregationConfig) -> float:
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    if w.shape != r.shape or w.ndim != 1 or w.size == 0:
        raise InputError("weights and robustness must be equal-length nonempty vectors")
    if np.any(w < 0):
        raise InputError("weights must be non-negative")
    live = w > 0
    if not live.any():
        raise DomainError("all aggregation weights are zero")
    # rescaling is free (the ratio is scale-invariant) and keeps subnormal weights exact
    w, r = w[live] / w[live].max(), r[live]
    if cfg.mode == "exact":
        return float(r.max() if sign > 0 else r.min())
    z = sign * r / cfg.sigma
    e = np.exp(z - z.max())
    we = w * e
    return float(np.dot(we, r) / we.sum())


def agg_conj(w, r, cfg: AggregationConfig = AggregationConfig()) -> float:
    return _aggregate(w, r, -1.0, cfg)


def agg_disj(w, r, cfg: AggregationConfig = AggregationConfig()) -> float:
    return _aggregate(w, r, +1.0, cfg)


def agg_glob(w, r, cfg: AggregationConfig = AggregationConfig()) -> float:
    return _aggregate(w, r, -1.0, cfg)


def agg_event(w, r, cfg: AggregationConfig = AggregationConfig()) -> float:
    return _aggregate(w, r, +1.0, cfg)


# ---------------------------------------------------------------------------
# Robustness
# ---------------------------------------------------------------------------

def _states_of(tau) -> np.ndarray:
    states = getattr(tau, "states", tau)
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] == 0:
        raise InputError("trajectory states must be a nonempty (H+1, n) array")
    return states


def robustness(
    phi: Formula,
    tau,
    t: int = 0,
    cfg: AggregationConfig = AggregationConfig(),
) -> float:
    """Robustness of ``phi`` on trajectory ``tau`` (a Trajectory or state array) at step ``t``."""
    states = _states_of(tau)
    horizon = states.shape[0] - 1
    cache: dict[str, np.ndarray] = {}

    def literal(lit: Literal, k: int) -> float:
        sig = cache.get(lit.predicate.id)
        if sig is None:
            sig = cache[lit.predicate.id] = lit.predicate.signal(states)
        return -sig[k] if lit.negated else sig[k]

    def rec(node: Formula, k: int) -> float:
        if isinstance(node, Top):
            return 1.0
        if isinstance(node, Literal):
            return float(literal(node, k))
        if isinstance(node, Not):
            return -rec(node.child, k)
        if isinstance(node, And):
            return agg_conj(node.weights, [rec(c, k) for c in node.children], cfg)
        if isinstance(node, Or):
            return agg_disj(node.weights, [rec(c, k) for c in node.children], cfg)
        if isinstance(node, _Temporal):
            if k + node.interval.b > horizon:
                raise InputError(
                    f"{node.kind} over [{node.interval.a}, {node.interval.b}] at t={k} "
                    f"exceeds trajectory horizon {horizon}"
                )
            vals = [rec(node.child, k + j) for j in range(node.interval.a, node.interval.b + 1)]
            agg = agg_glob if isinstance(node, Globally) else agg_event
            return agg(node.weights, vals, cfg)
        raise StructuralError(f"unknown formula node {node!r}")

    if not 0 <= t <= horizon:
        raise InputError(f"evaluation time t={t} outside trajectory of horizon {horizon}")
    return rec(phi, t)


# ---------------------------------------------------------------------------
# Weight distribution over CNF
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistributedCNF:
    """``AND_i OR_j w~_ij psi_ij`` with product weights.

    The rows do not sum to one individually, so this is kept apart from the
    normalized formula tree; :meth:`to_formula` recovers the nested form.
    """

    clauses: tuple[tuple[Literal, ...], ...]
    weights: tuple[tuple[float, ...], ...]

    def flat_weights(self) -> list[float]:
        return [w for row in self.weights for w in row]

    def to_formula(self) -> And:
        row_sums = [math.fsum(row) for row in self.weights]
        keep = [i for i, s in enumerate(row_sums) if s > 0]
        total = math.fsum(row_sums[i] for i in keep)
        children = []
        for i in keep:
            children.append(Or(self.clauses[i], tuple(w / row_sums[i] for w in self.weights[i])))
        return And(tuple(children), tuple(row_sums[i] / total for i in keep))


def _as_clause(node: Formula) -> tuple[tuple[Literal, ...], tuple[float, ...]]:
    if isinstance(node, Literal):
        return (node,), (1.0,)
    if isinstance(node, Not) and isinstance(node.child, Literal):
        return (node.child.flip(),), (1.0,)
    if isinstance(node, Or):
        lits = []
        for c in node.children:
            if isinstance(c, Literal):
                lits.append(c)
            elif isinstance(c, Not) and isinstance(c.child, Literal):
                lits.append(c.child.flip())
            else:
                raise StructuralError("disjunction children must be literals in CNF")
        return tuple(lits), node.weights
    raise StructuralError(f"expected a disjunction of literals, got {node.kind}")


def distribute_weights(phi: Formula) -> DistributedCNF:
    """Push the conjunction weights of a nested CNF into its literals."""
    if isinstance(phi, And):
        parts = [_as_clause(c) for c in phi.children]
        outer = phi.weights
    else:
        parts = [_as_clause(phi)]
        outer = (1.0,)
    return DistributedCNF(
        clauses=tuple(lits for lits, _ in parts),
        weights=tuple(tuple(wi * wij for wij in ws) for wi, (_, ws) in zip(outer, parts)),
    )


# ---------------------------------------------------------------------------
# Rendering and serialization
# ---------------------------------------------------------------------------

def _short(x: float, decimals: int) -> str:
    s = f"{round(x, decimals):.{decimals}f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def _weightless(node: Formula) -> str:
    return to_canonical_string(node, decimals=None)


def _order_key(node: Formula):
    if isinstance(node, Literal):
        return (0, node.predicate.id, node.negated)
    return (1, _weightless(node))


def to_canonical_string(phi: Formula, decimals: int | None = 2) -> str:
    """Deterministic text rendering in distributed-weight style.

    Boolean weights are multiplied down to the literals (``0.30 ψ_a ∨ 0.70 ¬ψ_b``),
    temporal operators inside a weighted conjunction get a short prefix
    (``0.5F[...]``), zero-weight children are dropped, literals are ordered by
    predicate id and compound clauses lexicographically.  ``decimals=None``
    renders the unweighted STL counterpart.
    """

    def fmt_lit(w: float) -> str:
        return "" if decimals is None else f"{w:.{decimals}f} "

    def fmt_temporal(w: float) -> str:
        return "" if decimals is None else _short(w, decimals)

    def rec(node: Formula, scale: float, prefixed: bool) -> str:
        if isinstance(node, Top):
            return "⊤"
        if isinstance(node, Literal):
            return (fmt_lit(scale) if prefixed else "") + node.signed_id
        if isinstance(node, Not):
            if isinstance(node.child, Literal):
                return (fmt_lit(scale) if prefixed else "") + "¬" + node.child.signed_id
            return "¬(" + rec(node.child, 1.0, False) + ")"
        if isinstance(node, _Temporal):
            op = "G" if isinstance(node, Globally) else "F"
            head = fmt_temporal(scale) if prefixed else ""
            return f"{head}{op}[{rec(node.child, 1.0, True)}]"
        if isinstance(node, _Boolean):
            sep = " ∧ " if isinstance(node, And) else " ∨ "
            items = [(c, w) for c, w in zip(node.children, node.weights) if w > 0]
            items.sort(key=lambda cw: _order_key(cw[0]))
            parts = []
            for child, w in items:
                text = rec(child, scale * w, True)
                if len(items) > 1 and isinstance(child, _Boolean) and sum(x > 0 for x in child.weights) > 1:
                    text = f"({text})"
                parts.append(text)
            return sep.join(parts)
        raise StructuralError(f"unknown formula node {node!r}")

    return rec(phi, 1.0, False)


def formula_to_json(phi: Formula) -> dict:
    if isinstance(phi, Top):
        return {"kind": "true"}
    if isinstance(phi, Literal):
        return {"kind": "literal", "predicate": phi.predicate.id, "negated": phi.negated}
    if isinstance(phi, Not):
        return {"kind": "not", "children": [formula_to_json(phi.child)]}
    if isinstance(phi, _Boolean):
        return {
            "kind": phi.kind,
            "weights": [repr(w) for w in phi.weights],
            "children": [formula_to_json(c) for c in phi.children],
        }
    if isinstance(phi, _Temporal):
        return {
            "kind": phi.kind,
            "interval": [phi.interval.a, phi.interval.b],
            "weights": [repr(w) for w in phi.weights],
            "children": [formula_to_json(phi.child)],
        }
    raise StructuralError(f"unknown formula node {phi!r}")


_KINDS = {"and": And, "or": Or, "globally": Globally, "eventually": Eventually}


def formula_from_json(obj: Mapping, predicates: Mapping[str, PredicateSpec]) -> Formula:
    kind = obj.get("kind")
    if kind == "true":
        return Top()
    if kind == "literal":
        try:
            pred = predicates[obj["predicate"]]
        except KeyError:
            raise StructuralError(f"unknown predicate {obj.get('predicate')!r}") from None
        return Literal(pred, bool(obj.get("negated", False)))
    children = [formula_from_json(c, predicates) for c in obj.get("children", [])]
    if kind == "not":
        return Not(children[0])
    if kind in ("and", "or"):
        return _KINDS[kind](tuple(children), tuple(float(w) for w in obj["weights"]))
    if kind in ("globally", "eventually"):
        a, b = obj["interval"]
        return _KINDS[kind](children[0], Interval(int(a), int(b)), tuple(float(w) for w in obj["weights"]))
    raise StructuralError(f"unknown formula kind {kind!r}")


def dumps(phi: Formula) -> str:
    return json.dumps(formula_to_json(phi), ensure_ascii=False, sort_keys=True)


def iter_literals(phi: Formula) -> Iterable[Literal]:
    if isinstance(phi, Literal):
        yield phi
    elif isinstance(phi, Not):
        yield from iter_literals(phi.child)
    elif isinstance(phi, _Boolean):
        for c in phi.children:
            yield from iter_literals(c)
    elif isinstance(phi, _Temporal):
        yield from iter_literals(phi.child)


Robustness = Union[float, np.ndarray]
