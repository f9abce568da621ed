"""Accuracy and the structural explainability scores.

An explanation is viewed as one slot per expected temporal clause (here an
``F`` slot and a ``G`` slot).  Inside a slot the formula is a CNF; its
weight-stripped counterpart is a set of sets of signed literal ids.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Trajectory
from .errors import StructuralError
from .tlnet import TlnetParams, make_batch, template_robustness, to_formula
from .wstl import (
    AggregationConfig,
    And,
    Eventually,
    Formula,
    Globally,
    Literal,
    Not,
    Or,
    robustness,
    to_canonical_string,
)

SLOTS = ("F", "G")


# ---------------------------------------------------------------------------
# Accuracy
# ---------------------------------------------------------------------------

def accuracy(phi: Formula | TlnetParams, test: Sequence[Trajectory], cfg: AggregationConfig = AggregationConfig()) -> float:
    """Fraction of trajectories whose robustness sign matches the label (r = 0 counts as positive)."""
    if not test:
        raise ValueError("accuracy of an empty test set")
    if isinstance(phi, TlnetParams) and cfg.mode == "smooth":
        r = template_robustness(phi, make_batch(test, phi.predicate_order), cfg.sigma)
    else:
        if isinstance(phi, TlnetParams):
            phi = to_formula(phi, max(t.horizon for t in test))
        r = np.array([robustness(phi, t, 0, cfg) for t in test])
    labels = np.array([t.label for t in test])
    return float(np.mean(np.where(r >= 0, 1, -1) == labels))


# ---------------------------------------------------------------------------
# Clause views
# ---------------------------------------------------------------------------

def _signed(node: Formula) -> str:
    if isinstance(node, Literal):
        return node.signed_id
    if isinstance(node, Not) and isinstance(node.child, Literal):
        return node.child.flip().signed_id
    raise StructuralError(f"expected a literal inside a clause, got {node.kind}")


def _disjunct(node: Formula) -> tuple[str, ...]:
    if isinstance(node, Or):
        return tuple(_signed(c) for c, w in zip(node.children, node.weights) if w > 0)
    return (_signed(node),)


def _cnf_clauses(node: Formula) -> tuple[tuple[str, ...], ...]:
    if isinstance(node, And):
        clauses = [_disjunct(c) for c, w in zip(node.children, node.weights) if w > 0]
    else:
        clauses = [_disjunct(node)]
    return tuple(c for c in clauses if c)


@dataclass(frozen=True)
class ClauseView:
    """One expected temporal clause; ``present=False`` stands for the empty clause."""

    kind: str
    clauses: tuple[tuple[str, ...], ...] = ()
    present: bool = False

    def __post_init__(self):
        if self.present and not any(self.clauses):
            raise StructuralError("a present clause needs at least one literal")

    @property
    def n_literals(self) -> int:
        return sum(len(c) for c in self.clauses)

    @property
    def n_conjunctions(self) -> int:
        return max(len(self.clauses) - 1, 0)

    @property
    def n_disjunctions(self) -> int:
        return sum(len(c) - 1 for c in self.clauses)

    @property
    def counterpart(self) -> frozenset[frozenset[str]] | None:
        if not self.present:
            return None
        return frozenset(frozenset(c) for c in self.clauses)

    def __str__(self) -> str:
        if not self.present:
            return "∅"
        parts = []
        for c in sorted(sorted(c) for c in self.counterpart):
            text = " ∨ ".join(c)
            parts.append(f"({text})" if len(c) > 1 and len(self.clauses) > 1 else text)
        return f"{self.kind}[{' ∧ '.join(parts)}]"


def clause_views(phi: Formula) -> dict[str, ClauseView]:
    """Split an explanation into its F and G slots."""
    if isinstance(phi, And) and all(isinstance(c, (Eventually, Globally)) for c in phi.children):
        tops = [c for c, w in zip(phi.children, phi.weights) if w > 0]
    elif isinstance(phi, (Eventually, Globally)):
        tops = [phi]
    else:
        raise StructuralError("explanation must be a temporal clause or a conjunction of them")
    views = {k: ClauseView(k) for k in SLOTS}
    for node in tops:
        kind = "F" if isinstance(node, Eventually) else "G"
        if views[kind].present:
            raise StructuralError(f"explanation has more than one {kind} clause")
        clauses = _cnf_clauses(node.child)
        views[kind] = ClauseView(kind, clauses, bool(clauses))
    return views


def stl_counterpart(phi: Formula) -> dict[str, frozenset[frozenset[str]] | None]:
    """Weight-stripped clause structure per slot (``None`` for an absent clause)."""
    return {k: v.counterpart for k, v in clause_views(phi).items()}


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def _views(phi) -> list[ClauseView]:
    if isinstance(phi, dict):
        return [phi[k] for k in SLOTS]
    if isinstance(phi, Formula):
        return list(clause_views(phi).values())
    return list(phi)


def conciseness(phi, expected_n: int = 2) -> float:
    views = _views(phi)
    return sum(1.0 / v.n_literals for v in views if v.present and v.n_literals) / expected_n


def clause_strictness(view: ClauseView, P: int) -> float:
    if not view.present:
        return 0.0
    denom = P - view.n_conjunctions + view.n_disjunctions
    if denom <= 0:
        raise StructuralError(f"strictness denominator {denom} <= 0 (P={P})")
    return 1.0 / denom


def strictness(phi, P: int, expected_n: int = 2) -> float:
    return sum(clause_strictness(v, P) for v in _views(phi)) / expected_n


def consistency(runs: Sequence, expected_n: int = 2) -> float:
    """Agreement of weight-stripped clause structures across ``K`` runs."""
    K = len(runs)
    if K == 0:
        raise ValueError("consistency needs at least one explanation")
    per_run = [_views(r) for r in runs]
    total = 0.0
    for n in range(len(per_run[0])):
        seen = [views[n].counterpart for views in per_run]
        counts: dict = {}
        for s in seen:
            if s is not None:
                counts[s] = counts.get(s, 0) + 1
        if counts:
            total += max(counts.values()) / (K * len(counts))
    return total / expected_n


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if not xs:
        return math.nan, math.nan
    return statistics.fmean(xs), (statistics.pstdev(xs) if len(xs) > 1 else 0.0)


@dataclass
class MetricsReport:
    accuracy: list[float]
    conciseness: list[float]
    strictness: list[float]
    consistency: float
    P: int
    explanations: list[str] = field(default_factory=list)
    structures: list[str] = field(default_factory=list)
    label: str = "wstl-explain"

    @property
    def modal_structure(self) -> str:
        """Most frequent weight-stripped explanation (ties broken alphabetically)."""
        counts: dict[str, int] = {}
        for e in self.structures:
            counts[e] = counts.get(e, 0) + 1
        return max(sorted(counts), key=lambda k: counts[k]) if counts else ""

    @property
    def modal_frequency(self) -> float:
        return self.structures.count(self.modal_structure) / len(self.structures) if self.structures else 0.0

    def summary(self) -> dict:
        out = {}
        for name in ("accuracy", "conciseness", "strictness"):
            m, s = _mean_std(getattr(self, name))
            out[name] = {"mean": m, "std": s}
        out["consistency"] = self.consistency
        return out

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "runs": len(self.accuracy),
            "P": self.P,
            "per_run": {
                "accuracy": self.accuracy,
                "conciseness": self.conciseness,
                "strictness": self.strictness,
                "explanation": self.explanations,
                "structure": self.structures,
            },
            "summary": self.summary(),
            "modal_structure": self.modal_structure,
            "modal_frequency": self.modal_frequency,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def table(self) -> str:
        s = self.summary()
        cols = ["", "Accuracy", "Conciseness", "Consistency", "Strictness"]
        row = [
            self.label,
            f"{s['accuracy']['mean']:.2f} ± {s['accuracy']['std']:.2f}",
            f"{s['conciseness']['mean']:.2f} ± {s['conciseness']['std']:.2f}",
            f"{s['consistency']:.2f}",
            f"{s['strictness']['mean']:.2f} ± {s['strictness']['std']:.2f}",
        ]
        widths = [max(len(a), len(b)) for a, b in zip(cols, row)]
        line = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        return "\n".join([line(cols), "-+-".join("-" * w for w in widths), line(row)]) + "\n"


def evaluate_runs(
    formulas: Sequence[Formula],
    test_sets: Sequence[Sequence[Trajectory]],
    P: int,
    cfg: AggregationConfig = AggregationConfig(),
    params: Sequence[TlnetParams] | None = None,
) -> MetricsReport:
    """Score K explanations: accuracy per run on its test set, structure metrics, consistency."""
    accs = []
    for k, (phi, test) in enumerate(zip(formulas, test_sets)):
        accs.append(accuracy(params[k] if params is not None else phi, test, cfg))
    return MetricsReport(
        accuracy=accs,
        conciseness=[conciseness(phi) for phi in formulas],
        strictness=[strictness(phi, P) for phi in formulas],
        consistency=consistency(formulas),
        P=P,
        explanations=[to_canonical_string(phi) for phi in formulas],
        structures=[to_canonical_string(phi, None) for phi in formulas],
    )
