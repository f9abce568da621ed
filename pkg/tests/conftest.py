from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wstl_explain.data import Trajectory, literals_for  # noqa: E402
from wstl_explain.tlnet import TlnetParams  # noqa: E402
from wstl_explain.wstl import Feature, PredicateSpec  # noqa: E402


def coord_pred(pid: str, index: int, c: float = 0.0, sup: float = 1.0, inf: float = -1.0) -> PredicateSpec:
    return PredicateSpec(pid, Feature("coordinate", (index,)), c, sup, inf)


def random_instance(rng: np.random.Generator, n_ap: int | None = None, horizon: int | None = None, n_traj: int = 6):
    """Random coordinate predicates, masked params and labelled trajectories."""
    n_ap = n_ap or int(rng.integers(2, 5))
    horizon = horizon or int(rng.integers(3, 11))
    preds = [coord_pred(f"p{k}", k, float(rng.uniform(-0.3, 0.3))) for k in range(n_ap)]
    shape = (n_ap, 2 * n_ap)
    masks = []
    for _ in range(2):
        m = rng.random(shape) < 0.7
        m[rng.integers(n_ap), rng.integers(2 * n_ap)] = True
        masks.append(m)
    params = TlnetParams(rng.normal(0, 1, shape), rng.normal(0, 1, shape), masks[0], masks[1], tuple(literals_for(preds)))
    data = [
        Trajectory(rng.uniform(-1, 1, (horizon + 1, n_ap)), int(rng.choice([-1, 1])), f"t{k}")
        for k in range(n_traj)
    ]
    return preds, params, data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting -----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, ok: bool, title: str, detail: str) -> None:
    """Remember one pass/fail line; they are printed together at the end of the run."""
    ACCEPTANCE[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title} | {detail}"
    print(ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
