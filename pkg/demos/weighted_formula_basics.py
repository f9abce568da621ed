"""Hand-built weighted formulas: smooth robustness, weight distribution, metrics.

    python3 demos/weighted_formula_basics.py
"""

from __future__ import annotations

import numpy as np

from wstl_explain import (
    AggregationConfig,
    And,
    Eventually,
    Feature,
    Globally,
    Interval,
    Literal,
    Or,
    PredicateSpec,
    Trajectory,
    clause_views,
    conciseness,
    distribute_weights,
    robustness,
    strictness,
    to_canonical_string,
)

# A 1-D signal that climbs from -0.5 to 0.8 and a second channel that stays low.
t = np.linspace(0.0, 1.0, 11)
states = np.stack([-0.5 + 1.3 * t, 0.2 - 0.6 * t], axis=1)
tau = Trajectory(states, 1, "ramp")

high = Literal(PredicateSpec("high", Feature("coordinate", (0,)), 0.5, 1.0, -1.0))
low = Literal(PredicateSpec("low", Feature("coordinate", (1,)), 0.3, 1.0, -1.0), negated=True)

window = Interval(0, 10)
phi = And((Eventually(high, window), Globally(low, window)), (0.5, 0.5))
print("formula:", to_canonical_string(phi))

for sigma in (1.0, 0.1, 0.01):
    r = robustness(phi, tau, cfg=AggregationConfig(sigma))
    print(f"  smooth robustness, sigma={sigma:<5}: {r:+.4f}")
print(f"  exact min/max robustness:      {robustness(phi, tau, cfg=AggregationConfig(mode='exact')):+.4f}")

# Nested weights flatten into products whose total is one.
cnf = And((Or((high, low), (0.8, 0.2)), low), (0.6, 0.4))
flat = distribute_weights(cnf)
print("\nnested:", to_canonical_string(cnf))
print("flattened weights:", [round(w, 3) for w in flat.flat_weights()], "sum =", sum(flat.flat_weights()))

views = clause_views(phi)
print("\nF slot:", views["F"], " G slot:", views["G"])
print(f"conciseness {conciseness(phi):.3f}, strictness with P=4: {strictness(phi, 4):.3f}")
