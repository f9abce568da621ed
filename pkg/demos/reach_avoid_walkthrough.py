"""Reach-avoid walk-through: generate data, filter predicates, learn and prune.

Runs a single seed on a reduced dataset so it finishes in well under a minute:

    python3 demos/reach_avoid_walkthrough.py
"""

from __future__ import annotations

import argparse

from wstl_explain import (
    ReachAvoidConfig,
    SimplifyConfig,
    TrainConfig,
    accuracy,
    conciseness,
    generate_reach_avoid,
    reach_avoid_schema,
    run_pipeline,
    stratified_split,
    strictness,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=150, help="trajectories per class")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=15)
    args = ap.parse_args()

    data, manifest = generate_reach_avoid(ReachAvoidConfig(n_positive=args.n, n_negative=args.n, seed=args.seed))
    print(f"generated {manifest['counts']} trajectories, H = {data[0].horizon}")
    print(f"negatives that still touch the goal: {manifest['negative_goal_fraction']:.1%}")

    split = stratified_split(data, 0.8, 0)
    preds = reach_avoid_schema(irrelevant=True).predicates
    ex = run_pipeline(split, preds, TrainConfig(seed=args.seed, epochs=args.epochs), SimplifyConfig(n_prune_iters=20))

    print("\nfilter report (similarity of the positive/negative satisfaction patterns):")
    for entry in ex.filter_report:
        print(f"  {entry.predicate:<7} S = {entry.similarity:.3f}  {'kept' if entry.retained else 'dropped'}")

    print("\npruning history:")
    for h in ex.history:
        print(f"  {h['stage']:<10} active F/G = {h['active']}  train acc = {h['train_accuracy']:.3f}")

    P = 2 * ex.n_predicates
    print("\nexplanation:", ex.text)
    print(f"test accuracy {accuracy(ex.params, split.test):.3f}, "
          f"conciseness {conciseness(ex.formula):.3f}, strictness {strictness(ex.formula, P):.3f}")


if __name__ == "__main__":
    main()
