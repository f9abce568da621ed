from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import coord_pred, random_instance
from wstl_explain.data import Trajectory, literals_for
from wstl_explain.errors import ConfigError, InputError, NoDiscriminatingPredicates
from wstl_explain.simplify import (
    SimplifyConfig,
    cosine,
    filter_predicates,
    prune_step,
    robustness_distribution,
    run_pipeline,
    topk_truncate,
)
from wstl_explain.tlnet import TlnetParams, TrainConfig, optimize, to_formula
from wstl_explain.wstl import Literal, to_canonical_string


def traj(values, label=1, tid="t"):
    return Trajectory(np.array(values, dtype=float).reshape(-1, 1), label, tid)


A = coord_pred("a", 0)


class TestDistribution:
    def test_all_always(self):
        d = robustness_distribution([traj([0.1, 0.5]), traj([0.0, 0.0])], A)
        assert (d.always_sat, d.sometimes_sat, d.never_sat) == (1.0, 0.0, 0.0)

    def test_half_and_half(self):
        d = robustness_distribution([traj([0.1, 0.5]), traj([-0.1, -0.5])], A)
        assert d.as_array().tolist() == [0.5, 0.0, 0.5]

    def test_negated_literal(self):
        d = robustness_distribution([traj([0.1, 0.5]), traj([-0.1, 0.5])], Literal(A, True))
        assert d.as_array().tolist() == [0.0, 0.5, 0.5]

    def test_empty(self):
        with pytest.raises(InputError):
            robustness_distribution([], A)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        data = [traj(rng.choice([-0.5, 0.0, 0.5], size=int(rng.integers(2, 6)))) for _ in range(12)]
        d = robustness_distribution(data, A)
        counts = [0, 0, 0]
        for t in data:
            vals = [s[0] for s in t.states]
            if all(v >= 0 for v in vals):
                counts[0] += 1
            elif all(v < 0 for v in vals):
                counts[2] += 1
            else:
                counts[1] += 1
        assert d.as_array() == pytest.approx(np.array(counts) / len(data))
        assert d.as_array().sum() == pytest.approx(1.0, abs=1e-9)


def labelled(pos_vals, neg_vals):
    data = [traj(v, 1, f"p{k}") for k, v in enumerate(pos_vals)]
    return data + [traj(v, -1, f"n{k}") for k, v in enumerate(neg_vals)]


class TestFilter:
    def test_orthogonal_kept(self):
        data = labelled([[0.5, 0.5]] * 3, [[-0.5, -0.5]] * 3)
        kept, report = filter_predicates(data, [A])
        assert kept == [A]
        assert report[0].similarity == pytest.approx(0.0)

    def test_identical_removed(self):
        data = labelled([[0.5, 0.5]] * 3, [[0.5, 0.5]] * 3)
        kept, report = filter_predicates(data, [A])
        assert kept == []
        assert report[0].similarity == pytest.approx(1.0)
        assert not report[0].retained

    def test_constant_predicate_removed(self):
        rng = np.random.default_rng(0)
        data = []
        for k in range(40):
            label = 1 if k < 20 else -1
            sep = rng.uniform(0.1, 1, 6) * label
            data.append(Trajectory(np.stack([sep, np.full(6, 0.7)], axis=1), label, f"t{k}"))
        const = coord_pred("const", 1)
        kept, report = filter_predicates(data, [A, const])
        assert kept == [A]

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        data = [traj(rng.uniform(-1, 1, 5), 1 if k % 3 else -1, f"t{k}") for k in range(30)]
        preds = [A, coord_pred("b", 0, c=0.4), coord_pred("c", 0, c=-0.6)]
        kept, _ = filter_predicates(data, preds, SimplifyConfig(s_threshold=0.9))
        flipped = [Trajectory(t.states, -t.label, t.id) for t in data]
        kept2, _ = filter_predicates(flipped, preds, SimplifyConfig(s_threshold=0.9))
        assert kept == kept2

    def test_needs_both_classes(self):
        with pytest.raises(InputError):
            filter_predicates([traj([0.1, 0.2])], [A])

    def test_cosine(self):
        assert cosine(np.array([1.0, 0, 0]), np.array([0, 0, 1.0])) == 0.0


def manual_params(WF_scores, WG_scores, mask_F, mask_G, n=1):
    preds = [coord_pred(f"p{k}", k) for k in range(n)]
    return TlnetParams(
        np.array(WF_scores, float), np.array(WG_scores, float),
        np.array(mask_F, bool), np.array(mask_G, bool), tuple(literals_for(preds)),
    )


class TestPrune:
    def test_smallest_removed_and_renormalized(self):
        p = manual_params([[np.log(0.9), np.log(0.1)]], [[0.0, 0.0]], [[1, 1]], [[1, 0]])
        q = prune_step(p)
        assert q.mask_F.tolist() == [[True, False]]
        assert q.weights_F[0, 0] == pytest.approx(1.0)
        assert q.mask_G.tolist() == p.mask_G.tolist()

    def test_zeros_removed_beyond_nw(self):
        p = manual_params(
            [[0.0, 0.0, -40.0, -45.0], [0.0, 0.0, 0.0, 0.0]],
            [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
            [[1, 1, 1, 1], [0, 0, 0, 0]], [[1, 1, 0, 0], [0, 0, 0, 0]], n=2,
        )
        q = prune_step(p, SimplifyConfig(n_weights_per_prune=1))
        # the two vanishing F entries go, plus the first of the tied 0.5 weights
        assert q.mask_F[0].tolist() == [False, True, False, False]
        assert q.mask_G[0].tolist() == [True, True, False, False]

    def test_tie_lexicographic(self):
        p = manual_params(
            [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
            [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
            np.ones((2, 4)), np.ones((2, 4)), n=2,
        )
        q = prune_step(p)
        assert not q.mask_F[0, 0]
        assert q.mask_F.sum() == 7 and q.mask_G.sum() == 8

    def test_cannot_empty_a_matrix(self):
        p = manual_params([[0.0, 0.0]], [[0.0, 0.0]], [[1, 0]], [[1, 0]])
        assert prune_step(p) is p

    def test_monotone_support(self, rng):
        _, p, _ = random_instance(rng, 3, 4)
        prev = p
        for _ in range(30):
            q = prune_step(prev, SimplifyConfig(n_weights_per_prune=2))
            assert np.all(q.mask_F <= prev.mask_F) and np.all(q.mask_G <= prev.mask_G)
            for W in (q.weights_F, q.weights_G):
                assert W.sum() == pytest.approx(1.0, abs=1e-9)
            if q is prev:
                break
            prev = q


class TestTopk:
    def test_identity_when_k_large(self, rng):
        _, p, _ = random_instance(rng)
        q = topk_truncate(p, int(p.flat_mask().sum()))
        assert np.array_equal(q.flat_mask(), p.flat_mask())

    def test_k1_single_literal(self, rng):
        _, p, _ = random_instance(rng)
        q = topk_truncate(p, 1)
        assert sum(q.active_counts()) == 1
        phi = to_formula(q, 3)
        assert to_canonical_string(phi).count("ψ_") == 1

    def test_k3_matches_sort(self, rng):
        _, p, _ = random_instance(rng, 3)
        q = topk_truncate(p, 3)
        flat = np.concatenate([p.weights_F.ravel(), p.weights_G.ravel()])
        top = set(np.argsort(-flat, kind="stable")[:3])
        assert set(np.flatnonzero(q.flat_mask())) == top

    def test_bad_k(self, rng):
        _, p, _ = random_instance(rng)
        with pytest.raises(ConfigError):
            topk_truncate(p, 0)


def separable(n=40, H=6, seed=0):
    rng = np.random.default_rng(seed)
    data = []
    for k in range(n):
        label = 1 if k % 2 == 0 else -1
        goal = np.full(H + 1, -0.5)
        if label == 1:
            goal[rng.integers(H // 2, H + 1):] = 0.5
        noise = rng.uniform(-1, 1, H + 1)
        data.append(Trajectory(np.stack([goal, noise], axis=1), label, f"t{k:03d}"))
    return [coord_pred("goal", 0), coord_pred("noise", 1)], data


class TestPipeline:
    def test_goal_in_f_clause(self):
        preds, data = separable()
        ex = run_pipeline(data, preds, TrainConfig(epochs=20, batch_size=16), SimplifyConfig(n_prune_iters=10))
        assert "F[" in ex.text
        f_part = ex.text.split("F[", 1)[1].split("]", 1)[0]
        assert "ψ_goal" in f_part
        assert ex.history[0]["stage"] == "initial"
        assert len(ex.history) <= 11

    def test_no_pruning_equals_optimized_template(self):
        preds, data = separable()
        tcfg = TrainConfig(epochs=3, batch_size=16)
        ex = run_pipeline(data, preds, tcfg, SimplifyConfig(n_prune_iters=0))
        kept, _ = filter_predicates(ex.split.train, preds)
        rng = np.random.default_rng(tcfg.seed)
        p = TlnetParams.initial(kept, rng)
        p = optimize(p, ex.split.train, tcfg, rng)
        assert ex.text == to_canonical_string(to_formula(p, ex.horizon))
        assert len(ex.history) == 1

    def test_deterministic(self):
        preds, data = separable()
        cfgs = (TrainConfig(epochs=5, batch_size=16, seed=3), SimplifyConfig(n_prune_iters=5))
        assert run_pipeline(data, preds, *cfgs).text == run_pipeline(data, preds, *cfgs).text

    def test_everything_filtered(self):
        data = labelled([[0.5, 0.5]] * 5, [[0.5, 0.5]] * 5)
        with pytest.raises(NoDiscriminatingPredicates):
            run_pipeline(data, [A], TrainConfig(epochs=1))

    def test_manifest(self):
        preds, data = separable(20)
        ex = run_pipeline(data, preds, TrainConfig(epochs=2, batch_size=8), SimplifyConfig(n_prune_iters=2))
        m = ex.manifest()
        assert m["explanation"] == ex.text
        assert m["choices"]["after_prune"] == "continue from current scores"
        assert {e["predicate"] for e in m["filter"]} == {"goal", "noise"}
        assert set(m["split"]["train_ids"]).isdisjoint(m["split"]["test_ids"])
        assert "initial" in m["timing_seconds"]
