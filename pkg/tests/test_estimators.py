import numpy as np
import pytest

from helpers import random_ensemble, random_linear
from shaplab.errors import BudgetError
from shaplab.estimators import (
    Budget,
    _largest_remainder,
    appro_shapley,
    detect_convergence,
    ime,
    kernel_shap,
    kernel_shap_exact,
    multilinear,
    sample_semivalue,
    sgd_shapley,
)
from shaplab.games import brute_force_shapley
from shaplab.models import LinearModel
from shaplab.removal import baseline_game


def additive_game(c):
    c = np.asarray(c, dtype=float)
    return baseline_game(LinearModel(c, 0.0), np.ones(len(c)), np.zeros(len(c)))


def tree_game(d=8, seed=0, depth=3, n_trees=4):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(d, depth, n_trees, rng)
    return baseline_game(ens, rng.standard_normal(d), rng.standard_normal(d))


def efficiency_ok(trace, tol_scale=1e-9):
    delta = trace.v_full - trace.v_empty
    scale = max(1.0, abs(delta))
    return all(abs(s.phi.sum() - delta) <= tol_scale * scale for s in trace.snapshots)


class TestBudget:
    def test_defaults(self):
        b = Budget(100)
        assert b.checkpoints == (100,)

    def test_sorted_dedup(self):
        b = Budget(100, (50, 10, 50))
        assert b.checkpoints == (10, 50)

    def test_checkpoint_above_max_rejected(self):
        with pytest.raises(ValueError):
            Budget(10, (20,))


class TestSampleSemivalue:
    def test_budget_two_gives_one_contribution(self):
        g = tree_game()
        trace = sample_semivalue(g, 3, Budget(2), seed=0)
        assert len(trace.snapshots) == 1
        snap = trace.snapshots[0]
        assert snap.contrib_count[3] == 1
        assert trace.evals_used == 2 == g.eval_count

    def test_zero_budget_empty_trace(self):
        g = tree_game()
        trace = sample_semivalue(g, 0, Budget(0), seed=0)
        assert trace.snapshots == []
        assert trace.evals_used == 0

    def test_additive_game_zero_variance(self):
        c = np.array([2.0, -1.0, 0.5])
        trace = sample_semivalue(additive_game(c), 1, Budget(40), seed=1)
        snap = trace.snapshots[-1]
        assert snap.phi[1] == pytest.approx(-1.0, abs=1e-12)
        assert snap.contrib_var[1] == pytest.approx(0.0, abs=1e-20)

    def test_mean_close_to_truth(self):
        g = tree_game(d=6, seed=3)
        truth = brute_force_shapley(tree_game(d=6, seed=3)).phi
        ests = [
            sample_semivalue(g, 2, Budget(400), seed=(5, t)).snapshots[-1].phi[2]
            for t in range(40)
        ]
        se = np.std(ests, ddof=1) / np.sqrt(len(ests))
        assert abs(np.mean(ests) - truth[2]) < 4 * max(se, 1e-6)


class TestApproShapley:
    def test_budget_error(self):
        g = tree_game(d=8)
        with pytest.raises(BudgetError):
            appro_shapley(g, Budget(8), seed=0)

    def test_efficiency_every_snapshot(self):
        g = tree_game(d=7, seed=5)
        budget = Budget(2000, (100, 500, 1000, 2000))
        for anti in (False, True):
            trace = appro_shapley(g, budget, seed=2, antithetic=anti)
            assert efficiency_ok(trace)

    def test_additive_exact_after_one_walk(self):
        c = np.array([1.0, -2.0, 3.0, 0.5])
        trace = appro_shapley(additive_game(c), Budget(5), seed=0)
        assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-12)

    def test_snapshot_on_walk_boundary(self):
        g = tree_game(d=6)
        trace = appro_shapley(g, Budget(100, (10, 50)), seed=1)
        for snap in trace.snapshots:
            assert snap.evals_used % 7 == 0

    def test_budget_accounting(self):
        g = tree_game(d=6, seed=9)
        before = g.eval_count
        trace = appro_shapley(g, Budget(300, (100, 300)), seed=3, antithetic=True)
        assert trace.evals_used == g.eval_count - before


class TestIme:
    def test_budget_error(self):
        g = tree_game(d=8)
        with pytest.raises(BudgetError):
            ime(g, Budget(15), seed=0)

    def test_uniform_allocation_when_pilot_sigmas_equal(self):
        # symmetric game: all players have identical contribution spread
        g = tree_game(d=4, seed=11)
        trace = ime(g, Budget(2 + 2 * 4 * 25), seed=7, adaptive=False)
        counts = trace.snapshots[-1].contrib_count
        assert counts.max() - counts.min() <= 1

    def test_adaptive_dummy_gets_pilot_only(self):
        # feature 1 matches between explicand and baseline, so it is a dummy
        # with zero pilot variance and should receive nothing past the pilot
        rng = np.random.default_rng(24)
        ens = random_ensemble(5, 4, 6, rng)
        x_e = rng.standard_normal(5)
        x_b = x_e.copy()
        x_b[[0, 2, 3, 4]] = rng.standard_normal(4)
        g = baseline_game(ens, x_e, x_b)
        trace = ime(g, Budget(2 + 2 * 400), seed=3, adaptive=True, pilot=4)
        counts = trace.snapshots[-1].contrib_count
        assert counts[1] == 4  # pilot only
        assert counts[1] == counts.min()
        assert (np.delete(counts, 1) > 4).all()

    def test_antithetic_pairs_double_contributions(self):
        g = tree_game(d=5, seed=15)
        trace = ime(g, Budget(2 + 5 * 4 * 10), seed=1, antithetic=True)
        assert trace.snapshots[-1].contrib_count.sum() % 2 == 0

    def test_mean_close_to_truth(self):
        g = tree_game(d=6, seed=17)
        truth = brute_force_shapley(tree_game(d=6, seed=17)).phi
        finals = np.array(
            [ime(g, Budget(2000), seed=(29, t)).snapshots[-1].phi for t in range(30)]
        )
        se = finals.std(axis=0, ddof=1) / np.sqrt(len(finals))
        assert (np.abs(finals.mean(axis=0) - truth) < 4 * np.maximum(se, 1e-9)).all()

    def test_budget_accounting_all_flags(self):
        for anti in (False, True):
            for adaptive in (False, True):
                g = tree_game(d=5, seed=20)
                before = g.eval_count
                trace = ime(
                    g, Budget(600, (200, 600)), seed=4, antithetic=anti, adaptive=adaptive
                )
                assert trace.evals_used == g.eval_count - before


class TestKernelShap:
    def test_budget_error(self):
        g = tree_game(d=8)
        with pytest.raises(BudgetError):
            kernel_shap(g, Budget(10), seed=0)

    def test_additive_recovered_exactly(self):
        c = np.array([1.5, -0.5, 2.0, 0.0, 1.0])
        trace = kernel_shap(additive_game(c), Budget(200), seed=0)
        assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-9)

    def test_efficiency_every_snapshot(self):
        g = tree_game(d=9, seed=23)
        budget = Budget(3000, (50, 500, 3000))
        for paired in (False, True):
            trace = kernel_shap(g, budget, seed=5, paired=paired)
            assert efficiency_ok(trace)

    def test_exhaustive_equals_brute_force(self):
        for d, seed in ((4, 1), (7, 2), (10, 3)):
            g1 = tree_game(d=d, seed=seed)
            g2 = tree_game(d=d, seed=seed)
            exact = kernel_shap_exact(g1)
            bf = brute_force_shapley(g2)
            assert exact.phi == pytest.approx(bf.phi, abs=1e-6)

    def test_budget_accounting(self):
        for paired in (False, True):
            g = tree_game(d=6, seed=25)
            before = g.eval_count
            trace = kernel_shap(g, Budget(500, (100, 500)), seed=6, paired=paired)
            assert trace.evals_used == g.eval_count - before

    def test_paired_rows_are_complements(self):
        # paired efficiency must hold even at the smallest solveable snapshot
        g = tree_game(d=6, seed=27)
        trace = kernel_shap(g, Budget(60, (12, 60)), seed=7, paired=True)
        assert efficiency_ok(trace)


class TestSgdShapley:
    def test_additive_converges(self):
        c = np.array([1.0, -1.0, 0.5])
        trace = sgd_shapley(additive_game(c), Budget(60_000), seed=0)
        assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-2)

    def test_efficiency_every_snapshot(self):
        g = tree_game(d=7, seed=29)
        trace = sgd_shapley(g, Budget(2000, (10, 100, 2000)), seed=1)
        assert efficiency_ok(trace)

    def test_budget_accounting(self):
        g = tree_game(d=5, seed=31)
        before = g.eval_count
        trace = sgd_shapley(g, Budget(400, (100, 400)), seed=2)
        assert trace.evals_used == g.eval_count - before

    def test_step_schedule_configurable(self):
        g = tree_game(d=4, seed=33)
        a = sgd_shapley(g, Budget(200), seed=3, step_schedule=(1.0, 10.0))
        b = sgd_shapley(g, Budget(200), seed=3, step_schedule=(0.1, 100.0))
        assert not np.array_equal(a.snapshots[-1].phi, b.snapshots[-1].phi)


class TestMultilinear:
    def test_additive_exact(self):
        c = np.array([2.0, -1.0, 0.5, 1.5])
        for mode in ("trapezoid", "random_q"):
            trace = multilinear(additive_game(c), Budget(800), seed=0, mode=mode, q_nodes=5)
            assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-10)

    def test_d2_trapezoid_matches_hand_integral(self):
        # for d=2 the node averages are linear in q, so the trapezoid rule
        # integrates them exactly and the estimate converges to brute force
        vals = {0: 0.0, 1: 1.0, 2: 5.0, 3: 4.0}
        g = baseline_game(
            LinearModel(np.array([0.0, 0.0]), 0.0), np.zeros(2), np.zeros(2)
        )

        from shaplab.games import SetFunctionGame

        g = SetFunctionGame(2, lambda s: vals[s.mask])
        trace = multilinear(g, Budget(30_000), seed=1, mode="trapezoid", q_nodes=3)
        truth = brute_force_shapley(SetFunctionGame(2, lambda s: vals[s.mask])).phi
        assert trace.snapshots[-1].phi == pytest.approx(truth, abs=0.05)

    def test_random_q_unbiased(self):
        g = tree_game(d=6, seed=35)
        truth = brute_force_shapley(tree_game(d=6, seed=35)).phi
        finals = np.array(
            [
                multilinear(g, Budget(3000), seed=(77, t), mode="random_q").snapshots[-1].phi
                for t in range(30)
            ]
        )
        se = finals.std(axis=0, ddof=1) / np.sqrt(len(finals))
        assert (np.abs(finals.mean(axis=0) - truth) < 4 * np.maximum(se, 1e-9)).all()

    def test_feature_wise_trapezoid_additive_exact(self):
        c = np.array([2.0, -1.0, 0.5, 1.5])
        trace = multilinear(
            additive_game(c), Budget(2000), seed=0, mode="trapezoid",
            feature_wise=True, q_nodes=5,
        )
        assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-10)

    def test_feature_wise_trapezoid_tracks_truth(self):
        g = tree_game(d=6, seed=57)
        truth = brute_force_shapley(tree_game(d=6, seed=57)).phi
        finals = np.array(
            [
                multilinear(
                    g, Budget(20_000), seed=(9, t), mode="trapezoid",
                    feature_wise=True, q_nodes=10, antithetic=True,
                ).snapshots[-1].phi
                for t in range(10)
            ]
        )
        assert np.abs(finals.mean(axis=0) - truth).max() < 0.05

    def test_adaptive_requires_feature_wise(self):
        g = tree_game(d=4)
        with pytest.raises(ValueError):
            multilinear(g, Budget(100), seed=0, adaptive=True)

    def test_trapezoid_needs_two_nodes(self):
        g = tree_game(d=4)
        with pytest.raises(ValueError):
            multilinear(g, Budget(100), seed=0, q_nodes=1)

    def test_trapezoid_missing_until_nodes_covered(self):
        g = tree_game(d=5, seed=37)
        # joint trapezoid with 10 nodes needs 10 subsets (60 evals) before
        # its first estimate
        budget = Budget(200, (30, 200))
        trace = multilinear(g, budget, seed=1, q_nodes=10)
        assert trace.snapshot_at(30) is None
        assert trace.snapshot_at(200) is not None

    def test_feature_wise_flags_accounting(self):
        for mode in ("trapezoid", "random_q"):
            for anti in (False, True):
                for adaptive in (False, True):
                    g = tree_game(d=4, seed=39)
                    before = g.eval_count
                    trace = multilinear(
                        g,
                        Budget(800, (400, 800)),
                        seed=5,
                        mode=mode,
                        feature_wise=True,
                        antithetic=anti,
                        adaptive=adaptive,
                        q_nodes=4,
                    )
                    assert trace.evals_used == g.eval_count - before

    def test_joint_budget_accounting(self):
        for mode in ("trapezoid", "random_q"):
            for anti in (False, True):
                g = tree_game(d=5, seed=41)
                before = g.eval_count
                trace = multilinear(
                    g, Budget(700, (300, 700)), seed=6, mode=mode,
                    antithetic=anti, q_nodes=6,
                )
                assert trace.evals_used == g.eval_count - before


class TestDetectConvergence:
    def test_additive_stops_at_first_snapshot(self):
        c = np.array([1.0, 2.0, 3.0])
        trace = ime(additive_game(c), Budget(100, (20, 50, 100)), seed=0)
        assert detect_convergence(trace, threshold=1e-6) == 0

    def test_zero_threshold_never_stops(self):
        g = tree_game(d=4, seed=43)
        trace = ime(g, Budget(400, (100, 400)), seed=1)
        assert detect_convergence(trace, threshold=0.0) is None

    def test_halving_threshold_never_earlier(self):
        g = tree_game(d=5, seed=45)
        trace = ime(g, Budget(4000, tuple(range(200, 4001, 200))), seed=2)
        sentinel = len(trace.snapshots)  # "never" sorts after every index

        def stop_at(thr):
            idx = detect_convergence(trace, thr)
            return sentinel if idx is None else idx

        thresholds = (0.5, 0.25, 0.125, 0.0625, 0.03125)
        stops = [stop_at(t) for t in thresholds]
        assert stops == sorted(stops)

    def test_requires_contribution_stats(self):
        g = tree_game(d=4, seed=47)
        trace = kernel_shap(g, Budget(100), seed=3)
        with pytest.raises(ValueError):
            detect_convergence(trace, 0.1)

    def test_stops_once_stderr_below_threshold(self):
        g = tree_game(d=4, seed=49)
        trace = ime(g, Budget(4000, (200, 1000, 4000)), seed=5)
        idx = detect_convergence(trace, 0.05)
        if idx is not None:
            snap = trace.snapshots[idx]
            stderr = np.sqrt(snap.contrib_var / snap.contrib_count)
            assert stderr.max() < 0.05


class TestWlsSystem:
    def test_rank_deficient_warns_and_solves(self, caplog):
        import logging

        from shaplab.estimators import WlsSystem

        member = np.tile(np.array([[True, False, False]]), (5, 1))
        system = WlsSystem(member, np.full(5, 0.7), np.ones(5), 0.0, 1.0)
        with caplog.at_level(logging.WARNING, logger="shaplab.estimators"):
            phi = system.solve()
        assert "rank deficient" in caplog.text
        assert len(phi) == 3 and np.isfinite(phi).all()
        assert phi.sum() == pytest.approx(1.0)

    def test_endpoint_rows_rejected(self):
        from shaplab.estimators import WlsSystem

        member = np.array([[True, True, True]])
        with pytest.raises(ValueError):
            WlsSystem(member, np.ones(1), np.ones(1), 0.0, 1.0)
        with pytest.raises(ValueError):
            WlsSystem(~member, np.ones(1), np.ones(1), 0.0, 1.0)


class TestLargestRemainder:
    def test_exact_total(self):
        alloc = _largest_remainder(np.array([0.2, 0.3, 0.5]), 7)
        assert alloc.sum() == 7

    def test_proportionality(self):
        alloc = _largest_remainder(np.array([1.0, 1.0, 2.0]), 8)
        assert list(alloc) == [2, 2, 4]

    def test_zero_weights_uniform(self):
        alloc = _largest_remainder(np.zeros(4), 8)
        assert list(alloc) == [2, 2, 2, 2]


class TestTraceMetadata:
    def test_attribution_roundtrip(self):
        g = tree_game(d=5, seed=49)
        trace = ime(g, Budget(300), seed=1)
        att = trace.attribution()
        assert att.v_empty == pytest.approx(g.value(0))
        assert att.v_full == pytest.approx(g.value(g.grand_mask))
        assert att.evals_used == trace.snapshots[-1].evals_used

    def test_semivalue_trace_has_no_endpoints(self):
        g = tree_game(d=4, seed=51)
        trace = sample_semivalue(g, 0, Budget(20), seed=0)
        with pytest.raises(ValueError):
            trace.attribution()

    def test_snapshots_monotone_evals(self):
        g = tree_game(d=6, seed=53)
        trace = appro_shapley(g, Budget(500, (100, 200, 500)), seed=4)
        evs = [s.evals_used for s in trace.snapshots]
        assert evs == sorted(evs)


def test_normalization_improves_truncated_ime():
    from shaplab.games import additive_efficient_normalization

    g = tree_game(d=8, seed=55)
    truth = brute_force_shapley(tree_game(d=8, seed=55)).phi
    for t in range(10):
        trace = ime(g, Budget(120), seed=(3, t))
        att = trace.attribution()
        normed = additive_efficient_normalization(att)
        before = float(np.linalg.norm(att.phi - truth))
        after = float(np.linalg.norm(normed.phi - truth))
        assert after <= before * (1 + 1e-12) + 1e-15


def test_object_dtype_masks_for_wide_games():
    # d > 64 falls back to Python-int masks end to end
    d = 70
    c = np.zeros(d)
    c[0], c[69] = 1.0, -2.0
    g = additive_game(c)
    trace = appro_shapley(g, Budget(d + 1), seed=0)
    assert trace.snapshots[-1].phi == pytest.approx(c, abs=1e-12)
