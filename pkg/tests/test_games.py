import math
import threading

import numpy as np
import pytest

from helpers import random_ensemble
from shaplab.coalitions import Coalition
from shaplab.errors import BudgetError
from shaplab.games import (
    AttributionVector,
    SetFunctionGame,
    additive_efficient_normalization,
    brute_force_shapley,
    check_axioms,
    kernel_weight,
    shapley_weight,
    value_table,
)
from shaplab.removal import baseline_game


def additive_game(c_vec):
    c_vec = np.asarray(c_vec, dtype=float)
    return SetFunctionGame(len(c_vec), lambda s: float(sum(c_vec[i] for i in s)))


class TestShapleyWeight:
    def test_known_values(self):
        assert shapley_weight(0, 3) == pytest.approx(1 / 3, rel=1e-12)
        assert shapley_weight(0, 1) == pytest.approx(1.0, rel=1e-15)
        assert shapley_weight(2, 4) == pytest.approx(
            math.factorial(2) * math.factorial(1) / math.factorial(4), rel=1e-12
        )

    def test_sums_to_one_over_subsets_d6(self):
        total = sum(math.comb(5, s) * shapley_weight(s, 6) for s in range(6))
        assert total == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("d", range(1, 13))
    def test_distribution_property(self, d):
        total = sum(math.comb(d - 1, s) * shapley_weight(s, d) for s in range(d))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_no_overflow_at_512(self):
        w = shapley_weight(255, 512)
        assert 0.0 < w < 1.0 and math.isfinite(w)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            shapley_weight(3, 3)
        with pytest.raises(ValueError):
            shapley_weight(-1, 3)
        with pytest.raises(ValueError):
            shapley_weight(0, 0)


class TestKernelWeight:
    def test_known_values(self):
        assert kernel_weight(1, 4) == pytest.approx(0.25, rel=1e-12)
        # (d-1) / (C(4,2) * 2 * 2) = 3 / 24
        assert kernel_weight(2, 4) == pytest.approx(1 / 8, rel=1e-12)

    def test_symmetry_d7(self):
        for s in range(1, 7):
            assert kernel_weight(s, 7) == pytest.approx(kernel_weight(7 - s, 7), rel=1e-12)

    def test_excluded_sizes(self):
        with pytest.raises(ValueError):
            kernel_weight(0, 5)
        with pytest.raises(ValueError):
            kernel_weight(5, 5)


class TestCoalitionalGame:
    def test_eval_count_increments(self):
        g = additive_game([1.0, 2.0])
        g.value(Coalition.from_indices([0], 2))
        g.value(0b11)
        assert g.eval_count == 2
        g.value_many(np.array([0, 1, 2, 3], dtype=np.uint64))
        assert g.eval_count == 6

    def test_pure_evaluation(self):
        g = additive_game([1.0, -1.5, 2.0])
        a = g.value(0b101)
        b = g.value(0b101)
        assert a == b == pytest.approx(3.0)

    def test_mask_validation(self):
        g = additive_game([1.0, 2.0])
        with pytest.raises(ValueError):
            g.value(0b100)
        with pytest.raises(ValueError):
            g.value(Coalition.empty(3))

    def test_concurrent_counter(self):
        g = additive_game(np.ones(4))
        masks = np.arange(16, dtype=np.uint64)

        def work():
            for _ in range(25):
                g.value_many(masks)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert g.eval_count == 8 * 25 * 16


class TestBruteForce:
    def test_hand_example_d2(self):
        vals = {0: 0.0, 1: 1.0, 2: 2.0, 3: 4.0}
        g = SetFunctionGame(2, lambda s: vals[s.mask])
        att = brute_force_shapley(g)
        assert att.phi == pytest.approx([1.5, 2.5])
        assert att.v_empty == 0.0 and att.v_full == 4.0
        assert att.evals_used == 4
        assert g.eval_count == 4  # each v(S) evaluated exactly once

    def test_additive_game_recovers_coefficients(self):
        rng = np.random.default_rng(0)
        c = rng.standard_normal(8)
        att = brute_force_shapley(additive_game(c))
        assert att.phi == pytest.approx(c, abs=1e-10)

    def test_symmetric_game_equal_values(self):
        g = SetFunctionGame(6, lambda s: float(len(s) ** 2))
        att = brute_force_shapley(g)
        assert np.ptp(att.phi) < 1e-12

    def test_efficiency_gap_small(self):
        rng = np.random.default_rng(3)
        ens = random_ensemble(8, 4, 3, rng)
        game = baseline_game(ens, rng.standard_normal(8), rng.standard_normal(8))
        att = brute_force_shapley(game)
        scale = max(1.0, abs(att.v_full))
        assert abs(att.efficiency_gap) <= 1e-9 * scale

    def test_linearity(self):
        rng = np.random.default_rng(11)
        d = 6
        e1 = random_ensemble(d, 3, 2, rng)
        e2 = random_ensemble(d, 3, 2, rng)
        x_e, x_b = rng.standard_normal(d), rng.standard_normal(d)
        g1 = baseline_game(e1, x_e, x_b)
        g2 = baseline_game(e2, x_e, x_b)
        a, b = 2.5, -1.25
        combo = SetFunctionGame(d, lambda s: a * g1.value(s.mask) + b * g2.value(s.mask))
        phi_combo = brute_force_shapley(combo).phi
        phi_sep = a * brute_force_shapley(g1).phi + b * brute_force_shapley(g2).phi
        assert phi_combo == pytest.approx(phi_sep, abs=1e-9)

    def test_budget_cap(self):
        g = additive_game(np.ones(26))
        with pytest.raises(BudgetError):
            brute_force_shapley(g)

    def test_single_player(self):
        g = SetFunctionGame(1, lambda s: 3.0 if 0 in s else 1.0)
        att = brute_force_shapley(g)
        assert att.phi == pytest.approx([2.0])


class TestValueTable:
    def test_table_indexing(self):
        c = np.array([1.0, 2.0, 4.0])
        g = additive_game(c)
        table = value_table(g)
        assert g.eval_count == 8
        for mask in range(8):
            expect = sum(c[j] for j in range(3) if (mask >> j) & 1)
            assert table[mask] == pytest.approx(expect)


class TestNormalization:
    def test_zero_gap_identity(self):
        att = AttributionVector(np.array([1.0, 3.0]), 0.0, 4.0, 10)
        out = additive_efficient_normalization(att)
        assert np.array_equal(out.phi, att.phi)

    def test_even_split(self):
        att = AttributionVector(np.array([0.0, 0.0]), 0.0, 4.0, 0)
        out = additive_efficient_normalization(att)
        assert out.phi == pytest.approx([2.0, 2.0])

    def test_idempotent(self):
        att = AttributionVector(np.array([0.3, -1.2, 4.0]), 0.5, 2.0, 0)
        once = additive_efficient_normalization(att)
        twice = additive_efficient_normalization(once)
        assert twice.phi == pytest.approx(once.phi, abs=1e-12)

    def test_output_gap_tiny(self):
        rng = np.random.default_rng(5)
        att = AttributionVector(rng.standard_normal(9), -2.0, 17.5, 0)
        out = additive_efficient_normalization(att)
        assert abs(out.efficiency_gap) <= 1e-12 * max(1.0, abs(out.v_full))

    def test_never_farther_from_truth(self):
        # projecting onto the efficiency hyperplane cannot move away from any
        # point inside it
        rng = np.random.default_rng(7)
        for trial in range(50):
            d = 6
            truth = rng.standard_normal(d)
            noisy = truth + rng.standard_normal(d)
            v_full = float(truth.sum())
            att = AttributionVector(noisy, 0.0, v_full, 0)
            out = additive_efficient_normalization(att)
            before = np.linalg.norm(noisy - truth)
            after = np.linalg.norm(out.phi - truth)
            assert after <= before * (1 + 1e-12) + 1e-15


class TestCheckAxioms:
    def test_brute_force_passes_all(self):
        rng = np.random.default_rng(21)
        for _ in range(3):
            d = int(rng.integers(3, 9))
            ens = random_ensemble(d, 3, 2, rng)
            game = baseline_game(ens, rng.standard_normal(d), rng.standard_normal(d))
            att = brute_force_shapley(game)
            report = check_axioms(game, att, tol=1e-8)
            assert report.all_ok

    def test_dummy_detected_in_additive_game(self):
        g = additive_game([1.0, 0.0, -2.0])
        att = brute_force_shapley(g)
        report = check_axioms(g, att, tol=1e-10)
        assert 1 in report.dummy_players
        assert report.dummy_ok

    def test_perturbation_breaks_efficiency(self):
        g = additive_game([1.0, 2.0, 3.0])
        att = brute_force_shapley(g)
        bad = AttributionVector(att.phi + np.array([1.0, 0, 0]), att.v_empty, att.v_full, 0)
        report = check_axioms(g, bad, tol=1e-8)
        assert not report.efficiency_ok

    def test_symmetric_players_flagged(self):
        g = SetFunctionGame(4, lambda s: float(len(s) ** 1.5))
        att = brute_force_shapley(g)
        report = check_axioms(g, att, tol=1e-9)
        assert report.symmetry_ok
        assert len(report.symmetric_pairs) == 6  # all pairs symmetric

    def test_symmetry_violation_detected(self):
        g = SetFunctionGame(3, lambda s: float(len(s)))
        bad = AttributionVector(np.array([1.1, 0.9, 1.0]), 0.0, 3.0, 0)
        report = check_axioms(g, bad, tol=1e-6)
        assert not report.symmetry_ok
