import math

import numpy as np
import pytest

from cachenet import coverage as cov
from cachenet import optimizer as opt
from cachenet.coverage import ChannelParams, Mobility, Policy, Scenario
from cachenet.errors import ValidationError
from cachenet.popularity import ZipfLibrary


def objective_of(scenario, b, lib, params):
    return float(cov.placement_hit_values(scenario, np.asarray(b), lib, params)[0])


def assert_kkt(sol, L, residual_tol=1e-7):
    """Executable form of the first-order conditions: primal feasibility,
    dual feasibility, complementary slackness, stationarity residual, and the
    popularity-ordering property."""
    b = sol.b_star.probs
    assert abs(b.sum() - L) < 1e-8
    assert (b >= -1e-12).all() and (b <= 1.0 + 1e-12).all()
    assert (sol.mu_star >= 0.0).all()
    assert (sol.w_star >= 0.0).all()
    assert np.abs(sol.mu_star * b).max() < 1e-8
    assert np.abs(sol.w_star * (b - 1.0)).max() < 1e-8
    assert sol.stationarity_residual <= residual_tol
    assert (np.diff(b) <= 1e-9).all()


class TestMobileP1:
    def test_corner_below_threshold(self, lib2, params14):
        # threshold 1 + gamma/log2(1/(1-p_c)) ~ 2.0129 at these parameters
        for n in (1, 2):
            sol = opt.optimal_mobile_p1(lib2, params14, n)
            assert np.abs(sol.b_star.probs - [1.0, 0.0]).max() < 1e-12
            assert_kkt(sol, 1)

    def test_interior_at_n3(self, lib2, params14):
        sol = opt.optimal_mobile_p1(lib2, params14, 3)
        # frozen from the closed form: a = 2^0.6, b1 = (a-1+pc)/((a+1)pc)
        assert abs(sol.b_star.probs[0] - 0.7635039003402626) < 1e-9
        assert_kkt(sol, 1)

    def test_balances_at_large_n(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 1)
        sol = opt.optimal_mobile_p1(lib, params14, 100)
        assert np.abs(sol.b_star.probs - 1.0 / 3.0).max() < 0.02

    def test_general_L(self, params14):
        lib = ZipfLibrary.zipf(4, 1.2, 2)
        sol = opt.optimal_mobile_p1(lib, params14, 5)
        assert_kkt(sol, 2)

    def test_full_capacity(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 3)
        sol = opt.optimal_mobile_p1(lib, params14, 4)
        assert np.abs(sol.b_star.probs - 1.0).max() < 1e-10

    def test_rejects_bad_n(self, lib2, params14):
        with pytest.raises(ValidationError):
            opt.optimal_mobile_p1(lib2, params14, 0)

    @pytest.mark.parametrize("gamma", [0.6, 1.2, 2.0])
    @pytest.mark.parametrize("alpha", [3.0, 4.0])
    def test_matches_two_file_closed_form(self, gamma, alpha):
        params = ChannelParams(T=1.0, alpha=alpha)
        lib = ZipfLibrary.zipf(2, gamma, 1)
        p_c = 1.0 / (1.0 + cov.rho1(1.0, alpha))
        for n in range(2, 11):
            sol = opt.optimal_mobile_p1(lib, params, n)
            b1, b2 = opt.corollary1_two_file(gamma, p_c, n)
            assert abs(sol.b_star.probs[0] - b1) < 1e-9
            assert abs(sol.b_star.probs[1] - b2) < 1e-9


class TestCorollary1:
    def test_threshold_cases(self):
        p_c = 0.5600991535115574
        assert opt.corollary1_two_file(1.2, p_c, 2) == (1.0, 0.0)
        b1, b2 = opt.corollary1_two_file(1.2, p_c, 3)
        assert abs(b1 - 0.7635039003402626) < 1e-12
        assert abs(b1 + b2 - 1.0) < 1e-15

    def test_single_attempt_always_caches_top(self):
        for gamma in (0.3, 1.2, 2.5):
            for p_c in (0.1, 0.56, 0.9):
                assert opt.corollary1_two_file(gamma, p_c, 1) == (1.0, 0.0)

    def test_continuity_at_threshold(self):
        p_c = 0.5600991535115574
        threshold = 1.0 + 1.2 / math.log2(1.0 / (1.0 - p_c))
        n_above = math.ceil(threshold)
        b1, _ = opt.corollary1_two_file(1.2, p_c, n_above)
        assert b1 < 1.0  # interior immediately past the threshold
        assert b1 > 0.5  # still favors the popular file

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            opt.corollary1_two_file(0.0, 0.5, 3)
        with pytest.raises(ValidationError):
            opt.corollary1_two_file(1.2, 1.0, 3)


class TestMobileP2:
    def test_single_file(self, params14):
        lib = ZipfLibrary.zipf(1, 1.2, 1)
        sol = opt.optimal_mobile_p2(lib, params14, 3)
        assert sol.b_star.probs.tolist() == [1.0]

    def test_n1_matches_waterfilling(self, params14):
        for K, gamma in ((2, 1.2), (3, 0.6), (4, 0.8)):
            lib = ZipfLibrary.zipf(K, gamma, 1)
            sol = opt.optimal_mobile_p2(lib, params14, 1)
            wf = opt.corollary2_single_tx_p2(lib, params14)
            assert np.abs(sol.b_star.probs - wf.probs).max() < 1e-8
            assert_kkt(sol, 1)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_matches_grid(self, n, lib2, params14):
        sol = opt.optimal_mobile_p2(lib2, params14, n)
        grid = opt.grid_search_oracle(Scenario(Policy.P2, Mobility.MOBILE, n), lib2, params14, step=1e-3)
        assert np.abs(sol.b_star.probs - grid.probs).max() < 2e-3
        gval = objective_of(Scenario(Policy.P2, Mobility.MOBILE, n), grid.probs, lib2, params14)
        assert sol.objective >= gval - 1e-5
        assert_kkt(sol, 1)

    def test_rejects_general_L(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 2)
        with pytest.raises(ValidationError, match="L = 1"):
            opt.optimal_mobile_p2(lib, params14, 2)

    def test_dispatcher_handles_general_L(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 2)
        sol = opt.optimal_placement(Scenario(Policy.P2, Mobility.MOBILE, 3), lib, params14)
        assert_kkt(sol, 2, residual_tol=1e-6)
        grid = opt.grid_search_oracle(Scenario(Policy.P2, Mobility.MOBILE, 3), lib, params14, step=1e-2)
        gval = objective_of(Scenario(Policy.P2, Mobility.MOBILE, 3), grid.probs, lib, params14)
        assert sol.objective >= gval - 1e-5


class TestCorollary2:
    def test_single_file(self, params14):
        lib = ZipfLibrary.zipf(1, 1.2, 1)
        assert opt.corollary2_single_tx_p2(lib, params14).probs.tolist() == [1.0]

    def test_uniform_library_splits_evenly(self, params14):
        for K in (2, 3, 5):
            lib = ZipfLibrary.uniform(K, 1)
            b = opt.corollary2_single_tx_p2(lib, params14).probs
            assert np.abs(b - 1.0 / K).max() < 1e-12

    def test_matches_fine_grid(self, params14):
        # exhaustive 1-D oracle at step 1e-4 over b1
        lib = ZipfLibrary.zipf(2, 0.6, 1)  # milder skew gives an interior optimum
        b = opt.corollary2_single_tx_p2(lib, params14).probs
        b1_grid = np.linspace(0.0, 1.0, 10_001)
        rows = np.column_stack([b1_grid, 1.0 - b1_grid])
        vals = cov.placement_hit_values(Scenario(Policy.P2, Mobility.MOBILE, 1), rows, lib, params14)
        best = rows[int(np.argmax(vals))]
        assert np.abs(b - best).max() < 1e-4 + 1e-9

    def test_waterfill_constants_feasible(self, params14):
        lib = ZipfLibrary.zipf(5, 1.5, 1)
        wf = opt.waterfill_constants(lib, params14)
        assert 1 <= wf.K_star <= 5
        b = opt.corollary2_single_tx_p2(lib, params14).probs
        assert int((b > 0).sum()) == wf.K_star
        assert abs(b.sum() - 1.0) < 1e-9


class TestStaticP1:
    def test_top_l_indicator(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 1)
        assert opt.optimal_static_p1(lib, params14, 4).probs.tolist() == [1.0, 0.0, 0.0]
        lib2 = ZipfLibrary.zipf(3, 1.2, 2)
        assert opt.optimal_static_p1(lib2, params14, 4).probs.tolist() == [1.0, 1.0, 0.0]

    def test_full_capacity_all_ones(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 3)
        assert opt.optimal_static_p1(lib, params14, 2).probs.tolist() == [1.0, 1.0, 1.0]

    def test_beats_any_grid_point(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 1)
        sc = Scenario(Policy.P1, Mobility.STATIC, 4)
        b = opt.optimal_static_p1(lib, params14, 4).probs
        grid = opt.grid_search_oracle(sc, lib, params14, step=1e-2)
        assert objective_of(sc, b, lib, params14) >= objective_of(sc, grid.probs, lib, params14) - 1e-12


class TestStaticP2:
    def test_single_file(self, params14):
        lib = ZipfLibrary.zipf(1, 1.2, 1)
        sol = opt.optimal_static_p2(lib, params14, 3)
        assert sol.b_star.probs.tolist() == [1.0]

    def test_n1_matches_waterfilling(self, params14):
        for gamma in (0.6, 1.2):
            lib = ZipfLibrary.zipf(2, gamma, 1)
            sol = opt.optimal_static_p2(lib, params14, 1)
            wf = opt.corollary2_single_tx_p2(lib, params14)
            assert np.abs(sol.b_star.probs - wf.probs).max() < 1e-6

    @pytest.mark.parametrize("gamma", [0.3, 0.6, 1.2])
    def test_matches_grid(self, gamma, params14):
        lib = ZipfLibrary.zipf(2, gamma, 1)
        sc = Scenario(Policy.P2, Mobility.STATIC, 3)
        sol = opt.optimal_static_p2(lib, params14, 3)
        grid = opt.grid_search_oracle(sc, lib, params14, step=1e-2)
        assert np.abs(sol.b_star.probs - grid.probs).max() < 5e-3
        assert sol.certified
        assert_kkt(sol, 1, residual_tol=1e-6)

    def test_cap_enforced(self, lib2, params14):
        with pytest.raises(ValidationError):
            opt.optimal_static_p2(lib2, params14, 31)


class TestGridOracle:
    def test_single_file(self, params14):
        lib = ZipfLibrary.zipf(1, 1.2, 1)
        assert opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 2), lib, params14).probs.tolist() == [1.0]

    def test_single_attempt_top_file(self, lib2, params14):
        b = opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 1), lib2, params14, step=1e-2)
        assert b.probs.tolist() == [1.0, 0.0]

    def test_finds_corollary1_interior(self, lib2, params14):
        b = opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 3), lib2, params14, step=1e-3)
        assert abs(b.probs[0] - 0.7635039003402626) < 1e-3

    def test_cost_guards(self, params14):
        lib5 = ZipfLibrary.zipf(5, 1.2, 1)
        with pytest.raises(ValidationError, match="K = 4"):
            opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 1), lib5, params14)
        with pytest.raises(ValidationError, match="step"):
            opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 1), ZipfLibrary.zipf(2, 1.2, 1), params14, step=0.5)

    def test_four_files_general_L(self, params14):
        lib = ZipfLibrary.zipf(4, 1.2, 2)
        b = opt.grid_search_oracle(Scenario(Policy.P1, Mobility.MOBILE, 4), lib, params14, step=1e-2)
        assert abs(b.probs.sum() - 2.0) < 1e-9


class TestCrossSolverProperties:
    def test_p2_optimum_dominates_p1(self, lib2, params14):
        # cache awareness can only help: pointwise success dominance carries
        # through every composition
        for mob in (Mobility.MOBILE, Mobility.STATIC):
            for n in (1, 2, 4):
                s1 = opt.optimal_placement(Scenario(Policy.P1, mob, n), lib2, params14)
                s2 = opt.optimal_placement(Scenario(Policy.P2, mob, n), lib2, params14)
                assert s2.objective >= s1.objective - 1e-10

    def test_even_split_asymptote_monotone_tail(self, params14):
        lib = ZipfLibrary.zipf(3, 1.2, 1)
        devs = []
        for n in (10, 20, 40, 70, 100):
            sol = opt.optimal_mobile_p1(lib, params14, n)
            devs.append(np.abs(sol.b_star.probs - 1.0 / 3.0).max())
        assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))
        assert devs[-1] <= 0.02

    def test_popularity_ordering_everywhere(self, params14):
        lib = ZipfLibrary.zipf(4, 0.9, 2)
        for scenario in (
            Scenario(Policy.P1, Mobility.MOBILE, 6),
            Scenario(Policy.P2, Mobility.MOBILE, 6),
            Scenario(Policy.P1, Mobility.STATIC, 6),
            Scenario(Policy.P2, Mobility.STATIC, 6),
        ):
            sol = opt.optimal_placement(scenario, lib, params14)
            assert (np.diff(sol.b_star.probs) <= 1e-9).all()


class TestProjection:
    def test_projects_onto_capped_simplex(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            K = int(rng.integers(2, 8))
            L = int(rng.integers(1, K + 1))
            v = rng.normal(size=K) * 3.0
            b = opt.project_capped_simplex(v, L)
            assert abs(b.sum() - L) < 1e-9
            assert (b >= -1e-12).all() and (b <= 1.0 + 1e-12).all()

    def test_feasible_point_is_fixed(self):
        b0 = np.array([0.6, 0.3, 0.1])
        assert np.abs(opt.project_capped_simplex(b0, 1) - b0).max() < 1e-9
