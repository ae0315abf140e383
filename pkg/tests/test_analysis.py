"""Estimators and experiment machinery."""

import math

import numpy as np
import pytest
from scipy import stats

from branching_ou import (
    ArgumentError,
    Box,
    Generation,
    ModelParams,
    RectangleFamily,
    center_of_mass,
    covariance_by_class,
    empirical_measure,
    relative_positions,
    run,
    slln_deviation,
    support_radius,
)
from branching_ou import analysis, theory
from branching_ou.analysis import (
    DEFAULT_THRESHOLDS,
    StatLine,
    _exact_birth_states,
    box_mass,
    coordinate_cov_check,
    delta_equivalence_test,
    extinction_diagnostic,
    independence_proxy_test,
    occupation_stats,
    spearman_trend_pvalue,
)


class TestBasics:
    def test_center_of_mass(self):
        g = Generation(1, 1.0, np.array([[0.0], [2.0]]))
        assert center_of_mass(g).tolist() == [1.0]
        g2 = Generation(2, 2.0, np.full((4, 3), 2.5))
        assert center_of_mass(g2).tolist() == [2.5, 2.5, 2.5]

    def test_relative_positions(self):
        g = Generation(1, 1.0, np.array([[0.0], [2.0]]))
        assert relative_positions(g)[:, 0].tolist() == [-1.0, 1.0]
        single = Generation(0, 0.0, np.array([[5.0]]))
        assert relative_positions(single).tolist() == [[0.0]]

    def test_relative_positions_sum_to_zero_along_runs(self):
        p = ModelParams(d=2, b=-0.6, gamma=1.2, horizon_m=6, seed=44)
        for g in run(p):
            total = np.abs(relative_positions(g).sum(axis=0)).max()
            scale = max(1.0, np.abs(g.positions).max())
            assert total <= g.n * g.d * 1e-12 * scale

    def test_empirical_measure(self):
        pts = np.array([[0.0], [0.5], [0.99], [1.0], [-1.0]])
        box = Box((0.0,), (1.0,))
        # half-open: 1.0 excluded, 0.0 included
        assert empirical_measure(pts, box) == pytest.approx(3 / 5)
        assert empirical_measure(np.array([[0.1], [0.2]]), box) == 1.0
        assert empirical_measure(pts, Box((10.0,), (10.001,))) == 0.0

    def test_support_radius(self):
        assert support_radius(Generation(0, 0.0, np.array([[7.0]]))) == 0.0
        g = Generation(1, 1.0, np.array([[-1.0], [1.0]]))
        assert support_radius(g) == 1.0


class TestRectangleFamily:
    def test_d1_composition(self):
        fam = RectangleFamily.default(1)
        assert len(fam.boxes) == 17
        assert fam.boxes[0] == Box((-4.0,), (-3.0,))
        assert Box((-1.0,), (1.0,)) in fam.boxes
        assert fam == RectangleFamily.default(1)  # deterministic

    def test_d2_composition(self):
        fam = RectangleFamily.default(2)
        assert len(fam.boxes) == 15 * 15 + 2

    def test_box_mass_against_erf(self):
        lam = 1.0
        sigma = 1 / math.sqrt(2 * lam)
        for box in RectangleFamily.default(1).boxes:
            expected = stats.norm.cdf(box.hi[0], scale=sigma) - \
                stats.norm.cdf(box.lo[0], scale=sigma)
            assert box_mass(box, lam) == pytest.approx(expected, abs=1e-12)

    def test_box_mass_product_rule(self):
        lam = 0.5
        b2 = Box((-1.0, 0.5), (1.0, 2.0))
        m1 = box_mass(Box((-1.0,), (1.0,)), lam)
        m2 = box_mass(Box((0.5,), (2.0,)), lam)
        assert box_mass(b2, lam) == pytest.approx(m1 * m2, rel=1e-12)


class TestSllnDeviation:
    def test_gaussian_quantile_points(self):
        """Points built from exact Gaussian quantiles deviate by at most
        the quantization resolution 1/n."""
        lam = 1.0
        n = 4096
        sigma = 1 / math.sqrt(2 * lam)
        q = stats.norm.ppf((np.arange(n) + 0.5) / n, scale=sigma)
        g = Generation(12, 12.0, q[:, None])
        dev = slln_deviation(g, RectangleFamily.default(1), lam)
        assert dev < 0.005

    def test_small_generation_no_assert(self):
        g = Generation(2, 2.0, np.array([[0.0], [0.1], [5.0], [-3.0]]))
        dev = slln_deviation(g, RectangleFamily.default(1), 1.0)
        assert 0.0 <= dev <= 1.0

    def test_domain(self):
        g = Generation(0, 0.0, np.array([[0.0]]))
        with pytest.raises(ArgumentError):
            slln_deviation(g, RectangleFamily.default(1), 0.0)


def _final_births(params, m, n_reps):
    """(R, 2^m) relative first coordinates at integer time m."""
    for t, x in _exact_birth_states(params, m, 0, n_reps):
        if t == m:
            return x[:, :, 0] - x[:, :, 0].mean(axis=1, keepdims=True)
    raise AssertionError


class TestCovarianceByClass:
    def test_matches_theory_small(self):
        m, g_eff, reps = 4, 1.0, 4000
        p = ModelParams(b=0.0, gamma=g_eff, horizon_m=m, seed=300)
        y = _final_births(p, m, reps)
        for a in (0, 2, 3):
            est, se = covariance_by_class(y, a)
            th = theory.pair_covariance(m, a, g_eff)
            assert abs(est - th) <= 4 * se, (a, est, th, se)

    def test_generation_interface(self):
        p = ModelParams(b=0.0, gamma=1.0, horizon_m=3, seed=301)
        gens = []
        for r in range(300):
            pr = ModelParams(b=0.0, gamma=1.0, horizon_m=3, seed=301)
            traj = run(pr, rng=__import__("branching_ou").RngStream(301, replicate=r))
            gens.append(traj[-2])  # births at t=3
        est, se = covariance_by_class(gens, 2)
        th = theory.pair_covariance(3, 2, 1.0)
        assert abs(est - th) <= 4 * se

    def test_tree_automorphism_invariance(self):
        """Swapping the two root subtrees (a relabeling independent of the
        motion) leaves every class estimate unchanged."""
        p = ModelParams(b=0.0, gamma=1.0, horizon_m=4, seed=302)
        y = _final_births(p, 4, 500)
        swapped = np.concatenate([y[:, 8:], y[:, :8]], axis=1)
        for a in (0, 2, 4):
            est1, _ = covariance_by_class(y, a)
            est2, _ = covariance_by_class(swapped, a)
            assert est1 == pytest.approx(est2, rel=1e-12)

    def test_root_and_first_class_share_pairs(self):
        p = ModelParams(b=0.0, gamma=1.0, horizon_m=4, seed=303)
        y = _final_births(p, 4, 200)
        assert covariance_by_class(y, 0)[0] == covariance_by_class(y, 1)[0]

    def test_empty_class_rejected(self):
        y = np.random.default_rng(0).normal(size=(10, 8))
        with pytest.raises(ArgumentError):
            covariance_by_class(y, 7)  # separation beyond m=3
        with pytest.raises(ArgumentError):
            covariance_by_class(y[:1], 1)  # single replicate


class TestSpearmanTrend:
    def test_perfectly_decreasing(self):
        rho, p = spearman_trend_pvalue([7, 6, 5, 4, 3, 2, 1])
        assert rho == pytest.approx(-1.0)
        assert p == pytest.approx(1 / math.factorial(7))

    def test_increasing_not_significant(self):
        _, p = spearman_trend_pvalue([1, 2, 3, 4, 5, 6, 7])
        assert p > 0.99

    def test_one_inversion_still_small(self):
        _, p = spearman_trend_pvalue([7, 6, 5, 4, 2, 3, 1])
        assert p < 0.01

    def test_range_check(self):
        with pytest.raises(ArgumentError):
            spearman_trend_pvalue([1, 2])


class TestCoordinateCov:
    @staticmethod
    def _synthetic(n, rho1, seed):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal(n)
        y1 = rho1 * x1 + math.sqrt(1 - rho1**2) * rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        y2 = rng.standard_normal(n)  # independent pair
        return np.stack([x1, x2], axis=1), np.stack([y1, y2], axis=1)

    def test_perfect_plus_independent(self):
        x, y = self._synthetic(200_000, 1.0, 9)
        rep = coordinate_cov_check(x, y, Box((-1.0, -1.0), (1.0, 1.0)))
        assert rep.passed

    def test_all_independent_both_sides_near_zero(self):
        x, y = self._synthetic(100_000, 0.0, 10)
        rep = coordinate_cov_check(x, y, Box((-0.5, -0.5), (1.5, 1.5)))
        assert rep.passed

    def test_d1_is_equality(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((50_000, 1))
        y = 0.6 * x + 0.8 * rng.standard_normal((50_000, 1))
        rep = coordinate_cov_check(x, y, Box((-1.0,), (1.0,)))
        # |lhs| - rhs = |c| - |c| = 0 exactly
        assert rep.statistics[0].observed == pytest.approx(0.0, abs=1e-15)


class TestExtinctionDiagnostic:
    def test_counts_and_ratio(self):
        g_far = Generation(1, 1.0, np.array([[100.0], [101.0]]))
        g_near = Generation(1, 1.0, np.array([[0.1], [50.0]]))
        frac, ratios = extinction_diagnostic([g_far, g_near], 1.0)
        assert frac == 0.5
        assert ratios[0] == pytest.approx(0.5 / 100.5)

    def test_radius_to_infinity(self):
        g = Generation(1, 1.0, np.array([[3.0], [4.0]]))
        frac, _ = extinction_diagnostic([g], 10.0)
        assert frac == 0.0


class TestExperiments:
    def test_com_gamma_free(self):
        """The center of mass law does not involve gamma: samples under
        two interactions are KS-indistinguishable."""
        m, reps = 8, 3000
        outs = []
        for k, gamma in enumerate((0.0, 2.0)):
            p = ModelParams(b=0.8, gamma=gamma, horizon_m=m, seed=500 + k)
            for t, x in _exact_birth_states(p, m, 0, reps):
                if t == m:
                    outs.append(x.mean(axis=1)[:, 0])
        assert stats.ks_2samp(outs[0], outs[1]).pvalue > 1e-3

    def test_delta_identity_pair_passes(self):
        p = ModelParams(b=0.5, gamma=0.5, horizon_m=6, seed=520)
        rep = delta_equivalence_test(p, p, 6, 2500)
        assert rep.passed

    def test_delta_mismatched_sums_rejected(self):
        p1 = ModelParams(b=0.5, gamma=0.5)
        p2 = ModelParams(b=0.5, gamma=0.6)
        with pytest.raises(ArgumentError):
            delta_equivalence_test(p1, p2, 4, 100)

    def test_independence_proxy(self):
        p = ModelParams(b=-1.0, gamma=0.5, horizon_m=9, seed=530)
        rep = independence_proxy_test(p, 3000, 9)
        assert rep.passed

    def test_occupation_stats_fields(self):
        p = ModelParams(b=1.0, gamma=0.5, horizon_m=8, seed=540)
        row = occupation_stats(p, 50, 8)
        assert set(row) >= {"b", "gamma", "log_occupation_slope",
                            "conjectured_slope", "box_occupied_fraction_final"}
        # case-1 regime keeps mass near the origin
        assert row["box_occupied_fraction_final"] == 1.0

    def test_jobs_do_not_change_results(self):
        p = ModelParams(b=1.0, gamma=0.5, horizon_m=6, seed=550)
        r1 = analysis.com_convergence_test(p, 600, 6, jobs=1)
        r2 = analysis.com_convergence_test(p, 600, 6, jobs=3)
        for a, b in zip(r1.statistics, r2.statistics):
            assert a.observed == b.observed

    def test_report_pass_flags(self):
        line = StatLine("x", 10.0, 0.0, 1.0, 10.0, False)
        rep = analysis.ExperimentReport("t", {}, 1, [line])
        assert not rep.passed
        assert abs(line.z) > DEFAULT_THRESHOLDS.z_max


class TestRegimeExamples:
    def test_escape_two_dimensional_structure(self):
        """Outward drift in d=2: each coordinate's scaled variance matches
        the terminal variance, and the coordinates decouple."""
        m, reps = 10, 4000
        p = ModelParams(d=2, b=-1.0, gamma=0.5, horizon_m=m, seed=560)
        for t, x in _exact_birth_states(p, m, 0, reps):
            if t == m:
                scaled = math.exp(-m) * x.mean(axis=1)
        tvar = theory.com_time_change(m, -1.0)
        se_var = tvar * math.sqrt(2 / reps)
        for k in range(2):
            assert abs(scaled[:, k].var(ddof=1) - tvar) <= 4 * se_var
        cross = np.corrcoef(scaled[:, 0], scaled[:, 1])[0, 1]
        assert abs(cross) <= 4 / math.sqrt(reps)

    def test_inward_regime_keeps_unit_ball_occupied(self):
        """Attracting inward regime: mass concentrates near the origin, so
        the empty-ball fraction is zero."""
        from branching_ou import RngStream
        gens = []
        for r in range(60):
            p = ModelParams(d=1, b=1.0, gamma=0.5, horizon_m=8, seed=570)
            gens.append(run(p, rng=RngStream(570, replicate=r))[-1])
        frac, _ = extinction_diagnostic(gens, 1.0)
        assert frac == 0.0

    def test_support_radius_grows_linearly_at_critical_balance(self):
        """gamma + b = 0: the relative support radius grows like O(m); the
        fitted slope over m = 4..14 stays within a fixed band."""
        ms = list(range(4, 15))
        means = []
        reps = 40
        for m in ms:
            radii = []
            p = ModelParams(d=1, b=0.5, gamma=-0.5, horizon_m=m, seed=580)
            for t, x in _exact_birth_states(p, m, 0, reps):
                if t == m:
                    rel = x[:, :, 0] - x[:, :, 0].mean(axis=1, keepdims=True)
                    radii = np.abs(rel).max(axis=1)
            means.append(float(np.mean(radii)))
        slope = np.polyfit(ms, means, 1)[0]
        assert 0.3 < slope < 3.0

    def test_delta_knockout_interaction_pair(self):
        """Third canonical transform: remove the interaction instead of
        the drift."""
        p1 = ModelParams(d=1, b=1.0, gamma=0.5, horizon_m=6, seed=590)
        p2 = theory.delta_transform(p1, p1.gamma)
        assert p2.gamma == 0.0 and p2.b == 1.5
        rep = delta_equivalence_test(p1, p2, 6, 2500)
        assert rep.passed

    def test_watanabe_ratio_of_adjacent_boxes(self):
        """Critical scaling is translation invariant: two adjacent unit
        boxes near the origin carry nearly equal scaled mass."""
        p = ModelParams(d=1, b=0.5, gamma=-0.5, horizon_m=12, seed=600)
        n_reps = 300
        counts = np.zeros((n_reps, 2))
        for t, x in _exact_birth_states(p, 12, 0, n_reps):
            if t == 12:
                pos = x[:, :, 0]
                counts[:, 0] = ((pos >= -1) & (pos < 0)).sum(axis=1)
                counts[:, 1] = ((pos >= 0) & (pos < 1)).sum(axis=1)
        ratio = counts[:, 0].mean() / counts[:, 1].mean()
        assert ratio == pytest.approx(1.0, abs=0.1)
