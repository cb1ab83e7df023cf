import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elrsel.elr import (
    Decision,
    ElrReport,
    ScoreVector,
    chi2_1_cdf,
    chi2_1_quantile,
    chi2_1_sf,
    decide,
    elr_statistic,
    elr_test,
    multiplier_bracket,
    power_approx,
    score_diff,
    solve_multiplier,
)
from elrsel.errors import AllZeroScores, DomainError, Infeasible, LengthMismatch
from elrsel.loocv import LoocvResult


def loo(errs):
    e = np.asarray(errs, dtype=float)
    return LoocvResult(np.zeros_like(e), e, float(np.mean(e**2)), 1)


def bisect_root(x):
    lo, hi = multiplier_bracket(x.min(), x.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(x / (1 + mid * x)) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


mixed = arrays(float, st.integers(2, 40), elements=st.floats(-100, 100, allow_nan=False)).filter(
    lambda a: a.min() < -1e-3 and a.max() > 1e-3
)


class TestScoreDiff:
    def test_identical(self):
        s = score_diff(loo([1, 2]), loo([1, 2]))
        np.testing.assert_array_equal(s.scores, [0, 0])
        assert s.dape == 0

    def test_swap(self):
        s = score_diff(loo([2, 0]), loo([0, 2]))
        np.testing.assert_array_equal(s.scores, [4, -4])
        assert s.dape == 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            score_diff(loo([1, 2]), loo([1, 2, 3]))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 10, elements=st.floats(-10, 10)), arrays(float, 10, elements=st.floats(-10, 10)))
    def test_dape_is_mean(self, a, b):
        s = score_diff(loo(a), loo(b))
        assert abs(s.dape - s.scores.mean()) <= 1e-10 * (1 + np.abs(s.scores).max())


class TestMultiplier:
    def test_symmetric(self):
        assert solve_multiplier([-1.0, 1.0]) == 0.0

    def test_one_signed(self):
        with pytest.raises(Infeasible):
            solve_multiplier([2.0, 3.0])

    def test_all_zero(self):
        with pytest.raises(AllZeroScores):
            solve_multiplier([0.0, 0.0])

    def test_closed_form_and_bisection(self):
        x = np.array([-1.0, 3.0])
        lam = solve_multiplier(x)
        assert lam == pytest.approx(1 / 3, abs=1e-12)
        assert lam == pytest.approx(bisect_root(x), abs=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(mixed)
    def test_contract(self, x):
        lam = solve_multiplier(x)
        assert np.all(1 + lam * x > 0)
        assert abs(np.sum(x / (1 + lam * x))) <= 1e-10 * np.abs(x).sum() or abs(lam - bisect_root(x)) < 1e-9
        lo, hi = multiplier_bracket(x.min(), x.max())
        assert lo < lam < hi

    @settings(max_examples=60, deadline=None)
    @given(mixed)
    def test_f_strictly_decreasing(self, x):
        lo, hi = multiplier_bracket(x.min(), x.max())
        grid = lo + (hi - lo) * np.linspace(0.01, 0.99, 100)
        f = np.array([np.sum(x / (1 + g * x)) for g in grid])
        assert np.all(np.diff(f) < 0)


class TestStatistic:
    def test_zero(self):
        r = elr_statistic([-1.0, 1.0])
        assert r.statistic == 0 and r.p_value == 1

    def test_two_point(self):
        r = elr_statistic([-1.0, 3.0])
        assert r.statistic == pytest.approx(2 * math.log(4 / 3), rel=1e-12)
        # the constraint pins the weights to (3/4, 1/4)
        assert r.statistic == pytest.approx(-2 * (math.log(2 * 0.75) + math.log(2 * 0.25)), rel=1e-12)

    def test_grid_maximisation(self):
        x = np.array([-1.0, 1.0, 3.0])
        # feasible weights from sum p = 1 and sum p x = 0: p3 = p1 - 1/2
        p1 = np.linspace(1e-9, 1, 2_000_001)
        p3 = p1 - 0.5
        p2 = 1 - p1 - p3
        ok = (p2 > 0) & (p3 > 0)
        loglik = np.log(3 * p1[ok]) + np.log(3 * p2[ok]) + np.log(3 * p3[ok])
        assert elr_statistic(x).statistic == pytest.approx(-2 * loglik.max(), abs=1e-8)

    def test_infeasible(self):
        r = elr_statistic([5.0, 7.0, 9.0])
        assert r.statistic == math.inf and not r.feasible and r.p_value == 0 and r.multiplier is None

    def test_all_zero(self):
        r = elr_test([0.0, 0.0, 0.0])
        assert r.statistic == 0 and r.decision is Decision.EQUIVALENT

    def test_boundary_zero(self):
        r = elr_statistic([0.0, 1.0, 2.0])
        assert r.statistic == math.inf and r.feasible

    @settings(max_examples=80, deadline=None)
    @given(mixed, st.randoms(use_true_random=False), st.floats(0.01, 100))
    def test_invariances(self, x, rnd, c):
        r = elr_statistic(x)
        assert r.statistic >= 0
        perm = x.copy()
        rnd.shuffle(perm)
        assert elr_statistic(perm).statistic == pytest.approx(r.statistic, abs=1e-9, rel=1e-12)
        neg = elr_statistic(-x)
        assert neg.statistic == pytest.approx(r.statistic, rel=1e-9, abs=1e-10)
        assert neg.multiplier == pytest.approx(-r.multiplier, rel=1e-7, abs=1e-12)
        sc = elr_statistic(c * x)
        assert sc.statistic == pytest.approx(r.statistic, rel=1e-10, abs=1e-10)

    def test_null_calibration(self):
        rng = np.random.default_rng(42)
        R = [elr_statistic(rng.standard_normal(200)).statistic for _ in range(1000)]
        assert scipy.stats.kstest(R, "chi2", args=(1,)).statistic < 0.05


class TestChi2:
    def test_critical_value(self):
        assert 3.83 <= chi2_1_quantile(0.95) <= 3.85
        assert chi2_1_sf(0) == 1.0 and chi2_1_cdf(0) == 0.0

    @pytest.mark.parametrize("u", [0.5, 0.9, 0.99])
    def test_round_trip(self, u):
        assert abs(chi2_1_sf(chi2_1_quantile(u)) - (1 - u)) < 1e-9

    @pytest.mark.parametrize("x", [1e-6, 0.1, 1, 3.84, 10, 40])
    def test_scipy_oracle(self, x):
        assert chi2_1_sf(x) == pytest.approx(scipy.stats.chi2.sf(x, 1), rel=1e-12)
        assert chi2_1_cdf(x) == pytest.approx(scipy.stats.chi2.cdf(x, 1), rel=1e-12)

    @pytest.mark.parametrize("u", [1e-6, 0.01, 0.3, 0.95, 0.999999])
    def test_quantile_oracle(self, u):
        assert chi2_1_quantile(u) == pytest.approx(scipy.stats.chi2.ppf(u, 1), rel=1e-10)

    def test_domain(self):
        for bad in (0.0, 1.0, -0.1, math.nan):
            with pytest.raises(DomainError):
                chi2_1_quantile(bad)
        with pytest.raises(DomainError):
            chi2_1_sf(-1)


class TestPower:
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.10])
    def test_null(self, alpha):
        assert abs(power_approx(0, alpha) - alpha) < 1e-12

    def test_limits_and_value(self):
        assert power_approx(100, 0.05) > 1 - 1e-12
        assert power_approx(2, 0.05) == pytest.approx(0.516, abs=1e-3)
        c = math.sqrt(scipy.stats.chi2.ppf(0.95, 1))
        oracle = 1 - (scipy.stats.norm.cdf(2 + c) - scipy.stats.norm.cdf(2 - c))
        assert power_approx(2, 0.05) == pytest.approx(oracle, rel=1e-12)

    def test_monotone(self):
        p = [power_approx(a, 0.05) for a in np.linspace(0, 6, 200)]
        assert np.all(np.diff(p) >= 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            power_approx(-1, 0.05)


class TestDecide:
    def rep(self, stat, dape):
        return ElrReport(stat, 0.0, chi2_1_sf(stat), True, dape)

    def test_equivalent(self):
        assert decide(self.rep(2.0, 1.0), 0.05).decision is Decision.EQUIVALENT

    def test_prefer_b(self):
        r = decide(self.rep(19.33, 19.36), 0.05)
        assert r.decision is Decision.PREFER_B
        assert r.critical_value == pytest.approx(scipy.stats.chi2.ppf(0.95, 1), rel=1e-12)

    def test_infinite_prefers_a(self):
        assert decide(self.rep(math.inf, -0.5)).decision is Decision.PREFER_A

    def test_tie_break(self):
        assert decide(self.rep(10.0, 0.0)).decision is Decision.TIE_BREAK_UNDEFINED

    def test_nested_action(self):
        assert decide(self.rep(1.0, 0.1), nested=True).action == "drop_variable"
        assert decide(self.rep(9.0, 0.1), nested=True).action == "keep_variable"

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 50), st.floats(-5, 5), st.floats(0.001, 0.5))
    def test_rule(self, stat, dape, alpha):
        r = decide(self.rep(stat, dape), alpha)
        assert (r.decision is Decision.EQUIVALENT) == (stat < chi2_1_quantile(1 - alpha))

    def test_score_vector_from_array(self):
        s = ScoreVector.from_array([-1.0, 3.0])
        assert s.dape == 1.0
        assert elr_test(s).decision is Decision.EQUIVALENT
