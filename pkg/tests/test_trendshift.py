import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amoc import runner
from amoc.errors import DegenerateSegmentWarning, DegenerateVariance, EmptyCropRange, IndexOutOfRange
from amoc.series import crop_range
from amoc.trendshift import (
    cov_dkdl,
    d_process,
    dmax_test,
    f_process,
    fmax_test,
    h_process,
    hmax_test,
    j_process,
    jmax_test,
    joinpoint_beta,
    joinpoint_coefficients,
    joinpoint_weights,
    mu_diff_process,
    two_phase_fit,
    var_mu_diff,
)

series_strategy = arrays(
    float, st.integers(12, 60), elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False)
)


def near_max_ks(x, test, delta, rel):
    """Indices whose statistic is within ``rel`` of the maximum of the trace of ``x``."""
    ks, values = runner.trace(x, test, delta)
    values = np.nan_to_num(np.abs(values), nan=-np.inf)
    return set(ks[values >= values.max() * (1 - 2 * rel)].tolist())


def lstsq_two_phase(x, k):
    n = len(x)
    t = np.arange(1, n + 1, dtype=float)
    left = t <= k
    design = np.column_stack([left, left * t, ~left, ~left * t]).astype(float)
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    sse_full = float(np.sum((x - design @ coef) ** 2))
    red = np.column_stack([np.ones(n), t])
    rcoef, *_ = np.linalg.lstsq(red, x, rcond=None)
    sse_red = float(np.sum((x - red @ rcoef) ** 2))
    return coef, sse_full, sse_red


def lstsq_joinpoint(x, k):
    n = len(x)
    t = np.arange(1, n + 1, dtype=float)
    design = np.column_stack([np.ones(n), t, np.maximum(t - k, 0.0)])
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return coef


def piecewise(n, k, slope1, slope2, noise, seed, jump=0.0):
    t = np.arange(1, n + 1, dtype=float)
    x = slope1 * t + np.where(t > k, (slope2 - slope1) * (t - k) + jump, 0.0)
    return x + noise * np.random.default_rng(seed).standard_normal(n)


class TestMuDiff:
    def test_var_examples(self):
        assert var_mu_diff(4, 2) == pytest.approx(0.2, rel=1e-14)
        assert var_mu_diff(4, 1) == pytest.approx(0.53333, abs=5e-6)

    @given(st.integers(3, 500), st.data())
    def test_var_symmetry(self, n, data):
        k = data.draw(st.integers(1, n - 1))
        assert var_mu_diff(n, k) == pytest.approx(var_mu_diff(n, n - k), rel=1e-12)

    def test_cov_examples(self):
        assert cov_dkdl(4, 1, 2) == pytest.approx(-1 / math.sqrt(6), rel=1e-12)
        assert cov_dkdl(30, 7, 7) == pytest.approx(1.0, rel=1e-14)
        assert cov_dkdl(30, 20, 7) == cov_dkdl(30, 7, 20)

    def test_cov_bounds(self):
        with pytest.raises(IndexOutOfRange):
            cov_dkdl(10, 0, 3)

    def test_mu_diff_matches_segment_intercepts(self):
        x = np.random.default_rng(2).standard_normal(25)
        t = np.arange(1, 26)
        alpha = np.polyfit(t, x, 1)[0]
        diff = mu_diff_process(x)
        for k in (1, 5, 12, 24):
            left = np.mean(x[:k] - alpha * t[:k])
            right = np.mean(x[k:] - alpha * t[k:])
            assert diff[k - 1] == pytest.approx(right - left, rel=1e-10, abs=1e-12)

    def test_var_monte_carlo(self):
        n, k, reps = 100, 30, 20_000
        rng = np.random.default_rng(11)
        vals = np.array([mu_diff_process(rng.standard_normal(n))[k - 1] for _ in range(reps)])
        var = vals.var(ddof=1)
        se = var * math.sqrt(2 / (reps - 1))
        assert abs(var - var_mu_diff(n, k)) < 3 * se


class TestDmax:
    def test_exact_line(self):
        with pytest.raises(DegenerateVariance):
            dmax_test(3 + 0.5 * np.arange(1, 21))

    def test_recovers_jump(self):
        x = piecewise(20, 10, 0.5, 0.5, 1e-3, seed=1, jump=2.0)
        out = dmax_test(x, delta=0.05)
        brute = np.abs(d_process(x))
        assert out.tau_hat == 10 == int(np.argmax(brute)) + 1

    def test_trend_invariance(self):
        x = np.random.default_rng(3).standard_normal(40)
        t = np.arange(1, 41)
        a, b = dmax_test(x), dmax_test(x + (5 - 0.3 * t))
        assert b.statistic == pytest.approx(a.statistic, rel=1e-10)
        assert b.tau_hat == a.tau_hat

    def test_empty_crop(self):
        with pytest.raises(EmptyCropRange):
            dmax_test([0.0, 1.0, 0.5, 2.0, 1.0], delta=0.45)


class TestHmax:
    def test_exact_line(self):
        with pytest.raises(DegenerateVariance):
            hmax_test(np.arange(10.0))

    def test_hand_example(self):
        out = hmax_test([1, 0, 1, 0])
        assert out.statistic == pytest.approx(0.4 / (math.sqrt(0.4) * 2), rel=1e-12)
        assert out.statistic == pytest.approx(0.31623, abs=5e-6)
        assert out.tau_hat == 2
        assert h_process([1, 0, 1, 0])[-1] == 0.0

    def test_trend_invariance(self):
        x = np.random.default_rng(4).standard_normal(35)
        t = np.arange(1, 36)
        a, b = hmax_test(x), hmax_test(x - 7 + 2.5 * t)
        assert b.statistic == pytest.approx(a.statistic, rel=1e-10)


class TestTwoPhase:
    def test_exact_line(self):
        x = 1.0 + 0.25 * np.arange(1, 13)
        fit = two_phase_fit(x, 6)
        assert fit.sse_full == pytest.approx(0.0, abs=1e-20)
        assert fit.sse_red == pytest.approx(0.0, abs=1e-20)
        for mu, alpha in ((fit.mu1, fit.alpha1), (fit.mu2, fit.alpha2)):
            assert mu == pytest.approx(1.0) and alpha == pytest.approx(0.25)

    @pytest.mark.parametrize("k", [1, 11])
    def test_bounds(self, k):
        with pytest.raises(IndexOutOfRange):
            two_phase_fit(np.arange(12.0), k)

    def test_oracle(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            x = rng.standard_normal(30) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
            k = int(rng.integers(2, 29))
            fit = two_phase_fit(x, k)
            coef, sse_full, sse_red = lstsq_two_phase(x, k)
            np.testing.assert_allclose([fit.mu1, fit.alpha1, fit.mu2, fit.alpha2], coef, rtol=1e-8, atol=1e-10)
            assert fit.sse_full == pytest.approx(sse_full, rel=1e-8)
            assert fit.sse_red == pytest.approx(sse_red, rel=1e-8)

    def test_f_matches_fit(self):
        x = np.random.default_rng(8).standard_normal(50)
        ks, f = f_process(x)
        for k, fk in zip(ks, f):
            _, sse_full, sse_red = lstsq_two_phase(x, int(k))
            oracle = ((sse_red - sse_full) / 2) / (sse_full / 46)
            assert fk == pytest.approx(oracle, rel=1e-8)
            assert fk == pytest.approx(two_phase_fit(x, int(k)).f_statistic, rel=1e-8)

    @settings(max_examples=100)
    @given(series_strategy)
    def test_nesting(self, x):
        assume(np.ptp(x) > 1e-3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ks, f = f_process(x)
        assert np.all(f[~np.isnan(f)] >= -1e-9)
        for k in ks[:: max(1, ks.size // 5)]:
            fit = two_phase_fit(x, int(k))
            assert fit.sse_red >= fit.sse_full - 1e-9 * max(1.0, fit.sse_red)


class TestFmax:
    def test_recovers_break(self):
        x = piecewise(60, 35, 0.1, 0.6, 1e-3, seed=12, jump=3.0)
        out = fmax_test(x, delta=0.05)
        ks, f = f_process(x, crop_range(60, 0.05, lo=2, hi=58))
        assert out.tau_hat == 35 == int(ks[np.nanargmax(f)])
        assert out.fit.k == 35
        assert out.fit.alpha2 == pytest.approx(0.6, abs=1e-3)

    def test_range_rule(self):
        x = np.random.default_rng(9).standard_normal(20)
        ks, _ = f_process(x, crop_range(20, 0.01, lo=2, hi=18))
        assert ks[0] == 2 and ks[-1] == 18

    def test_short(self):
        with pytest.raises(ValueError):
            fmax_test(np.arange(5.0) ** 2)

    def test_degenerate_split_skipped(self):
        # Two exact lines: the split at the true break fits perfectly.
        x = np.r_[np.arange(1.0, 6.0), 10.0 + 3 * np.arange(1.0, 6.0)]
        with pytest.warns(DegenerateSegmentWarning):
            out = fmax_test(x, delta=0.05)
        assert 5 in out.excluded


class TestJoinpoint:
    def test_coefficient_closed_forms(self):
        for n, k in ((10, 4), (174, 121), (2000, 1000)):
            a, b, c, d, e, M = joinpoint_coefficients(n, k)
            t = np.arange(1, n + 1)
            u = np.maximum(t - k, 0)
            assert a == n * (n + 1) // 2 == int(t.sum())
            assert c == n * (n + 1) * (2 * n + 1) // 6 == int((t * t).sum())
            assert (b, d, e) == (int(u.sum()), int((u * t).sum()), int((u * u).sum()))
            gram = np.array([[n, a, b], [a, c, d], [b, d, e]], dtype=object)
            det = (
                gram[0, 0] * (gram[1, 1] * gram[2, 2] - gram[1, 2] ** 2)
                - gram[0, 1] * (gram[0, 1] * gram[2, 2] - gram[1, 2] * gram[0, 2])
                + gram[0, 2] * (gram[0, 1] * gram[1, 2] - gram[1, 1] * gram[0, 2])
            )
            assert M == -n * det

    def test_exact_line(self):
        t = np.arange(1, 41, dtype=float)
        x = 3.0 - 0.7 * t
        for k in range(2, 39):
            assert abs(joinpoint_beta(x, k).beta_hat) <= 1e-10 * np.abs(x).max()

    def test_three_term_representation(self):
        x = np.random.default_rng(14).standard_normal(40)
        fit = joinpoint_beta(x, 17)
        a, b, c, d, e, M = fit.a, fit.b, fit.c, fit.d, fit.e, fit.M
        n = 40
        beta = ((b * c - a * d) * n * fit.v1 + (d * n - a * b) * n * fit.v2 + (a * a - c * n) * n * fit.v3) / M
        assert fit.beta_hat == pytest.approx(beta, rel=1e-10)
        assert fit.beta_hat == pytest.approx(joinpoint_weights(40, 17) @ x, rel=1e-10)

    def test_oracle(self):
        rng = np.random.default_rng(40)
        for _ in range(100):
            x = rng.standard_normal(40) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
            k = int(rng.integers(2, 39))
            fit = joinpoint_beta(x, k)
            mu, alpha, beta = lstsq_joinpoint(x, k)
            assert fit.beta_hat == pytest.approx(beta, rel=1e-8, abs=1e-12)
            assert fit.mu_hat == pytest.approx(mu, rel=1e-8, abs=1e-12)
            assert fit.alpha_hat == pytest.approx(alpha, rel=1e-8, abs=1e-12)

    def test_exact_variance_matches_weights(self):
        for n, k in ((20, 5), (100, 50), (174, 121)):
            w = joinpoint_weights(n, k)
            assert joinpoint_beta(np.zeros(n) + np.arange(n), k).var_beta_exact == pytest.approx(w @ w, rel=1e-12)

    def test_variance_limit(self):
        n = 2000
        var = joinpoint_beta(np.arange(n, dtype=float) % 7, n // 2).var_beta_exact
        assert var * n**3 == pytest.approx(3 / (0.5**3 * 0.5**3), rel=0.05)

    def test_variance_monte_carlo(self):
        n, k, reps = 100, 50, 20_000
        w = joinpoint_weights(n, k)
        rng = np.random.default_rng(15)
        betas = np.array([joinpoint_beta(rng.standard_normal(n), k).beta_hat for _ in range(reps)])
        var = betas.var(ddof=1)
        se = var * math.sqrt(2 / (reps - 1))
        assert abs(var - w @ w) < 3 * se

    def test_segments_meet_at_knot(self):
        x = np.random.default_rng(16).standard_normal(30)
        seg = joinpoint_beta(x, 12).segments()
        left = seg["left_intercept"] + seg["left_slope"] * 12
        right = seg["right_intercept"] + seg["right_slope"] * 12
        assert left == pytest.approx(right, rel=1e-12)

    @pytest.mark.parametrize("k", [1, 39])
    def test_bounds(self, k):
        with pytest.raises(IndexOutOfRange):
            joinpoint_beta(np.arange(40.0), k)


class TestJmax:
    def test_exact_line(self):
        with pytest.raises(DegenerateVariance):
            jmax_test(2.0 + 0.1 * np.arange(30))

    def test_recovers_knot(self):
        x = piecewise(60, 25, 0.05, 0.5, 1e-3, seed=17)
        out = jmax_test(x)
        ks, j = j_process(x, crop_range(60, 0.05, lo=2, hi=58))
        assert out.tau_hat == 25 == int(ks[np.argmax(np.abs(j))])
        seg = out.fit.segments()
        assert seg["left_slope"] == pytest.approx(0.05, abs=1e-3)
        assert seg["right_slope"] == pytest.approx(0.5, abs=1e-3)


class TestLineInvariance:
    @settings(max_examples=60, deadline=None)
    @given(
        series_strategy,
        st.floats(-100, 100),
        st.floats(-5, 5),
        st.floats(0.05, 20),
        st.booleans(),
    )
    def test_all_trend_tests(self, x, a, b, c, flip):
        t = np.arange(1, x.size + 1)
        assume(np.std(x - np.polyval(np.polyfit(t, x, 1), t)) > 1e-2)
        c = -c if flip else c
        y = c * (x + a + b * t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for name, fn in (("dmax", dmax_test), ("hmax", hmax_test), ("fmax", fmax_test), ("jmax", jmax_test)):
                p, q = fn(x), fn(y)
                assert q.statistic == pytest.approx(p.statistic, rel=1e-9)
                # exact ties in x may be split either way by rounding in y
                assert q.tau_hat in near_max_ks(x, name, 0.05, 1e-9)
