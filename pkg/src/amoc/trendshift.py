"""Single trend-shift tests on ``x_t = mu + alpha t + noise``.

Four alternatives are covered:

* ``dmax``: intercept shift under a common slope, studentized difference of
  segment intercepts;
* ``hmax``: CUSUM of the null-fit residuals (no cropping);
* ``fmax``: two-phase regression, maximal Chow-type F statistic;
* ``jmax``: joinpoint model, slope change with the two lines meeting at k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateSegment,
    DegenerateSegmentWarning,
    IndexOutOfRange,
    SingularDesign,
)
from .series import as_series, crop_range, first_argmax, ols_line_fit

TRENDSHIFT_TESTS = ("dmax", "hmax", "fmax", "jmax")


@dataclass(frozen=True)
class TwoPhaseFit:
    k: int
    n: int
    mu1: float
    alpha1: float
    mu2: float
    alpha2: float
    mu_red: float
    alpha_red: float
    sse_full: float
    sse_red: float

    @property
    def f_statistic(self) -> float:
        return ((self.sse_red - self.sse_full) / 2.0) / (self.sse_full / (self.n - 4))

    def segments(self) -> dict[str, float]:
        return {
            "left_intercept": self.mu1,
            "left_slope": self.alpha1,
            "right_intercept": self.mu2,
            "right_slope": self.alpha2,
        }


@dataclass(frozen=True)
class JoinpointFit:
    """Joinpoint estimates at a fixed knot ``k``.

    ``var_beta_exact`` is the variance of ``beta_hat`` for unit noise
    variance, computed from the exact linear weights. ``mu_hat`` and
    ``alpha_hat`` complete the joint least squares solution.
    """

    k: int
    beta_hat: float
    var_beta_exact: float
    mu_hat: float
    alpha_hat: float
    a: int
    b: int
    c: int
    d: int
    e: int
    M: int
    v1: float
    v2: float
    v3: float

    def segments(self) -> dict[str, float]:
        right_slope = self.alpha_hat + self.beta_hat
        return {
            "left_intercept": self.mu_hat,
            "left_slope": self.alpha_hat,
            "right_intercept": self.mu_hat - self.beta_hat * self.k,
            "right_slope": right_slope,
        }


@dataclass(frozen=True)
class TrendShiftOutcome:
    test: str
    statistic: float
    tau_hat: int
    n: int
    delta: float = 0.0
    fit: TwoPhaseFit | JoinpointFit | None = None
    excluded: tuple[int, ...] = ()


# -- intercept shift under a common slope ------------------------------------


def var_mu_diff(n: int, k):
    """Unit-variance ``Var(mu_hat_{k+1:n} - mu_hat_{1:k})``; ``k`` may be an array."""
    k = np.asarray(k, dtype=float)
    out = 1.0 / (n - k) + 1.0 / k - 3.0 * n / ((n + 1.0) * (n - 1.0))
    return float(out) if out.ndim == 0 else out


def cov_dkdl(n: int, k: int, l: int) -> float:
    """Null correlation of ``D_k`` and ``D_l``."""
    if k > l:
        k, l = l, k
    if not 1 <= k <= l < n:
        raise IndexOutOfRange(f"need 1 <= k <= l < n, got k={k}, l={l}, n={n}")
    num = n / ((n - k) * l) - 3.0 * n / ((n + 1.0) * (n - 1.0))
    return num / math.sqrt(var_mu_diff(n, k) * var_mu_diff(n, l))


def mu_diff_process(x) -> np.ndarray:
    """``mu_hat_{k+1:n} - mu_hat_{1:k}`` for ``k = 1..n-1`` with the full-sample slope."""
    values = as_series(x).values
    n = values.size
    fit = ols_line_fit(values)
    c = values - values.mean()
    k = np.arange(1, n)
    head = np.cumsum(c)[:-1]
    tail = -head  # centered data sum to zero
    mu_left = head / k - fit.alpha_hat * (k + 1) / 2.0
    mu_right = tail / (n - k) - fit.alpha_hat * (n + k + 1) / 2.0
    return mu_right - mu_left


def d_process(x) -> np.ndarray:
    """Studentized intercept differences ``D_k``, ``k = 1..n-1``."""
    values = as_series(x).values
    n = values.size
    sigma = ols_line_fit(values).require_variance()
    k = np.arange(1, n)
    return mu_diff_process(values) / (sigma * np.sqrt(var_mu_diff(n, k)))


def dmax_test(x, delta: float = 0.05) -> TrendShiftOutcome:
    series = as_series(x)
    ks = crop_range(series.n, delta)
    d = np.abs(d_process(series))[ks - 1]
    i = first_argmax(d)
    return TrendShiftOutcome("dmax", float(d[i]), int(ks[i]), series.n, delta)


# -- residual CUSUM ----------------------------------------------------------


def h_process(x) -> np.ndarray:
    """Residual CUSUM ``sum_{t<=k} eps_t / (sigma_eps sqrt(n))`` for ``k = 1..n``."""
    values = as_series(x).values
    fit = ols_line_fit(values)
    sigma = fit.require_variance()
    trace = np.cumsum(fit.residuals) / (sigma * math.sqrt(values.size))
    trace[-1] = 0.0
    return trace


def hmax_test(x) -> TrendShiftOutcome:
    series = as_series(x)
    h = np.abs(h_process(series)[:-1])
    i = first_argmax(h)
    return TrendShiftOutcome("hmax", float(h[i]), i + 1, series.n)


# -- two-phase regression ----------------------------------------------------


def _segment_line(t: np.ndarray, x: np.ndarray) -> tuple[float, float, float]:
    tbar = t.mean()
    xbar = x.mean()
    alpha = float(t @ (x - xbar)) / float(((t - tbar) ** 2).sum())
    mu = xbar - alpha * tbar
    r = x - mu - alpha * t
    return mu, alpha, float(r @ r)


def two_phase_fit(x, k: int) -> TwoPhaseFit:
    """Separate least squares lines on ``1..k`` and ``k+1..n`` plus the pooled line."""
    values = as_series(x).values
    n = values.size
    if not 2 <= k <= n - 2:
        raise IndexOutOfRange(f"two-phase fit needs 2 <= k <= n-2, got k={k}, n={n}")
    t = np.arange(1, n + 1, dtype=float)
    mu1, a1, sse1 = _segment_line(t[:k], values[:k])
    mu2, a2, sse2 = _segment_line(t[k:], values[k:])
    red = ols_line_fit(values)
    sse_red = float(red.residuals @ red.residuals)
    return TwoPhaseFit(
        k, n, mu1, a1, mu2, a2, red.mu_hat, red.alpha_hat, sse1 + sse2, sse_red
    )


def _prefix_sse(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Residual sum of squares of a line fitted to the first j points, j = 1..n,
    # accumulated from recursive residuals: point j is predicted from the line
    # through points 1..j-1 and adds e^2 / (1 + 1/(j-1) + (t_j - tbar)^2 / Ctt).
    # The increments are non-negative, so near-exact fits keep their digits
    # (Sxx - Sxy^2 / Stt cancels there).
    j = np.arange(1, t.size + 1, dtype=float)
    mt, mx = np.cumsum(t) / j, np.cumsum(x) / j
    dt, dx = t[1:] - mt[:-1], x[1:] - mx[:-1]
    w = (j[1:] - 1) / j[1:]
    ctt = np.r_[0.0, np.cumsum(w * dt * dt)]
    ctx = np.r_[0.0, np.cumsum(w * dt * dx)]
    # prediction of point p (0-based, p >= 2) from the first p points
    p = np.arange(2, t.size)
    lever = t[p] - mt[p - 1]
    resid = x[p] - (mx[p - 1] + ctx[p - 1] / ctt[p - 1] * lever)
    inc = resid**2 / (1.0 + 1.0 / p + lever**2 / ctt[p - 1])
    return np.r_[0.0, 0.0, np.cumsum(inc)]


def f_process(x, ks=None) -> tuple[np.ndarray, np.ndarray]:
    """``F_k`` at the indices ``ks`` (default ``2..n-2``).

    Returns ``(ks, F)``; entries with an exact two-phase fit are NaN.
    """
    values = as_series(x).values
    n = values.size
    if n < 6:
        raise ValueError(f"two-phase test needs n >= 6, got {n}")
    ks = np.arange(2, n - 1) if ks is None else np.asarray(ks)
    if ks.min() < 2 or ks.max() > n - 2:
        raise IndexOutOfRange("two-phase candidates must lie in 2..n-2")
    # Centering keeps the running sums well conditioned.
    t = np.arange(1, n + 1, dtype=float) - (n + 1) / 2.0
    c = values - values.mean()
    left = _prefix_sse(t, c)
    right = _prefix_sse(t[::-1], c[::-1])[::-1]
    sse_full = left[ks - 1] + right[ks]
    red = ols_line_fit(values)
    sse_red = float(red.residuals @ red.residuals)
    out = np.full(ks.size, np.nan)
    ok = sse_full > 1e-13 * max(sse_red, float(c @ c))
    out[ok] = ((sse_red - sse_full[ok]) / 2.0) / (sse_full[ok] / (n - 4))
    return ks, out


def fmax_test(x, delta: float = 0.05) -> TrendShiftOutcome:
    """Maximal two-phase F statistic over the cropped range intersected with ``2..n-2``."""
    series = as_series(x)
    n = series.n
    if n < 6:
        raise ValueError(f"two-phase test needs n >= 6, got {n}")
    ks = crop_range(n, delta, lo=2, hi=n - 2)
    ks, f = f_process(series, ks)
    bad = np.isnan(f)
    if bad.all():
        raise DegenerateSegment("every candidate split fits exactly")
    excluded = tuple(int(k) for k in ks[bad])
    if excluded:
        warnings.warn(
            f"Fmax skipped exact two-phase fits at k={list(excluded)}",
            DegenerateSegmentWarning,
            stacklevel=2,
        )
    i = first_argmax(np.where(bad, -np.inf, f))
    k = int(ks[i])
    return TrendShiftOutcome(
        "fmax", float(f[i]), k, n, delta, two_phase_fit(series, k), excluded
    )


# -- joinpoint ---------------------------------------------------------------


@lru_cache(maxsize=4096)
def joinpoint_coefficients(n: int, k: int) -> tuple[int, int, int, int, int, int]:
    """Exact integer ``(a, b, c, d, e, M)`` of the joinpoint slope-change estimator."""
    m = n - k
    a = n * (n + 1) // 2
    c = n * (n + 1) * (2 * n + 1) // 6
    b = m * (m + 1) // 2
    e = m * (m + 1) * (2 * m + 1) // 6
    d = e + k * b  # sum_{t>k} (t-k) t
    # Equals -n det of the normal matrix [[n, a, b], [a, c, d], [b, d, e]].
    M = (d * n - a * b) ** 2 - (b * b - n * e) * (a * a - n * c)
    return a, b, c, d, e, M


@lru_cache(maxsize=4096)
def _joinpoint_weight_terms(n: int, k: int) -> tuple[float, float, float, float]:
    # beta_hat = sum_t w_t x_t with w_t = p + q t + r (t-k)_+; also returns sum w_t^2.
    a, b, c, d, e, M = joinpoint_coefficients(n, k)
    if M == 0:
        raise SingularDesign(f"joinpoint design is singular at k={k}, n={n}")
    A, B, C = (b * c - a * d) * n, (d * n - a * b) * n, (a * a - c * n) * n
    ssq = A * A * n + B * B * c + C * C * e + 2 * (A * B * a + A * C * b + B * C * d)
    var = Fraction(ssq, M * M)
    return float(Fraction(A, M)), float(Fraction(B, M)), float(Fraction(C, M)), float(var)


def joinpoint_weights(n: int, k: int) -> np.ndarray:
    """Linear weights ``w`` with ``beta_hat_k = w @ x``."""
    p, q, r, _ = _joinpoint_weight_terms(n, k)
    t = np.arange(1, n + 1, dtype=float)
    return p + q * t + r * np.maximum(t - k, 0.0)


def joinpoint_beta(x, k: int) -> JoinpointFit:
    """Slope change estimate at knot ``k`` from its three-sum representation."""
    values = as_series(x).values
    n = values.size
    if not 2 <= k <= n - 2:
        raise IndexOutOfRange(f"joinpoint needs 2 <= k <= n-2, got k={k}, n={n}")
    a, b, c, d, e, M = joinpoint_coefficients(n, k)
    p, q, r, var = _joinpoint_weight_terms(n, k)
    t = np.arange(1, n + 1, dtype=float)
    u = np.maximum(t - k, 0.0)
    v1, v2, v3 = float(values.sum()), float(t @ values), float(u @ values)
    beta = p * v1 + q * v2 + r * v3
    # Remaining normal equations: [[n, a], [a, c]] (mu, alpha) = (v1 - b beta, v2 - d beta).
    r1, r2 = v1 - b * beta, v2 - d * beta
    det = float(n * c - a * a)
    mu = (c * r1 - a * r2) / det
    alpha = (n * r2 - a * r1) / det
    return JoinpointFit(k, beta, var, mu, alpha, a, b, c, d, e, M, v1, v2, v3)


def j_process(x, ks=None) -> tuple[np.ndarray, np.ndarray]:
    """Studentized slope changes ``J_k`` at ``ks`` (default ``2..n-2``)."""
    values = as_series(x).values
    n = values.size
    ks = np.arange(2, n - 1) if ks is None else np.asarray(ks)
    if ks.min() < 2 or ks.max() > n - 2:
        raise IndexOutOfRange("joinpoint candidates must lie in 2..n-2")
    sigma = ols_line_fit(values).require_variance()
    c = values - values.mean()
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        w = joinpoint_weights(n, int(k))
        out[i] = (w @ c) / (sigma * math.sqrt(_joinpoint_weight_terms(n, int(k))[3]))
    return ks, out


def jmax_test(x, delta: float = 0.05) -> TrendShiftOutcome:
    series = as_series(x)
    n = series.n
    ks = crop_range(n, delta, lo=2, hi=n - 2)
    ks, j = j_process(series, ks)
    j = np.abs(j)
    i = first_argmax(j)
    k = int(ks[i])
    return TrendShiftOutcome("jmax", float(j[i]), k, n, delta, joinpoint_beta(series, k))
