"""Single mean-shift tests: Zmax, CUSUM, SCUSUM, likelihood ratio and SNHT.

Every ``*_process`` function returns the per-index statistic for
``k = 1, ..., n-1`` (position ``k - 1`` of the array); the ``*_test``
functions reduce a process to its maximum and estimated changepoint.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegment, DegenerateSegmentWarning, DegenerateVariance
from .series import as_series, crop_range, first_argmax, sigma_hat_null

MEANSHIFT_TESTS = ("zmax", "cusum_max", "scusum", "lrt", "snht")


@dataclass(frozen=True)
class CusumTrace:
    """``CUSUM_1, ..., CUSUM_n``; ``scale`` is the divisor applied (1 if raw)."""

    values: np.ndarray
    standardized: bool
    scale: float = 1.0


@dataclass(frozen=True)
class MeanShiftOutcome:
    test: str
    statistic: float
    tau_hat: int
    n: int
    delta: float = 0.0
    sigma_known: float | None = None
    excluded: tuple[int, ...] = ()

    @property
    def sigma_mode(self) -> str:
        return "estimated" if self.sigma_known is None else "known"


def _scale(values: np.ndarray, sigma: float | None) -> float:
    if sigma is None:
        return math.sqrt(sigma_hat_null(values))
    if not sigma > 0:
        raise DegenerateVariance(f"known sigma must be positive, got {sigma}")
    return float(sigma)


def cusum_process(x, standardize: bool = False, sigma: float | None = None) -> CusumTrace:
    """CUSUM process ``(S_k - (k/n) S_n) / sqrt(n)`` for ``k = 1..n``.

    With ``sigma`` given the trace is divided by it; otherwise, when
    ``standardize`` is set, by the null sample standard deviation.
    """
    values = as_series(x).values
    n = values.size
    centered = values - values.mean()
    # Subtracting (k/n) S_n on the centered values cancels the drift k * e
    # that a rounding error e in the mean would otherwise leave.
    partial = np.cumsum(centered)
    trace = (partial - np.arange(1, n + 1) / n * partial[-1]) / math.sqrt(n)
    trace[-1] = 0.0
    scale = 1.0
    if sigma is not None or standardize:
        scale = _scale(values, sigma)
        trace /= scale
    return CusumTrace(trace, sigma is not None or standardize, scale)


def z_process(x, sigma: float | None = None) -> np.ndarray:
    """Two-sample statistics ``Z_k`` built from the segment means directly."""
    values = as_series(x).values
    n = values.size
    s = _scale(values, sigma)
    k = np.arange(1, n)
    centered = values - values.mean()
    head = np.cumsum(centered)[:-1]
    tail = centered.sum() - head
    diff = head / k - tail / (n - k)
    return diff / (s * np.sqrt(1.0 / k + 1.0 / (n - k)))


def lambda_process(x) -> np.ndarray:
    """Squared, variance-scaled CUSUM ``CUSUM_k^2 / ((k/n)(1 - k/n))``."""
    trace = cusum_process(x).values[:-1]
    n = trace.size + 1
    frac = np.arange(1, n) / n
    return trace**2 / (frac * (1.0 - frac))


def zmax_test(x, delta: float = 0.05, sigma: float | None = None) -> MeanShiftOutcome:
    """Cropped maximum of ``|Z_k|`` over ``ceil(n delta) <= k <= floor(n (1-delta))``."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"Zmax needs 0 < delta < 0.5, got {delta}")
    series = as_series(x)
    ks = crop_range(series.n, delta)
    z = np.abs(z_process(series, sigma))[ks - 1]
    i = first_argmax(z)
    return MeanShiftOutcome("zmax", float(z[i]), int(ks[i]), series.n, delta, sigma)


def cusum_max_test(x, sigma: float | None = None) -> MeanShiftOutcome:
    series = as_series(x)
    trace = np.abs(cusum_process(series, standardize=True, sigma=sigma).values[:-1])
    i = first_argmax(trace)
    return MeanShiftOutcome("cusum_max", float(trace[i]), i + 1, series.n, 0.0, sigma)


def scusum_test(x, sigma: float | None = None) -> MeanShiftOutcome:
    """Average squared standardized CUSUM; location from the CUSUM argmax."""
    series = as_series(x)
    trace = cusum_process(series, standardize=True, sigma=sigma).values
    stat = float(trace @ trace) / series.n
    i = first_argmax(np.abs(trace[:-1]))
    return MeanShiftOutcome("scusum", stat, i + 1, series.n, 0.0, sigma)


def _prefix_sse(c: np.ndarray) -> np.ndarray:
    # SSE of c[:k] about its own mean for k = 1..n via the Welford increments
    # ((k-1)/k) (c_k - mean_{k-1})^2, which are non-negative and avoid the
    # cancellation of sum(c^2) - (sum c)^2 / k near exact fits.
    k = np.arange(1, c.size + 1)
    means = np.cumsum(c) / k
    inc = np.zeros_like(c)
    inc[1:] = (k[1:] - 1) / k[1:] * (c[1:] - means[:-1]) ** 2
    return np.cumsum(inc)


def _split_sse(values: np.ndarray) -> tuple[float, np.ndarray]:
    # Sum of squares about the overall mean, and about the two segment means
    # for each split k = 1..n-1.
    c = values - values.mean()
    total = float(c @ c)
    left = _prefix_sse(c)[:-1]
    right = _prefix_sse(c[::-1])[::-1][1:]
    return total, left + right


def lrt_process(x) -> np.ndarray:
    """``-2 ln Lambda_k = n ln(sigma2_H0 / sigma2_Hk)`` with MLE (1/n) variances.

    Indices where the split fit is exact (both segments constant, so
    ``sigma2_Hk == 0``) are returned as NaN.
    """
    values = as_series(x).values
    n = values.size
    total, split = _split_sse(values)
    if total <= 0.0:
        raise DegenerateVariance("series is constant")
    # Decided on equality of values, not a rounding threshold, so the set of
    # skipped splits is invariant under x -> a x + b.
    same = values[1:] == values[:-1]
    left_const = np.cumprod(np.r_[True, same[:-1]]).astype(bool)
    right_const = np.cumprod(np.r_[same[1:], True][::-1])[::-1].astype(bool)
    degenerate = (left_const & right_const) | (split <= 0.0)
    out = np.full(n - 1, np.nan)
    ok = ~degenerate
    out[ok] = n * np.log(total / split[ok])
    return out


def lrt_known_variance_process(x, sigma: float = 1.0) -> np.ndarray:
    """``-2 ln Lambda_k`` when the noise variance is known: ``(SSE_0 - SSE_k) / sigma^2``."""
    total, split = _split_sse(as_series(x).values)
    return (total - split) / sigma**2


def lrt_test(x, delta: float | None = None) -> MeanShiftOutcome:
    """Maximal Gaussian log-likelihood ratio ``l_max``.

    Without ``delta`` every ``1 <= k < n`` is a candidate. Candidates with an
    exact two-segment fit are skipped with a :class:`DegenerateSegmentWarning`.
    """
    series = as_series(x)
    n = series.n
    if n < 4:
        raise ValueError(f"LRT needs n >= 4, got {n}")
    ks = crop_range(n, delta or 0.0)
    ell = lrt_process(series)[ks - 1]
    bad = np.isnan(ell)
    excluded = tuple(int(k) for k in ks[bad])
    if bad.all():
        raise DegenerateSegment("every candidate split has zero residual variance")
    if excluded:
        warnings.warn(
            f"LRT skipped degenerate splits k={list(excluded)}",
            DegenerateSegmentWarning,
            stacklevel=2,
        )
    i = first_argmax(np.where(bad, -np.inf, ell))
    return MeanShiftOutcome(
        "lrt", float(ell[i]), int(ks[i]), n, delta or 0.0, None, excluded
    )


def snht_process(x) -> np.ndarray:
    """``k xbar_{1:k}^2 + (n-k) xbar_{k+1:n}^2`` on the data as given (unit variance assumed)."""
    values = as_series(x).values
    n = values.size
    k = np.arange(1, n)
    head = np.cumsum(values)[:-1]
    tail = values.sum() - head
    return head**2 / k + tail**2 / (n - k)


def snht_test(x) -> MeanShiftOutcome:
    series = as_series(x)
    snht = snht_process(series)
    i = first_argmax(snht)
    return MeanShiftOutcome("snht", float(snht[i]), i + 1, series.n)
