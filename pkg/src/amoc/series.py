"""Time-series container and the null-hypothesis estimators shared by all tests.

Time indices run over ``t = 1, ..., n`` everywhere; calendar labels are only
carried along for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegenerateVariance, EmptyCropRange, IndexOutOfRange

# Slack used when turning n*delta into integer crop bounds, so that e.g.
# 100 * 0.07 = 7.000000000000001 still rounds to 7.
_CROP_EPS = 1e-9


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real observations with optional calendar labels.

    Parameters
    ----------
    values : array_like
        Observations ``x_1, ..., x_n`` (at least two, all finite).
    labels : sequence, optional
        Strictly increasing calendar labels (e.g. years), one per value.
    name : str, optional
        Identifier used in reports.
    """

    values: np.ndarray
    labels: tuple[Any, ...] | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if values.size < 2:
            raise ValueError(f"need at least 2 observations, got {values.size}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0]) + 1
            raise ValueError(f"non-finite observation at t={bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != values.size:
                raise ValueError(
                    f"{len(labels)} labels for {values.size} observations"
                )
            for i in range(1, len(labels)):
                if not labels[i] > labels[i - 1]:
                    raise ValueError(
                        f"labels not strictly increasing at position {i + 1}"
                    )
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def label(self, k: int) -> Any:
        """Calendar label of 1-based index ``k`` (the index itself if unlabeled)."""
        if not 1 <= k <= self.n:
            raise IndexOutOfRange(f"index {k} outside 1..{self.n}")
        return k if self.labels is None else self.labels[k - 1]


def as_series(x) -> TimeSeries:
    """Coerce an array-like or :class:`TimeSeries` to a :class:`TimeSeries`."""
    return x if isinstance(x, TimeSeries) else TimeSeries(x)


@dataclass(frozen=True)
class SegmentMean:
    start: int
    end: int
    mean: float


@dataclass(frozen=True)
class TrendFit:
    """Least squares line ``mu_hat + alpha_hat * t`` fitted over ``t = 1..n``."""

    mu_hat: float
    alpha_hat: float
    residuals: np.ndarray
    sigma_eps_hat: float

    def require_variance(self) -> float:
        """Return ``sigma_eps_hat``, raising if the data lie exactly on a line."""
        if self.sigma_eps_hat == 0.0:
            raise DegenerateVariance("residuals are identically zero (exact line)")
        return self.sigma_eps_hat


def segment_mean(x, a: int, b: int) -> SegmentMean:
    """Mean of ``x_a, ..., x_b`` (1-based, inclusive)."""
    x = as_series(x)
    if not 1 <= a <= b <= x.n:
        raise IndexOutOfRange(f"segment [{a}, {b}] outside 1..{x.n}")
    return SegmentMean(a, b, float(np.mean(x.values[a - 1 : b])))


def sigma_hat_null(x) -> float:
    """Null-hypothesis variance estimate with the ``n - 1`` divisor.

    Returns the variance (not the standard deviation). Raises
    :class:`DegenerateVariance` for a constant series.
    """
    values = as_series(x).values
    # Anchoring at x_1 first makes the result bit-identical under exact shifts.
    anchored = values - values[0]
    centered = anchored - anchored.mean()
    s2 = float(centered @ centered) / (values.size - 1)
    if s2 == 0.0 or s2 <= _relative_floor(values):
        raise DegenerateVariance("sample variance is zero (constant series)")
    return s2


def ols_line_fit(x) -> TrendFit:
    """Fit ``x_t = mu + alpha * t`` by least squares in closed form.

    The slope is ``12 * sum(t * (x_t - xbar)) / (n (n+1) (n-1))``; the
    residual variance uses the ``n - 2`` divisor. A zero residual variance is
    reported as ``sigma_eps_hat == 0``; studentized callers go through
    :meth:`TrendFit.require_variance`.
    """
    values = as_series(x).values
    n = values.size
    if n < 3:
        raise ValueError(f"line fit needs n >= 3, got {n}")
    t = np.arange(1, n + 1, dtype=float)
    xbar = values.mean()
    alpha = 12.0 * float(t @ (values - xbar)) / (n * (n + 1.0) * (n - 1.0))
    mu = xbar - alpha * (n + 1) / 2.0
    resid = values - (mu + alpha * t)
    s2 = float(resid @ resid) / (n - 2)
    if s2 <= _relative_floor(values):
        s2 = 0.0
    resid.setflags(write=False)
    return TrendFit(mu, alpha, resid, math.sqrt(s2))


def crop_range(n: int, delta: float, lo: int = 1, hi: int | None = None) -> np.ndarray:
    """Admissible changepoint indices ``ceil(n delta) <= k <= floor(n (1 - delta))``.

    The result is intersected with ``lo..hi`` (default ``1..n-1``).
    ``delta == 0`` means no cropping.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"delta must lie in [0, 0.5), got {delta}")
    hi = n - 1 if hi is None else hi
    first = max(lo, math.ceil(n * delta - _CROP_EPS))
    last = min(hi, math.floor(n * (1.0 - delta) + _CROP_EPS))
    if first > last:
        raise EmptyCropRange(f"no admissible k for n={n}, delta={delta}")
    return np.arange(first, last + 1)


def first_argmax(values: np.ndarray, rtol: float = 1e-12) -> int:
    """Position of the maximum; ties go to the earliest position.

    Values within ``rtol`` (relative) of the maximum count as ties, so that
    rounding noise between algebraically equal candidates cannot decide.
    """
    vmax = np.nanmax(values)
    tol = rtol * max(abs(vmax), np.finfo(float).tiny)
    return int(np.flatnonzero(values >= vmax - tol)[0])


def _relative_floor(values: np.ndarray) -> float:
    # Rounding-level threshold below which a mean square counts as zero.
    scale = float(np.max(np.abs(values)))
    return (64 * np.finfo(float).eps * scale) ** 2
