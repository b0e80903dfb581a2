"""p-value bounds from tabulated null quantiles, and Gumbel p-values for the LRT."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, UnknownFamily

PROBS = (0.90, 0.95, 0.975, 0.99, 0.999)

# Asymptotic null quantiles at PROBS, keyed by (test, delta).
MEAN_SHIFT_TABLE = {
    ("zmax", 0.01): (2.970, 3.225, 3.455, 3.730, 4.331),
    ("zmax", 0.05): (2.833, 3.095, 3.331, 3.619, 4.241),
    ("zmax", 0.10): (2.736, 3.007, 3.252, 3.548, 4.171),
    ("cusum_max", 0.0): (1.224, 1.358, 1.480, 1.628, 1.949),
    ("scusum", 0.0): (0.347, 0.461, 0.581, 0.743, 1.168),
}
TREND_SHIFT_TABLE = {
    ("dmax", 0.01): (3.224, 3.463, 3.679, 3.935, 4.403),
    ("dmax", 0.05): (3.135, 3.378, 3.603, 3.895, 4.403),
    ("dmax", 0.10): (3.082, 3.330, 3.559, 3.834, 4.376),
    ("hmax", 0.0): (0.830, 0.900, 0.962, 1.041, 1.360),
    ("fmax", 0.01): (6.595, 7.444, 8.273, 9.336, 11.866),
    ("fmax", 0.05): (6.166, 7.017, 7.846, 8.907, 11.510),
    ("fmax", 0.10): (5.856, 6.715, 7.536, 8.606, 11.169),
    ("jmax", 0.01): (2.530, 2.795, 3.038, 3.327, 3.964),
    ("jmax", 0.05): (2.380, 2.658, 2.908, 3.207, 3.852),
    ("jmax", 0.10): (2.285, 2.570, 2.827, 3.132, 3.792),
}
EMBEDDED_TABLES = {**MEAN_SHIFT_TABLE, **TREND_SHIFT_TABLE}

_UNCROPPED = frozenset({"cusum_max", "scusum", "hmax"})
_ALIASES = {"cusum": "cusum_max"}


@dataclass(frozen=True)
class PValueBound:
    """Either an exact p-value (``lower == upper == value``) or a bracket."""

    kind: str
    lower: float
    upper: float
    source: str

    @property
    def value(self) -> float | None:
        return self.lower if self.kind == "exact" else None

    def __str__(self) -> str:
        if self.kind == "exact":
            return f"p = {self.lower:.3f}"
        if self.upper >= 1.0:
            return f"p >= {self.lower:g}"
        if self.lower <= 0.0:
            return f"p < {self.upper:g}"
        return f"{self.lower:g} < p <= {self.upper:g}"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lower": self.lower,
            "upper": self.upper,
            "source": self.source,
            "text": str(self),
        }


def table_key(test: str, delta: float = 0.0) -> tuple[str, float]:
    test = _ALIASES.get(test, test)
    return test, 0.0 if test in _UNCROPPED else round(float(delta), 6)


def lookup(test: str, delta: float = 0.0, tables=None) -> tuple[tuple[float, ...], tuple[float, ...], str]:
    """``(probs, quantiles, source)`` for a test, preferring ``tables`` when given.

    ``tables`` maps ``(test, delta)`` to either a quantile tuple at
    :data:`PROBS` or an object with ``probs``/``quantiles`` attributes
    (e.g. a simulated :class:`~amoc.limits.QuantileTable`).
    """
    key = table_key(test, delta)
    if tables is not None and key in tables:
        row = tables[key]
        if hasattr(row, "quantiles"):
            return tuple(row.probs), tuple(row.quantiles), f"simulated:{key[0]}:{key[1]:g}"
        return PROBS, tuple(row), f"custom:{key[0]}:{key[1]:g}"
    if key not in EMBEDDED_TABLES:
        raise UnknownFamily(f"no quantile row for {key[0]} with delta={key[1]:g}")
    return PROBS, EMBEDDED_TABLES[key], f"table:{key[0]}:{key[1]:g}"


def p_bound(statistic: float, test: str, delta: float = 0.0, tables=None) -> PValueBound:
    """Bracket the upper-tail p-value of ``statistic`` between tabulated levels.

    A statistic equal to a tabulated quantile falls in the more significant
    bracket.
    """
    probs, quantiles, source = lookup(test, delta, tables)
    if statistic < quantiles[0]:
        return PValueBound("bracket", round(1 - probs[0], 10), 1.0, source)
    for i in range(len(quantiles) - 1):
        if quantiles[i] <= statistic < quantiles[i + 1]:
            return PValueBound(
                "bracket", round(1 - probs[i + 1], 10), round(1 - probs[i], 10), source
            )
    return PValueBound("bracket", 0.0, round(1 - probs[-1], 10), source)


def critical_value(test: str, delta: float = 0.0, level: float = 0.95, tables=None) -> float:
    probs, quantiles, _ = lookup(test, delta, tables)
    for p, q in zip(probs, quantiles):
        if math.isclose(p, level):
            return q
    raise KeyError(f"level {level} not tabulated")


def gumbel_pvalue(l_max: float, n: int) -> PValueBound:
    """Asymptotic p-value of the maximal log-likelihood ratio from its Gumbel law."""
    if n < 16:
        raise DomainError(f"Gumbel approximation needs n >= 16 (ln ln n > 1), got n={n}")
    if l_max < 0:
        raise DomainError(f"l_max must be nonnegative, got {l_max}")
    lln = math.log(math.log(n))
    t = (
        math.sqrt(2.0 * l_max * lln)
        - 2.0 * lln
        - 0.5 * math.log(lln)
        + math.log(math.sqrt(math.pi))
    )
    p = -math.expm1(-2.0 * math.exp(-t))
    return PValueBound("exact", p, p, "gumbel")
