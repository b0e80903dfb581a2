"""Monte Carlo simulation of the null limit laws and their quantiles.

All Brownian functionals are evaluated on the uniform grid ``t_i = i/m``,
``i = 1..m``, from a standard Brownian motion built as scaled cumulative sums
of independent normals. The joinpoint limit is sampled separately from a
Cholesky factor of its covariance on a cropped grid.

Replicates are simulated in fixed-size blocks. Block ``b`` draws from its own
generator seeded by ``SeedSequence(seed, spawn_key=(b,))``, so the pooled
sample, and every quantile computed from it, does not depend on how many
worker processes share the blocks.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .errors import NumericalSingularity, UnknownFamily, ValidationFailure

log = logging.getLogger(__name__)

KINDS = (
    "bridge_sup",
    "weighted_bridge_sup",
    "bridge_l2",
    "h_sup",
    "d_sup",
    "f_sup",
    "j_sup",
)
CROPPED_KINDS = frozenset({"weighted_bridge_sup", "d_sup", "f_sup", "j_sup"})

# Test name -> limit family kind.
TEST_KINDS = {
    "cusum": "bridge_sup",
    "cusum_max": "bridge_sup",
    "zmax": "weighted_bridge_sup",
    "scusum": "bridge_l2",
    "hmax": "h_sup",
    "dmax": "d_sup",
    "fmax": "f_sup",
    "jmax": "j_sup",
}

DEFAULT_PROBS = (0.90, 0.95, 0.975, 0.99, 0.999)
CACHE_VERSION = 1
MIN_GRID = 500
MIN_REPLICATIONS = 1_000
_OMEGA_COND_MAX = 1e12


@dataclass(frozen=True)
class LimitFamily:
    kind: str
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownFamily(self.kind)
        if self.kind in CROPPED_KINDS:
            if not 0.0 < self.delta < 0.5:
                raise ValueError(f"{self.kind} needs 0 < delta < 0.5, got {self.delta}")
        elif self.delta != 0.0:
            raise ValueError(f"{self.kind} takes no cropping")

    @classmethod
    def for_test(cls, test: str, delta: float = 0.0) -> "LimitFamily":
        try:
            kind = TEST_KINDS[test]
        except KeyError:
            raise UnknownFamily(test) from None
        return cls(kind, delta if kind in CROPPED_KINDS else 0.0)

    def __str__(self) -> str:
        return f"{self.kind}({self.delta:g})" if self.kind in CROPPED_KINDS else self.kind


@dataclass(frozen=True)
class SimConfig:
    replications: int = 200_000
    grid: int = 5_000
    seed: int = 20_250_101
    workers: int = 1
    grid_j: int = 1_000
    block_size: int = 500

    def __post_init__(self):
        if self.grid < MIN_GRID or self.grid_j < MIN_GRID:
            raise ValueError(f"grids need at least {MIN_GRID} points")
        if self.replications < 1 or self.block_size < 1 or self.workers < 1:
            raise ValueError("replications, block_size and workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_blocks(self) -> int:
        return -(-self.replications // self.block_size)


@dataclass(frozen=True)
class GridPath:
    """One sampled path on ``t_i = i/m``, ``i = 1..m``."""

    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.m + 1) / self.m


@dataclass
class QuantileTable:
    family: LimitFamily
    probs: tuple[float, ...]
    quantiles: tuple[float, ...]
    config: SimConfig
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("workers")
        return {
            "kind": self.family.kind,
            "delta": self.family.delta,
            "probs": list(self.probs),
            "quantiles": list(self.quantiles),
            "config": cfg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileTable":
        return cls(
            LimitFamily(d["kind"], d["delta"]),
            tuple(d["probs"]),
            tuple(d["quantiles"]),
            SimConfig(**d["config"]),
        )


# -- path sampling -----------------------------------------------------------


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def sample_motion(m: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Brownian motion on ``i/m``: rows of cumulative sums with increment variance ``1/m``."""
    w = rng.standard_normal((size, m))
    np.cumsum(w, axis=1, out=w)
    w *= 1.0 / math.sqrt(m)
    return w


def bridge_from_motion(w: np.ndarray) -> np.ndarray:
    m = w.shape[-1]
    t = np.arange(1, m + 1) / m
    b = w - t * w[..., -1:]
    b[..., -1] = 0.0
    return b


def sample_bridge(m: int, rng: np.random.Generator) -> GridPath:
    """One Brownian bridge path ``B(t) = W(t) - t W(1)``; ``B(1) = 0`` exactly."""
    return GridPath(bridge_from_motion(sample_motion(m, rng, 1))[0])


# -- functionals -------------------------------------------------------------


def _crop_mask(t: np.ndarray, delta: float) -> np.ndarray:
    mask = (t >= delta - 1e-12) & (t <= 1.0 - delta + 1e-12)
    if not mask.any():
        raise ValueError(f"grid has no points in [{delta}, {1 - delta}]")
    return mask


def h_process_from_bridge(b: np.ndarray) -> np.ndarray:
    """``G(t) = B(t) - 6 t (1-t) int_0^1 B``, integral by the grid mean."""
    m = b.shape[-1]
    t = np.arange(1, m + 1) / m
    return b - 6.0 * t * (1.0 - t) * b.mean(axis=-1, keepdims=True)


def omega(t):
    """Entries ``(w11, w12, w22)`` of the two-phase limit covariance matrix."""
    t = np.asarray(t, dtype=float)
    w11 = t - 4 * t**2 + 6 * t**3 - 3 * t**4
    w12 = t**2 / 2 - 2 * t**3 + 3.5 * t**4 - 2 * t**5
    w22 = t**3 / 3 - t**4 + 2 * t**5 - 4 * t**6 / 3
    return w11, w12, w22


def _omega_inverse(t: np.ndarray):
    w11, w12, w22 = omega(t)
    det = w11 * w22 - w12 * w12
    tr = w11 + w22
    # condition number of a symmetric 2x2 from its eigenvalues
    disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
    lo, hi = tr / 2 - disc, tr / 2 + disc
    cond = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
    if np.any(cond > _OMEGA_COND_MAX):
        bad = t[np.argmax(cond)]
        raise NumericalSingularity(f"Omega(t) is ill-conditioned at t={bad:.6g}")
    return w22 / det, -w12 / det, w11 / det


def f_process_from_motion(w: np.ndarray, delta: float) -> np.ndarray:
    """``(1/2) Lambda(t)' Omega(t)^{-1} Lambda(t)`` at grid points in ``[delta, 1-delta]``."""
    m = w.shape[-1]
    t = np.arange(1, m + 1) / m
    # int_0^t W by the trapezoid rule, W(0) = 0
    iw = np.cumsum(w, axis=-1) - 0.5 * w
    iw /= m
    k1_end = w[..., -1:]
    k2_end = w[..., -1:] - iw[..., -1:]
    mask = _crop_mask(t, delta)
    tc = t[mask]
    wc = w[..., mask]
    k1 = wc
    k2 = tc * wc - iw[..., mask]
    lam1 = k1 - k1_end * (4 * tc - 3 * tc**2) - k2_end * (-6 * tc + 6 * tc**2)
    lam2 = k2 - k1_end * (2 * tc**2 - 2 * tc**3) - k2_end * (-3 * tc**2 + 4 * tc**3)
    i11, i12, i22 = _omega_inverse(tc)
    return 0.5 * (i11 * lam1**2 + 2 * i12 * lam1 * lam2 + i22 * lam2**2)


def j_grid(delta: float, m: int) -> np.ndarray:
    return delta + (1.0 - 2.0 * delta) * np.arange(m) / (m - 1)


def j_covariance(t, s):
    """Limit correlation of the studentized joinpoint slope changes at ``t``, ``s``."""
    t, s = np.minimum(t, s), np.maximum(t, s)
    return (1.5 * s - 0.5 * t - s * t) / (s * (1 - t)) * np.sqrt(t * (1 - s) / (s * (1 - t)))


def d_covariance(t, s):
    """Limit correlation of ``D_k`` and ``D_l`` for ``k/n -> t``, ``l/n -> s``."""
    t, s = np.minimum(t, s), np.maximum(t, s)
    num = t * (1 - s) - 3 * t * (1 - t) * s * (1 - s)
    return num / np.sqrt((t * (1 - t) - 3 * (t * (1 - t)) ** 2) * (s * (1 - s) - 3 * (s * (1 - s)) ** 2))


def h_covariance(t, s):
    t, s = np.minimum(t, s), np.maximum(t, s)
    return t * (1 - s) * (1 - 3 * s * (1 - t))


def cholesky_on_grid(cov, grid: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``cov(grid_i, grid_j)`` with a minimal diagonal jitter."""
    c = cov(grid[:, None], grid[None, :])
    jitter = 0.0
    for _ in range(6):
        try:
            return np.linalg.cholesky(c + jitter * np.eye(grid.size))
        except np.linalg.LinAlgError:
            jitter = 1e-12 if jitter == 0.0 else jitter * 10
    raise NumericalSingularity("covariance matrix is not positive definite on the grid")


@lru_cache(maxsize=8)
def _j_factor(delta: float, m: int) -> np.ndarray:
    return cholesky_on_grid(j_covariance, j_grid(delta, m))


def eval_functional(family: LimitFamily, path) -> float | np.ndarray:
    """Evaluate the family's functional on one path or a batch (rows).

    ``f_sup`` consumes Brownian motion paths; ``j_sup`` consumes samples of
    the joinpoint limit process on :func:`j_grid`; every other family
    consumes Brownian bridge paths.
    """
    p = path.values if isinstance(path, GridPath) else np.asarray(path, dtype=float)
    out = _functional(family, p if p.ndim == 2 else p[None, :])
    return float(out[0]) if p.ndim == 1 else out


def _functional(family: LimitFamily, p: np.ndarray) -> np.ndarray:
    kind, delta = family.kind, family.delta
    m = p.shape[-1]
    t = np.arange(1, m + 1) / m
    if kind == "bridge_sup":
        return np.abs(p).max(axis=-1)
    if kind == "bridge_l2":
        return (p * p).mean(axis=-1)
    if kind == "weighted_bridge_sup":
        mask = _crop_mask(t, delta)
        tc = t[mask]
        return (np.abs(p[..., mask]) / np.sqrt(tc * (1 - tc))).max(axis=-1)
    if kind == "h_sup":
        return np.abs(h_process_from_bridge(p)).max(axis=-1)
    if kind == "d_sup":
        mask = _crop_mask(t, delta)
        tc = t[mask]
        g = h_process_from_bridge(p)[..., mask]
        return (np.abs(g) / np.sqrt(h_covariance(tc, tc))).max(axis=-1)
    if kind == "f_sup":
        return f_process_from_motion(p, delta).max(axis=-1)
    if kind == "j_sup":
        return np.abs(p).max(axis=-1)
    raise UnknownFamily(kind)


def _simulate_block(families: tuple[LimitFamily, ...], config: SimConfig, block: int):
    size = min(config.block_size, config.replications - block * config.block_size)
    out = {}
    motion_based = [f for f in families if f.kind != "j_sup"]
    if motion_based:
        w = sample_motion(config.grid, block_rng(config.seed, block), size)
        b = bridge_from_motion(w)
        for fam in motion_based:
            out[fam] = _functional(fam, w if fam.kind == "f_sup" else b)
        del w, b
    for fam in families:
        if fam.kind == "j_sup":
            factor = _j_factor(fam.delta, config.grid_j)
            z = block_rng(config.seed, block).standard_normal((size, config.grid_j))
            out[fam] = _functional(fam, z @ factor.T)
    return out


def _simulate_block_args(args):
    return _simulate_block(*args)


def simulate(families, config: SimConfig) -> dict[LimitFamily, np.ndarray]:
    """Draw ``config.replications`` functional values for each family.

    Families driven by Brownian motion share the same paths.
    """
    families = tuple(dict.fromkeys(families))
    jobs = [(families, config, b) for b in range(config.n_blocks)]
    if config.workers == 1:
        blocks = [_simulate_block(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(_simulate_block_args, jobs))
    return {f: np.concatenate([blk[f] for blk in blocks]) for f in families}


def order_quantiles(sample: np.ndarray, probs) -> tuple[float, ...]:
    """Order statistic ``X_(ceil(p R))`` of the sorted sample for each ``p``."""
    s = np.sort(sample)
    r = s.size
    idx = [min(r, max(1, math.ceil(p * r - 1e-9))) - 1 for p in probs]
    return tuple(float(s[i]) for i in idx)


def estimate_many(
    families, config: SimConfig, probs=DEFAULT_PROBS, cache: str | os.PathLike | None = None
) -> dict[LimitFamily, QuantileTable]:
    """Quantile tables for several families, simulated jointly and cached."""
    families = tuple(dict.fromkeys(families))
    probs = tuple(probs)
    if config.replications < MIN_REPLICATIONS:
        raise ValueError(f"quantile tables need at least {MIN_REPLICATIONS} replications")
    tables = {}
    if cache is not None:
        for fam in families:
            hit = load_cached(cache, fam, config, probs)
            if hit is not None:
                tables[fam] = hit
    todo = [f for f in families if f not in tables]
    if todo:
        log.info("simulating %s with %s", ", ".join(map(str, todo)), config)
        samples = simulate(todo, config)
        for fam in todo:
            q = order_quantiles(samples[fam], probs)
            if any(b <= a for a, b in zip(q, q[1:])):
                log.warning("quantiles of %s are not strictly increasing: %s", fam, q)
            tables[fam] = QuantileTable(fam, probs, q, config)
            if cache is not None:
                store_cached(cache, tables[fam])
    return {f: tables[f] for f in families}


def estimate_quantiles(
    family: LimitFamily, config: SimConfig, probs=DEFAULT_PROBS, cache=None
) -> QuantileTable:
    return estimate_many([family], config, probs, cache)[family]


# -- cache -------------------------------------------------------------------


def _cache_key(family: LimitFamily, config: SimConfig, probs) -> dict:
    cfg = asdict(config)
    cfg.pop("workers")
    return {"kind": family.kind, "delta": family.delta, "probs": list(probs), "config": cfg}


def _read_cache(path) -> dict:
    path = Path(path)
    if not path.exists():
        return {"version": CACHE_VERSION, "records": []}
    doc = json.loads(path.read_text())
    if doc.get("version") != CACHE_VERSION:
        log.warning("ignoring quantile cache %s with version %s", path, doc.get("version"))
        return {"version": CACHE_VERSION, "records": []}
    return doc


def load_cached(path, family: LimitFamily, config: SimConfig, probs) -> QuantileTable | None:
    key = _cache_key(family, config, probs)
    for rec in _read_cache(path)["records"]:
        if {k: rec[k] for k in key} == key:
            return QuantileTable.from_dict(rec)
    return None


def store_cached(path, table: QuantileTable) -> None:
    doc = _read_cache(path)
    rec = table.as_dict()
    key = _cache_key(table.family, table.config, table.probs)
    doc["records"] = [r for r in doc["records"] if {k: r[k] for k in key} != key]
    doc["records"].append(rec)
    doc["records"].sort(key=lambda r: (r["kind"], r["delta"], json.dumps(r["config"], sort_keys=True)))
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- closed-form laws ----------------------------------------------------------


def kolmogorov_tail(x: float) -> float:
    """``P(sup |B| > x) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)``."""
    if not x > 0:
        raise ValueError("x must be positive")
    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < 1e-12:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def kolmogorov_quantile(p: float) -> float:
    return optimize.brentq(lambda x: kolmogorov_tail(x) - (1.0 - p), 0.3, 5.0, xtol=1e-12)


def bridge_l2_cdf(x: float) -> float:
    """``P(int_0^1 B^2 <= x)`` by the Anderson-Darling Bessel series."""
    if x <= 0:
        return 0.0
    total = 0.0
    for j in range(60):
        u = (4 * j + 1) ** 2 / (16.0 * x)
        if u > 700:
            break
        coef = math.exp(special.gammaln(j + 0.5) - special.gammaln(0.5) - special.gammaln(j + 1))
        total += coef * math.sqrt(4 * j + 1) * math.exp(-u) * special.kv(0.25, u)
    return total / (math.pi * math.sqrt(x))


def bridge_l2_quantile(p: float) -> float:
    return optimize.brentq(lambda x: bridge_l2_cdf(x) - p, 0.01, 5.0, xtol=1e-12)


# -- construction checks -------------------------------------------------------


def _corr_with_se(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    r = float(np.corrcoef(a, b)[0, 1])
    return r, (1.0 - r * r) / math.sqrt(a.size)


def validate_dsup_construction(
    config: SimConfig | None = None,
    pairs=((0.25, 0.5), (0.1, 0.3), (0.4, 0.9)),
    z_max: float = 3.0,
) -> dict:
    """Check the normalized residual-CUSUM construction of the intercept-shift limit.

    For each ``(t, s)`` the empirical correlation of the normalized process
    at ``t`` and ``s`` is compared with the closed form, and with direct
    Cholesky sampling of the same covariance. The joinpoint Cholesky sampler
    is checked the same way. Raises :class:`ValidationFailure` on the first
    pair outside ``z_max`` standard errors.
    """
    config = config or SimConfig(replications=20_000, grid=1_000, block_size=1_000)
    m = config.grid
    grid_points = sorted({v for pair in pairs for v in pair})
    idx = {v: int(round(v * m)) - 1 for v in grid_points}
    report = {"pairs": []}

    g_cols = []
    for b in range(config.n_blocks):
        size = min(config.block_size, config.replications - b * config.block_size)
        bridge = bridge_from_motion(sample_motion(m, block_rng(config.seed, b), size))
        g = h_process_from_bridge(bridge)
        g_cols.append(np.column_stack([g[:, idx[v]] for v in grid_points]))
    g = np.vstack(g_cols)
    tv = np.array(grid_points)
    g /= np.sqrt(h_covariance(tv, tv))

    rng = block_rng(config.seed, 10**6)
    d_factor = cholesky_on_grid(d_covariance, tv)
    direct = rng.standard_normal((config.replications, tv.size)) @ d_factor.T
    j_factor = cholesky_on_grid(j_covariance, tv)
    j_direct = rng.standard_normal((config.replications, tv.size)) @ j_factor.T

    for t, s in pairs:
        i, j = grid_points.index(t), grid_points.index(s)
        entry = {"t": t, "s": s}
        for label, sample, formula in (
            ("d_normalized_h", g, d_covariance(t, s)),
            ("d_cholesky", direct, d_covariance(t, s)),
            ("j_cholesky", j_direct, j_covariance(t, s)),
        ):
            r, se = _corr_with_se(sample[:, i], sample[:, j])
            entry[label] = {"empirical": r, "formula": float(formula), "se": se}
            if abs(r - formula) > z_max * se:
                raise ValidationFailure(
                    f"{label}: corr at (t, s)=({t}, {s}) is {r:.4f}, "
                    f"formula {formula:.4f}, se {se:.4f}"
                )
        report["pairs"].append(entry)
    return report
