"""Distribution distances, summaries with bootstrap intervals, and rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .rng import as_generator


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    label: str = ""
    provenance: dict = field(default_factory=lambda: {"experiment": "adhoc", "N": None, "trials": None, "seed": None})

    def __post_init__(self):
        v = np.asarray(self.values, float).ravel()
        if not np.all(np.isfinite(v)):
            raise StatsError(f"sample {self.label!r} has non-finite values")
        if not self.provenance:
            raise StatsError("provenance must be populated")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _values(a):
    v = a.values if isinstance(a, SampleSet) else np.asarray(a, float).ravel()
    if v.size == 0:
        raise StatsError("empty sample")
    return v


def ks_two_sample(a, b):
    """``sup_x |F_a(x) - F_b(x)|`` over the pooled jump points."""
    x, y = np.sort(_values(a)), np.sort(_values(b))
    pts = np.concatenate([x, y])
    fa = np.searchsorted(x, pts, side="right") / len(x)
    fb = np.searchsorted(y, pts, side="right") / len(y)
    return float(np.max(np.abs(fa - fb)))


def ks_one_sample(a, cdf):
    """``sup_x |F_a(x) - F(x)|`` for a continuous reference CDF."""
    x = np.sort(_values(a))
    n = len(x)
    F = np.asarray(cdf(x), float)
    if np.any(np.diff(F) < -1e-12):
        raise StatsError("cdf is not monotone")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    quantiles: dict
    mean_ci: tuple
    variance_ci: tuple
    level: float
    resamples: int


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _percentile_ci(boot, point, level):
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    # percentile intervals can miss a skewed point estimate; widen to cover it
    return float(min(lo, point)), float(max(hi, point))


def summarize(a, rng=None, resamples=1000, level=0.95) -> SummaryStats:
    """Moments, quantiles and percentile-bootstrap intervals for mean and variance."""
    v = _values(a)
    n = len(v)
    if n < 2:
        raise StatsError("need at least 2 values for a variance")
    mean = float(np.mean(v))
    var = float(np.var(v, ddof=1))
    m4 = float(np.mean((v - mean) ** 4))
    se_var = math.sqrt(max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n)
    rng = as_generator(0 if rng is None else rng)
    idx = rng.integers(0, n, size=(resamples, n))
    boot = v[idx]
    bm = boot.mean(axis=1)
    bv = boot.var(axis=1, ddof=1)
    q = dict(zip(QUANTILES, (float(t) for t in np.quantile(v, QUANTILES))))
    return SummaryStats(
        n,
        mean,
        var,
        math.sqrt(var / n),
        se_var,
        q,
        _percentile_ci(bm, mean, level),
        _percentile_ci(bv, var, level),
        level,
        resamples,
    )


def iqr(values):
    q1, q3 = np.quantile(_values(values), [0.25, 0.75])
    return float(q3 - q1)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple
    stderr: float
    level: float


def rate_fit(pairs, level=0.95) -> RateFit:
    """Least-squares slope of ``log statistic`` against ``log N``."""
    pairs = list(pairs)
    Ns = np.array([p[0] for p in pairs], float)
    st = np.array([p[1] for p in pairs], float)
    if len(set(Ns.tolist())) < 3:
        raise StatsError("rate fit needs at least 3 distinct N")
    if np.any(Ns <= 0) or np.any(st <= 0):
        raise StatsError("N and statistic must be positive")
    res = sps.linregress(np.log(Ns), np.log(st))
    dof = len(Ns) - 2
    if dof > 0 and math.isfinite(res.stderr):
        t = sps.t.ppf((1 + level) / 2, dof)
        ci = (res.slope - t * res.stderr, res.slope + t * res.stderr)
    else:
        ci = (res.slope, res.slope)
    return RateFit(float(res.slope), float(res.intercept), (float(ci[0]), float(ci[1])), float(res.stderr), level)


def normal_cdf(variance, mean=0.0):
    s = math.sqrt(variance)
    return lambda x: sps.norm.cdf(x, loc=mean, scale=s)
