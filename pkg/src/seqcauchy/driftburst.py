"""
Noise-robust drift-burst statistics.

``X_t = sqrt(h) * mu_t / sqrt(sigma2_t)`` where ``mu_t`` is a left-sided
exponential-kernel average of pre-averaged returns and ``sigma2_t`` a HAC
estimate (Parzen weights) of their local long-run variance. Time is measured
in seconds, so with the default bandwidths the statistic is approximately
N(0, 1) under the null.

A pre-averaged return ``pa[s]`` combines raw returns ``s+1 .. s+k-1``; it is
anchored at ``t_s`` for the kernel and becomes available at ``t_{s+k-1}``.
Only available terms enter the estimate at time ``t`` (no look-ahead).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from .errors import DataError, DomainError
from .simgen import PricePath

log = logging.getLogger(__name__)

__all__ = [
    "DriftBurstConfig",
    "DbStatSequence",
    "parzen",
    "preaverage",
    "q_star",
    "select_lag",
    "drift_estimate",
    "variance_estimate",
    "db_sequence",
]


@dataclass(frozen=True)
class DriftBurstConfig:
    """Estimator settings.

    Parameters
    ----------
    k_n : int
        Pre-averaging window.
    h_n : float
        Mean-estimator bandwidth in seconds.
    bandwidth_ratio : float
        ``h'_n / h_n`` for the variance estimator.
    grid_spacing : float
        Seconds between evaluation points, counted from the session open.
    burn_in : int
        Leading grid points dropped per day.
    """

    k_n: int = 3
    h_n: float = 600.0
    bandwidth_ratio: float = 5.0
    grid_spacing: float = 60.0
    burn_in: int = 49

    def __post_init__(self):
        if self.k_n < 2:
            raise DomainError("k_n must be at least 2")
        if self.h_n <= 0 or self.grid_spacing <= 0:
            raise DomainError("bandwidth and grid spacing must be positive")
        if self.bandwidth_ratio < 1:
            raise DomainError("bandwidth ratio must be >= 1")
        if self.burn_in < 0:
            raise DomainError("burn_in must be non-negative")

    @property
    def h_var(self) -> float:
        return self.h_n * self.bandwidth_ratio


@dataclass
class DbStatSequence:
    """Statistics on the evaluation grid, after burn-in, all days concatenated."""

    timestamps: np.ndarray
    minute: np.ndarray
    day: np.ndarray
    stats: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    lags: List[int] = field(default_factory=list)
    floored: int = 0
    failed: np.ndarray = None

    def for_day(self, k: int) -> np.ndarray:
        return self.stats[self.day == k]


def parzen(x):
    """Parzen lag window, continuous at ``|x| = 1/2``.

    ``1 - 6x^2 + 6|x|^3`` on ``[0, 1/2]`` and ``2(1 - |x|)^3`` on ``(1/2, 1]``.
    """
    a = np.abs(np.asarray(x, dtype=float))
    out = np.where(a <= 0.5, 1.0 - 6.0 * a ** 2 + 6.0 * a ** 3, 2.0 * (1.0 - a) ** 3)
    out = np.where(a > 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def preaverage(returns, k_n: int = 3) -> np.ndarray:
    """``out[i] = sum_{j=1}^{k_n-1} g(j/k_n) returns[i+j]`` with ``g(x) = min(x, 1-x)``.

    ``returns[0]`` is the return ending at the first observation (zero for a
    price series that starts at the open), so a day of n price increments
    passed as ``concat([0], diff(P))`` yields ``n - k_n + 2`` values.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < k_n:
        raise DomainError(f"pre-averaging needs at least k_n={k_n} returns, got {r.size}")
    j = np.arange(1, k_n)
    g = np.minimum(j / k_n, 1.0 - j / k_n)
    # correlate: out[i] = sum_j g[j-1] r[i+j]
    return np.convolve(r[1:], g[::-1], mode="valid")


def q_star(raw_returns) -> int:
    """Number of leading lags whose autocorrelation t-ratio exceeds 1.96.

    Lags are scanned from 1 up to ``ceil(4 (n/100)^(2/9))`` and the scan stops
    at the first insignificant lag.
    """
    r = np.asarray(raw_returns, dtype=float)
    n = r.size
    if n < 10:
        raise DomainError("lag selection needs at least 10 returns")
    r = r - r.mean()
    denom = float(np.dot(r, r))
    if denom <= 0 or not np.isfinite(denom):
        return 0
    qmax = min(int(math.ceil(4.0 * (n / 100.0) ** (2.0 / 9.0))), n - 1)
    q = 0
    for lag in range(1, qmax + 1):
        rho = float(np.dot(r[lag:], r[:-lag])) / denom
        if abs(math.sqrt(n) * rho) <= 1.96:
            break
        q = lag
    return q


def select_lag(raw_returns, k_n: int = 3) -> int:
    """HAC lag length ``L_n = Q* + 2 (k_n - 1)``."""
    return q_star(raw_returns) + 2 * (k_n - 1)


def _series(path) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(path, PricePath):
        return path.timestamps, path.noisy
    ts, p = path
    ts = np.asarray(ts, dtype=float)
    p = np.asarray(p, dtype=float)
    if ts.shape != p.shape or ts.ndim != 1:
        raise DataError("timestamps and prices must be vectors of equal length")
    return ts, p


def _available(ts, p, t, k_n):
    r = np.concatenate([[0.0], np.diff(p)])
    pa = preaverage(r, k_n)
    anchor = ts[:pa.size]
    avail = ts[k_n - 1:k_n - 1 + pa.size] <= t
    if not avail.any():
        raise DomainError(f"t={t} precedes the first usable pre-averaged return")
    return pa, anchor, avail


def drift_estimate(path, t: float, config: DriftBurstConfig = DriftBurstConfig()) -> float:
    """``(1/h) sum_s exp((t_s - t)/h) pa[s]`` over available terms (direct sum)."""
    ts, p = _series(path)
    pa, anchor, avail = _available(ts, p, t, config.k_n)
    kern = np.exp((anchor[avail] - t) / config.h_n)
    return float(np.dot(kern, pa[avail]) / config.h_n)


def variance_estimate(path, t: float, config: DriftBurstConfig = DriftBurstConfig(),
                      lag: int = None) -> float:
    """HAC variance of the pre-averaged returns at ``t`` (direct sum).

    ``lag`` defaults to :func:`select_lag` on the whole series. A non-positive
    HAC value falls back to the lag-0 sum.
    """
    ts, p = _series(path)
    pa, anchor, avail = _available(ts, p, t, config.k_n)
    hv = config.h_var
    if lag is None:
        lag = select_lag(np.diff(p), config.k_n)
    kx = np.where(avail, np.exp((anchor - t) / hv) * pa, 0.0)
    base = float(np.dot(kx, kx))
    cross = 0.0
    for L in range(1, lag + 1):
        cross += parzen(L / lag) * float(np.dot(kx[:-L], kx[L:]))
    total = (base + 2.0 * cross) / hv
    if total <= 0:
        total = base / hv
    if total <= 0:
        raise DomainError(f"non-positive variance estimate at t={t}")
    return total


def _day_sequence(ts, p, cfg: DriftBurstConfig):
    """Recursive (exact) kernel sums on the grid of one day."""
    n = p.size - 1
    if n < 10:
        raise DataError("a day needs at least 10 returns")
    steps = np.diff(ts)
    spacing = float(steps[0])
    if spacing <= 0 or np.any(np.abs(steps - spacing) > 1e-9 * max(spacing, 1.0)):
        raise DataError("drift-burst statistics need equidistant observations")
    per_grid = cfg.grid_spacing / spacing
    if abs(per_grid - round(per_grid)) > 1e-9:
        raise DataError("grid spacing must be a multiple of the sampling interval")
    per_grid = int(round(per_grid))
    k = cfg.k_n
    raw = np.diff(p)
    lag = select_lag(raw, k)
    pa = preaverage(np.concatenate([[0.0], raw]), k)

    n_grid = n // per_grid
    m = np.arange(1, n_grid + 1) * per_grid  # observation index of each grid point
    j = m - k + 1  # last available pre-averaged index
    ok = j >= 0
    jj = np.where(ok, j, 0)

    a = math.exp(-spacing / cfg.h_n)
    B = lfilter([1.0], [1.0, -a], pa)
    mu = a ** (k - 1) * B[jj] / cfg.h_n

    hv = cfg.h_var
    b = math.exp(-2.0 * spacing / hv)
    Q = lfilter([1.0], [1.0, -b], pa * pa)
    base = b ** (k - 1) * Q[jj]
    cross = np.zeros(n_grid)
    for L in range(1, lag + 1):
        C = lfilter([1.0], [1.0, -b], pa[:-L] * pa[L:])
        idx = jj - L
        valid = idx >= 0
        val = np.where(valid, C[np.where(valid, idx, 0)], 0.0)
        cross += parzen(L / lag) * b ** (k - 1) * math.exp(-L * spacing / hv) * val
    sigma2 = (base + 2.0 * cross) / hv
    floor = sigma2 <= 0
    sigma2 = np.where(floor, base / hv, sigma2)
    failed = ~ok | (sigma2 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        stats = np.where(failed, np.nan, math.sqrt(cfg.h_n) * mu / np.sqrt(np.where(failed, 1.0, sigma2)))
    return ts[m], np.arange(1, n_grid + 1), stats, mu, sigma2, lag, int(floor.sum()), failed


def db_sequence(path: Union[PricePath, tuple], config: DriftBurstConfig = DriftBurstConfig()
                ) -> DbStatSequence:
    """Drift-burst statistics on the minute grid, each day treated separately.

    Grid point ``j`` (1-based) of a day sits ``j * grid_spacing`` seconds after
    the day's first observation; the first ``burn_in`` points are dropped,
    leaving 341 statistics for a 390-minute day with the defaults.
    Grid points whose estimate fails are kept as NaN and flagged.
    """
    if isinstance(path, PricePath):
        days = [path.day(k) for k in range(path.n_days)] if path.n_days > 1 else [path]
        series = [(d.timestamps, d.noisy) for d in days]
    else:
        series = [_series(path)]
    parts = []
    lags, floored = [], 0
    for k, (ts, p) in enumerate(series):
        g_ts, minute, stats, mu, s2, lag, nfl, failed = _day_sequence(ts, p, config)
        keep = minute > config.burn_in
        lags.append(lag)
        floored += nfl
        parts.append((g_ts[keep], minute[keep], np.full(keep.sum(), k), stats[keep], mu[keep],
                      s2[keep], failed[keep]))
    if floored:
        log.info("variance floor applied at %d grid points", floored)
    cat = [np.concatenate([pt[i] for pt in parts]) for i in range(7)]
    return DbStatSequence(cat[0], cat[1], cat[2], cat[3], cat[4], cat[5], lags, floored, cat[6])
