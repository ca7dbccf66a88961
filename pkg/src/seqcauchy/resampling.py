"""
Simulated critical values for maxima of AR(1)-dependent statistics.

A sequence of d test statistics is approximated by a stationary Gaussian
AR(1) with coefficient fitted on the observed sequence; the critical value
is the (1 - alpha) quantile of ``max_i |X_i|`` over R simulated paths.
Values can be simulated on demand or read from a precomputed
:class:`CvTable` with bilinear interpolation in (theta, log d).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DomainError
from .procedures import RejectionReport
from .statdist import RngStream, simulate_ar1_batch

THETA_GRID = (-0.5, -0.25, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
D_GRID = (100, 341, 500, 1000, 2500)
ALPHA_LEVELS = (0.10, 0.05, 0.01)
THETA_CLAMP = 0.999
TABLE_VERSION = 1
_CHUNK_CELLS = 10_000_000  # paths x length simulated per chunk

__all__ = [
    "THETA_GRID",
    "D_GRID",
    "ALPHA_LEVELS",
    "Ar1Fit",
    "CvTable",
    "fit_ar1",
    "simulate_maxima",
    "simulate_max_quantile",
    "order_quantile",
    "build_cv_table",
    "interpolate_cv",
    "default_table",
    "resampling_procedure",
]


@dataclass(frozen=True)
class Ar1Fit:
    theta_hat: float
    n_obs: int


def fit_ar1(stats, min_length: int = 30) -> Ar1Fit:
    """Conditional Gaussian MLE of an AR(1) coefficient.

    For a zero-mean, unit-variance Gaussian AR(1) this is the lag-1
    least-squares slope ``sum x_i x_{i-1} / sum x_{i-1}^2`` (no demeaning),
    clamped to ``[-0.999, 0.999]``.
    """
    x = np.asarray(stats, dtype=float)
    if x.ndim != 1 or x.size < max(min_length, 2):
        raise DomainError(f"AR(1) fit needs at least {min_length} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("AR(1) fit received non-finite statistics")
    den = float(np.dot(x[:-1], x[:-1]))
    if den <= 0.0 or np.ptp(x) == 0.0:
        raise DomainError("AR(1) fit on a constant series")
    theta = float(np.dot(x[1:], x[:-1])) / den
    return Ar1Fit(float(np.clip(theta, -THETA_CLAMP, THETA_CLAMP)), x.size)


def _rng_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def simulate_maxima(theta: float, d: int, R: int, burn_in: int, rng) -> np.ndarray:
    """Sorted ``max_i |X_i|`` over R simulated stationary AR(1) paths of length d."""
    if not abs(theta) < 1:
        raise DomainError(f"|theta| must be < 1, got {theta}")
    if d < 1:
        raise DomainError("d must be positive")
    if R < 1000:
        raise DomainError(f"R must be at least 1000, got {R}")
    gen = _rng_generator(rng)
    chunk = max(1, _CHUNK_CELLS // (d + burn_in))
    out = np.empty(R)
    done = 0
    while done < R:
        m = min(chunk, R - done)
        x = simulate_ar1_batch(theta, d, m, gen, burn_in)
        out[done:done + m] = np.abs(x).max(axis=1)
        done += m
    out.sort()
    return out


def order_quantile(sorted_maxima: np.ndarray, alpha) -> np.ndarray:
    """Order statistic at 1-based index ``ceil((1 - alpha) R)``."""
    R = sorted_maxima.size
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any((a <= 0) | (a >= 1)):
        raise DomainError("alpha must lie in (0, 1)")
    # the 1e-9 guard keeps e.g. 0.95 * 1e5 from rounding up to 95001
    idx = np.ceil((1.0 - a) * R - 1e-9).astype(int)
    return sorted_maxima[np.clip(idx, 1, R) - 1]


def simulate_max_quantile(theta: float, d: int, alpha: float, R: int = 100_000,
                          burn_in: int = 0, rng=None) -> float:
    """(1 - alpha) quantile of the simulated maxima; deterministic given ``rng``."""
    if rng is None:
        rng = RngStream(0)
    return float(order_quantile(simulate_maxima(theta, d, R, burn_in, rng), alpha)[0])


@dataclass
class CvTable:
    """Simulated critical values on a (theta, d) grid.

    ``quantiles[i, j, k]`` is the (1 - alpha_levels[k]) quantile for
    ``theta_grid[i]`` and ``d_grid[j]``.
    """

    theta_grid: np.ndarray
    d_grid: np.ndarray
    alpha_levels: np.ndarray
    quantiles: np.ndarray
    R: int
    burn_in: int
    seed: int

    def to_json(self, path: Union[str, Path]) -> None:
        payload = {
            "version": TABLE_VERSION,
            "theta_grid": [float(v) for v in self.theta_grid],
            "d_grid": [int(v) for v in self.d_grid],
            "alpha_levels": [float(v) for v in self.alpha_levels],
            "quantiles": self.quantiles.tolist(),
            "R": int(self.R),
            "burn_in": int(self.burn_in),
            "seed": int(self.seed),
        }
        Path(path).write_text(json.dumps(payload, indent=1))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CvTable":
        data = json.loads(Path(path).read_text())
        if data.get("version") != TABLE_VERSION:
            raise DomainError(f"unsupported critical-value table version {data.get('version')!r}")
        return cls(
            theta_grid=np.array(data["theta_grid"], dtype=float),
            d_grid=np.array(data["d_grid"], dtype=int),
            alpha_levels=np.array(data["alpha_levels"], dtype=float),
            quantiles=np.array(data["quantiles"], dtype=float),
            R=int(data["R"]),
            burn_in=int(data["burn_in"]),
            seed=int(data["seed"]),
        )


def build_cv_table(theta_grid: Sequence[float] = THETA_GRID, d_grid: Sequence[int] = D_GRID,
                   alpha_levels: Sequence[float] = ALPHA_LEVELS, R: int = 100_000,
                   burn_in: int = 0, seed: int = 0, workers: int = 1) -> CvTable:
    """Simulate every (theta, d) cell; cell ``(i, j)`` uses stream ``i * len(d_grid) + j``."""
    thetas = np.asarray(theta_grid, dtype=float)
    ds = np.asarray(d_grid, dtype=int)
    alphas = np.asarray(alpha_levels, dtype=float)
    if np.any(np.diff(thetas) <= 0) or np.any(np.diff(ds) <= 0):
        raise DomainError("grids must be strictly increasing")
    cells = [(i, j) for i in range(thetas.size) for j in range(ds.size)]
    args = [(float(thetas[i]), int(ds[j]), alphas, R, burn_in, seed, i * ds.size + j)
            for i, j in cells]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_cell, args))
    else:
        results = [_cell(a) for a in args]
    q = np.empty((thetas.size, ds.size, alphas.size))
    for (i, j), row in zip(cells, results):
        q[i, j] = row
    return CvTable(thetas, ds, alphas, q, R, burn_in, seed)


def _cell(arg):
    theta, d, alphas, R, burn_in, seed, stream = arg
    maxima = simulate_maxima(theta, d, R, burn_in, RngStream(seed, stream))
    return order_quantile(maxima, alphas)


def _bracket(grid: np.ndarray, x: float):
    i = int(np.searchsorted(grid, x, side="right")) - 1
    i = min(max(i, 0), grid.size - 2) if grid.size > 1 else 0
    if grid.size == 1:
        return 0, 0, 0.0
    w = (x - grid[i]) / (grid[i + 1] - grid[i])
    return i, i + 1, float(w)


def interpolate_cv(table: CvTable, theta: float, d: int, alpha: float) -> float:
    """Bilinear interpolation in (theta, log d); exact at grid nodes.

    Raises
    ------
    DomainError
        If the query lies outside the grid hull or alpha is not tabulated.
    """
    tg, dg = table.theta_grid, table.d_grid
    if not (tg[0] <= theta <= tg[-1]) or not (dg[0] <= d <= dg[-1]):
        raise DomainError(f"query (theta={theta}, d={d}) outside the table hull")
    hits = np.flatnonzero(np.isclose(table.alpha_levels, alpha, rtol=0, atol=1e-12))
    if hits.size == 0:
        raise DomainError(f"alpha={alpha} not tabulated")
    k = hits[0]
    i0, i1, wt = _bracket(tg, theta)
    j0, j1, wd = _bracket(np.log(dg.astype(float)), math.log(d))
    q = table.quantiles[:, :, k]
    top = (1 - wd) * q[i0, j0] + wd * q[i0, j1]
    bot = (1 - wd) * q[i1, j0] + wd * q[i1, j1]
    return float((1 - wt) * top + wt * bot)


_DEFAULT_TABLE: Optional[CvTable] = None


def default_table() -> CvTable:
    """The table shipped with the package (R = 10^5, seed 20240101)."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        path = Path(__file__).with_name("data") / "cv_table.json"
        _DEFAULT_TABLE = CvTable.from_json(path)
    return _DEFAULT_TABLE


def resampling_procedure(stats, alpha: float = 0.05, table: Optional[CvTable] = None,
                         rng=None, R: int = 100_000, burn_in: int = 0) -> RejectionReport:
    """Reject ``H_i`` when ``|X_i|`` exceeds the simulated AR(1) max-quantile.

    The AR(1) coefficient is fitted on ``stats`` itself (0 for a constant
    sequence). With a ``table``
    the critical value is interpolated, falling back to direct simulation
    (R paths from ``rng``) when the query leaves the table hull or alpha is
    not tabulated.
    """
    x = np.asarray(stats, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite statistic")
    if x.size and np.ptp(x) == 0.0:
        # constant sequence: no dependence to fit, use the i.i.d. value
        theta_hat = 0.0
    else:
        theta_hat = fit_ar1(x).theta_hat
    cv = None
    source = "table"
    if table is not None:
        try:
            cv = interpolate_cv(table, theta_hat, x.size, alpha)
        except DomainError:
            cv = None
    if cv is None:
        source = "simulated"
        cv = simulate_max_quantile(theta_hat, x.size, alpha, R, burn_in,
                                   rng if rng is not None else RngStream(0))
    ax = np.abs(x)
    return RejectionReport("resampling", alpha, ax > cv, ax, threshold=cv,
                           extra={"theta_hat": theta_hat, "cv_source": source})
