"""
Data-generating processes.

* Correlated N(mu, Sigma) statistic vectors with sparse signals whose sign
  follows the null draw.
* One-second log-price paths from a Heston model with an optional drift and
  volatility burst, contaminated by heteroskedastic Gaussian noise.

Time conventions for prices: Heston parameters are annualised, one trading
day lasts 6.5 hours (23,400 seconds) and a year has 252 days. Burst
functions are evaluated on a clock whose unit is ``clock_days`` trading
days: with one day, ``tau_b = 0.5`` is the middle of day one; the
persistent expansion stretches the unit over its three days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DomainError
from .statdist import CorrelationSpec, RngStream, build_correlation, cholesky

SECONDS_PER_DAY = 23_400
DAYS_PER_YEAR = 252
SESSION_OPEN = 34_200  # 09:30 in seconds after midnight
MINUTES_PER_DAY = SECONDS_PER_DAY // 60

__all__ = [
    "SignalSpec",
    "default_signal_strength",
    "gen_statistics",
    "gen_statistics_batch",
    "HestonParams",
    "BurstSpec",
    "FLASH_CRASH",
    "PERSISTENT_EXPANSION",
    "NO_BURST",
    "PricePath",
    "simulate_heston_day",
    "simulate_expansion_days",
    "simulate_paths",
]


# ---------------------------------------------------------------------------
# Correlated statistics
# ---------------------------------------------------------------------------

def default_signal_strength(d: int, s: int) -> float:
    """``sqrt(3 log d) / s^(1/3)``."""
    return math.sqrt(3.0 * math.log(d)) / s ** (1.0 / 3.0)


@dataclass(frozen=True)
class SignalSpec:
    """Sparse signal layout.

    Parameters
    ----------
    count : int
        Number of non-null coordinates.
    strength : float
        Common magnitude ``mu_0`` of the signals.
    placement : {"first-k", "random"}
        ``random`` draws a fresh position set per replication.
    """

    count: int = 0
    strength: float = 0.0
    placement: str = "first-k"

    def __post_init__(self):
        if self.count < 0 or self.strength < 0:
            raise DomainError("signal count and strength must be non-negative")
        if self.placement not in ("first-k", "random"):
            raise DomainError(f"unknown placement {self.placement!r}")


def _apply_signal(z: np.ndarray, signal: SignalSpec, gen: np.random.Generator):
    d = z.size
    if signal.count > d:
        raise DomainError(f"{signal.count} signals requested for d={d}")
    truth = np.zeros(d, dtype=bool)
    if signal.count:
        if signal.placement == "first-k":
            truth[:signal.count] = True
        else:
            truth[gen.choice(d, signal.count, replace=False)] = True
    # the signal amplifies the null draw: mu_i = mu_0 * sign(z_i)
    sign = np.where(z >= 0, 1.0, -1.0)
    return z + truth * signal.strength * sign, truth


def gen_statistics(corr: CorrelationSpec, signal: SignalSpec, rng,
                   chol: Optional[np.ndarray] = None):
    """One draw ``X = Z + mu`` with ``Z ~ N_d(0, Sigma)``.

    Returns
    -------
    stats : ndarray, shape (d,)
    truth : ndarray of bool, shape (d,)
        True at the signal (false-null) positions.
    """
    if signal.count > corr.dim:
        raise DomainError(f"{signal.count} signals requested for d={corr.dim}")
    L = cholesky(build_correlation(corr, check=False), corr.label()) if chol is None else chol
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    z = L @ gen.standard_normal(corr.dim)
    return _apply_signal(z, signal, gen)


def gen_statistics_batch(chol: np.ndarray, signal: SignalSpec, seed: int, streams):
    """Rows equal :func:`gen_statistics` with ``RngStream(seed, s)`` per stream."""
    d = chol.shape[0]
    if signal.count > d:
        raise DomainError(f"{signal.count} signals requested for d={d}")
    n = len(streams)
    z = np.empty((n, d))
    gens = []
    for k, s in enumerate(streams):
        g = RngStream(seed, int(s)).generator()
        z[k] = g.standard_normal(d)
        gens.append(g)
    z = z @ chol.T
    X = np.empty_like(z)
    T = np.empty(z.shape, dtype=bool)
    for k in range(n):
        X[k], T[k] = _apply_signal(z[k], signal, gens[k])
    return X, T


# ---------------------------------------------------------------------------
# Heston prices with bursts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HestonParams:
    """Annualised Heston parameters (variance per year)."""

    kappa: float = 5.0
    theta: float = 0.0225
    xi: float = 0.4
    delta: float = -math.sqrt(0.5)
    mu_drift: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.theta < 0 or self.xi < 0:
            raise DomainError("kappa, theta and xi must be non-negative")
        if abs(self.delta) > 1:
            raise DomainError("leverage correlation must lie in [-1, 1]")

    def draw_v0(self, gen: np.random.Generator) -> float:
        """Stationary law Gamma(shape 2 kappa theta / xi^2, rate 2 kappa / xi^2)."""
        if self.xi == 0 or self.kappa == 0:
            return self.theta
        shape = 2.0 * self.kappa * self.theta / self.xi ** 2
        return float(gen.gamma(shape, self.xi ** 2 / (2.0 * self.kappa)))


@dataclass(frozen=True)
class BurstSpec:
    """Drift/volatility burst.

    Burst time runs on a clock where one unit spans ``clock_days`` trading
    days (1 for an intraday crash, the episode length for a multi-day
    expansion). The drift burst is ``a sign(t - tau) / |tau - t|^alpha_b`` (sign flipped
    for ``persistent-expansion``, which trends upward into ``tau``) and the
    volatility burst ``b sqrt(theta_v) / |tau - t|^beta_b``, both active on
    ``[tau - dt, tau + dt]`` and annualised like the Heston parameters.
    """

    kind: str = "none"
    tau: float = 0.5
    dt: float = 0.025
    alpha_b: float = 0.65
    beta_b: float = 0.4
    a: float = 3.0
    b: float = 0.15
    clock_days: float = 1.0

    def __post_init__(self):
        if self.clock_days <= 0:
            raise DomainError("clock_days must be positive")
        if self.kind not in ("none", "flash-crash", "persistent-expansion"):
            raise DomainError(f"unknown burst kind {self.kind!r}")
        if self.kind != "none":
            if not 0.5 < self.alpha_b < 1:
                raise DomainError("alpha_b must lie in (1/2, 1)")
            if not 0 <= self.beta_b < 1:
                raise DomainError("beta_b must lie in [0, 1)")
            if self.dt <= 0:
                raise DomainError("burst half-duration must be positive")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    @property
    def drift_sign(self) -> float:
        return -1.0 if self.kind == "persistent-expansion" else 1.0


NO_BURST = BurstSpec("none")
FLASH_CRASH = BurstSpec("flash-crash", tau=0.5, dt=0.025, alpha_b=0.65, beta_b=0.4, a=3.0, b=0.15)
PERSISTENT_EXPANSION = BurstSpec("persistent-expansion", tau=1.0, dt=1.0, alpha_b=0.75,
                                 beta_b=0.4, a=3.0, b=0.15, clock_days=3.0)


@dataclass
class PricePath:
    """Equidistant log-price path.

    Days are stored back to back; each day has ``points_per_day`` samples
    including both the open and the close. ``truth`` flags the one-minute
    intervals (``MINUTES_PER_DAY`` per day) that overlap the burst.
    """

    timestamps: np.ndarray
    noisy: np.ndarray
    latent: np.ndarray
    spot_var: np.ndarray
    truth: np.ndarray
    burst_drift: np.ndarray
    spacing: float = 1.0
    n_days: int = 1
    gamma: float = 0.5
    burst: BurstSpec = field(default_factory=lambda: NO_BURST)

    @property
    def points_per_day(self) -> int:
        return self.noisy.size // self.n_days

    def day(self, k: int) -> "PricePath":
        """Sub-path of day ``k``."""
        m = self.points_per_day
        sl = slice(k * m, (k + 1) * m)
        steps = m - 1
        return PricePath(self.timestamps[sl], self.noisy[sl], self.latent[sl], self.spot_var[sl],
                         self.truth[k * MINUTES_PER_DAY:(k + 1) * MINUTES_PER_DAY],
                         self.burst_drift[k * steps:(k + 1) * steps], self.spacing, 1,
                         self.gamma, self.burst)

    def to_csv(self, path: Union[str, Path]) -> None:
        """Two columns: epoch seconds, noisy log price."""
        data = np.column_stack([self.timestamps, self.noisy])
        np.savetxt(path, data, delimiter=",", fmt=["%.0f", "%.17g"],
                   header="timestamp,log_price", comments="")


def _day_clock(n_days: int, spacing: float) -> np.ndarray:
    """Start/end of every Euler step on the trading-day clock."""
    steps = int(round(SECONDS_PER_DAY / spacing))
    frac = np.arange(steps + 1) / steps
    return np.concatenate([k + frac for k in range(n_days)]).reshape(n_days, steps + 1)


def _burst_increments(burst: BurstSpec, clock: np.ndarray, theta_v: float):
    """Per-step drift increment (log-price units) and mean volatility burst.

    Both use exact antiderivatives over each step, clipped to the burst
    window, so the singularity at ``tau`` is integrated rather than sampled.
    """
    start = clock[:, :-1].ravel() / burst.clock_days
    end = clock[:, 1:].ravel() / burst.clock_days
    if not burst.active:
        z = np.zeros(start.size)
        return z, z
    lo, hi = -burst.dt, burst.dt
    u0 = np.clip(start - burst.tau, lo, hi)
    u1 = np.clip(end - burst.tau, lo, hi)
    pa = 1.0 - burst.alpha_b
    # d/du |u|^(1-a) / (1-a) = sign(u) |u|^(-a)
    F = lambda u: burst.a * np.abs(u) ** pa / pa  # noqa: E731
    drift = burst.drift_sign * (F(u1) - F(u0)) * burst.clock_days / DAYS_PER_YEAR
    pb = 1.0 - burst.beta_b
    G = lambda u: np.sign(u) * np.abs(u) ** pb / pb  # noqa: E731
    width = end - start
    vol = burst.b * math.sqrt(theta_v) * (G(u1) - G(u0)) / width
    return drift, vol


def _truth_mask(burst: BurstSpec, n_days: int) -> np.ndarray:
    minutes = np.arange(n_days * MINUTES_PER_DAY)
    if not burst.active:
        return np.zeros(minutes.size, dtype=bool)
    lo = ((minutes % MINUTES_PER_DAY) / MINUTES_PER_DAY + minutes // MINUTES_PER_DAY) / burst.clock_days
    hi = lo + 1.0 / (MINUTES_PER_DAY * burst.clock_days)
    return (hi > burst.tau - burst.dt) & (lo < burst.tau + burst.dt)


def simulate_paths(params: HestonParams, burst: BurstSpec, gamma: float, spacing: float,
                   n_days: int, seed: int, streams: Sequence[int]) -> list:
    """Simulate one :class:`PricePath` per stream, vectorised across streams.

    The Euler scheme uses full truncation ``v+ = max(v, 0)``; the spot
    volatility seen by prices is ``sqrt(v+) + sigma_burst``. Noise on each
    observation is ``N(0, (gamma sqrt(v+) sqrt(dt))^2)``, i.e. ``gamma``
    times the local one-step return volatility.
    """
    if gamma < 0:
        raise DomainError("noise ratio gamma must be non-negative")
    steps_f = SECONDS_PER_DAY / spacing
    if spacing <= 0 or abs(steps_f - round(steps_f)) > 1e-9:
        raise DomainError("sampling interval must divide the trading day")
    if burst.active and not (0 <= burst.tau * burst.clock_days <= n_days):
        raise DomainError("burst time outside the simulated days")
    steps = int(round(steps_f))
    n_steps = steps * n_days
    dt = spacing / (SECONDS_PER_DAY * DAYS_PER_YEAR)
    sdt = math.sqrt(dt)
    clock = _day_clock(n_days, spacing)
    drift_b, vol_b = _burst_increments(burst, clock, params.theta)
    truth = _truth_mask(burst, n_days)

    S = len(streams)
    v0 = np.empty(S)
    zw = np.empty((S, n_steps))
    zb = np.empty((S, n_steps))
    eps = np.empty((S, n_days * (steps + 1)))
    for k, s in enumerate(streams):
        g = RngStream(seed, int(s)).generator()
        v0[k] = params.draw_v0(g)
        zw[k] = g.standard_normal(n_steps)
        zb[k] = g.standard_normal(n_steps)
        eps[k] = g.standard_normal(eps.shape[1])
    rho = params.delta
    zb = rho * zw + math.sqrt(1.0 - rho * rho) * zb

    # variance recursion, vectorised over paths
    v = np.empty((S, n_steps + 1))
    v[:, 0] = v0
    kdt = params.kappa * dt
    xsd = params.xi * sdt
    cur = v0.copy()
    for i in range(n_steps):
        vp = np.maximum(cur, 0.0)
        cur = cur + kdt * (params.theta - vp) + xsd * np.sqrt(vp) * zb[:, i]
        v[:, i + 1] = cur
    vplus = np.maximum(v, 0.0)
    sig = np.sqrt(vplus)
    incr = (sig[:, :-1] + vol_b) * sdt * zw + drift_b + params.mu_drift * dt
    latent_c = np.concatenate([np.zeros((S, 1)), np.cumsum(incr, axis=1)], axis=1)

    # lay out days with the close of day k repeated as the open of day k+1
    idx = np.concatenate([np.arange(k * steps, (k + 1) * steps + 1) for k in range(n_days)])
    latent = latent_c[:, idx]
    var_d = vplus[:, idx]
    noisy = latent + gamma * np.sqrt(var_d) * sdt * eps
    base = np.arange(steps + 1) * spacing + SESSION_OPEN
    ts = np.concatenate([k * 86_400 + base for k in range(n_days)]).astype(float)
    return [PricePath(ts, noisy[k], latent[k], var_d[k], truth.copy(), drift_b.copy(), spacing,
                      n_days, gamma, burst) for k in range(S)]


def simulate_heston_day(params: HestonParams = HestonParams(), burst: BurstSpec = NO_BURST,
                        gamma: float = 0.5, spacing: float = 1.0,
                        rng: Optional[RngStream] = None) -> PricePath:
    """One trading day at ``spacing``-second sampling (23,401 points at 1 s)."""
    rng = rng or RngStream(0)
    if burst.active and not (0 <= burst.tau - burst.dt and burst.tau + burst.dt <= 1):
        raise DomainError("burst window must lie inside the day")
    return simulate_paths(params, burst, gamma, spacing, 1, rng.seed, [rng.stream_id])[0]


def simulate_expansion_days(params: HestonParams = HestonParams(),
                            burst: BurstSpec = PERSISTENT_EXPANSION, gamma: float = 0.5,
                            spacing: float = 1.0, n_days: int = 3,
                            rng: Optional[RngStream] = None) -> PricePath:
    """Consecutive days sharing one burst clock.

    For ``persistent-expansion`` the clock unit is stretched to ``n_days``,
    with ``tau`` at the end of the last day and the window covering all days.
    """
    rng = rng or RngStream(0)
    if burst.kind == "persistent-expansion":
        burst = BurstSpec(burst.kind, tau=1.0, dt=1.0, alpha_b=burst.alpha_b,
                          beta_b=burst.beta_b, a=burst.a, b=burst.b, clock_days=float(n_days))
    return simulate_paths(params, burst, gamma, spacing, n_days, rng.seed, [rng.stream_id])[0]
