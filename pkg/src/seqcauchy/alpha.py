"""
Factor-model alpha tests.

Asset-by-asset OLS of excess returns on an intercept and K factors gives
alpha t-statistics with an exact t(T-K-1) null under Gaussian errors. The
module also provides the screening set / power-enhancement component J0
and a simulator for calibrated factor panels.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from . import statdist
from .errors import DataError, DomainError, FactorizationError
from .procedures import PValueSet, RejectionReport, clamp_pvalues
from .statdist import RngStream

log = logging.getLogger(__name__)

SE_FLOOR = 1e-12
DGP_VERSION = 1

__all__ = [
    "FactorPanel",
    "AlphaFit",
    "CalibratedDgp",
    "fit_alphas",
    "alpha_pvalues",
    "screening_threshold",
    "screening_procedure",
    "alpha_pattern",
    "simulate_panel",
    "calibrate_dgp",
    "load_dgp",
    "synthetic_sigma_u",
]


@dataclass
class FactorPanel:
    """Excess returns ``y`` (T x d, percent) and factors ``f`` (T x K)."""

    y: np.ndarray
    f: np.ndarray
    assets: List[str] = field(default_factory=list)
    periods: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.f.ndim == 1:
            self.f = self.f[:, None]
        if self.y.ndim != 2 or self.f.shape[0] != self.y.shape[0]:
            raise DataError(f"panel shapes disagree: y {self.y.shape}, f {self.f.shape}")
        if not self.assets:
            self.assets = [f"asset{i + 1}" for i in range(self.y.shape[1])]
        if len(self.assets) != self.y.shape[1]:
            raise DataError("asset labels do not match the number of columns")
        T, K = self.f.shape
        if T <= K + 1:
            raise DataError(f"need T > K + 1 observations, got T={T}, K={K}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.f))):
            raise DataError("panel contains missing or non-finite values")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.y.shape[1]

    @property
    def K(self) -> int:
        return self.f.shape[1]

    def window(self, start: int, length: int) -> "FactorPanel":
        sl = slice(start, start + length)
        return FactorPanel(self.y[sl], self.f[sl], list(self.assets),
                           list(self.periods[sl]) if self.periods else [])


@dataclass
class AlphaFit:
    """Per-asset OLS results; ``se_a`` is the classical homoskedastic se."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    se_a: np.ndarray
    resid: np.ndarray
    dof: int
    assets: List[str] = field(default_factory=list)

    @property
    def degenerate(self) -> np.ndarray:
        return self.se_a <= SE_FLOOR

    @property
    def t_stats(self) -> np.ndarray:
        """``a_hat / se_a``; zero where the se is degenerate."""
        safe = np.where(self.degenerate, 1.0, self.se_a)
        return np.where(self.degenerate, 0.0, self.a_hat / safe)

    @property
    def sigma2(self) -> np.ndarray:
        return (self.resid ** 2).sum(axis=0) / self.dof


def fit_alphas(panel: FactorPanel) -> AlphaFit:
    """OLS of every asset on ``[1, f_t]``."""
    T, K = panel.T, panel.K
    X = np.column_stack([np.ones(T), panel.f])
    if np.linalg.matrix_rank(X) < K + 1:
        raise FactorizationError(f"regressor matrix is rank deficient for asset {panel.assets[0]!r}")
    Q, R = np.linalg.qr(X)
    coef = np.linalg.solve(R, Q.T @ panel.y)
    resid = panel.y - X @ coef
    dof = T - K - 1
    Rinv = np.linalg.inv(R)
    xtx_inv00 = float(Rinv[0] @ Rinv[0])
    s2 = (resid ** 2).sum(axis=0) / dof
    se = np.sqrt(s2 * xtx_inv00)
    fit = AlphaFit(coef[0], coef[1:].T.copy(), se, resid, dof, list(panel.assets))
    for i in np.flatnonzero(fit.degenerate):
        log.warning("degenerate alpha standard error for asset %s", panel.assets[i])
    return fit


def alpha_pvalues(fit: AlphaFit) -> PValueSet:
    """Two-sided t(nu) p-values; degenerate standard errors give p = 1 (clamped)."""
    t = fit.t_stats
    p = 2.0 * statdist.sf(statdist.student_t(fit.dof), np.abs(t))
    p = np.where(fit.degenerate, 1.0, p)
    return PValueSet.from_raw(clamp_pvalues(p))


def screening_threshold(T: int, d: int, C: float = 1.06) -> float:
    """``delta = C log(log T) sqrt(log d)``."""
    if C <= 0:
        raise DomainError("C must be positive")
    if T < 3 or d < 2:
        raise DomainError("screening threshold needs T >= 3 and d >= 2")
    return C * math.log(math.log(T)) * math.sqrt(math.log(d))


def screening_procedure(fit: AlphaFit, C: float = 1.06, T: Optional[int] = None,
                        d: Optional[int] = None, variance: str = "asymptotic",
                        alpha: float = 0.05) -> RejectionReport:
    """Screening set ``S = {j : |a_j| / nu_j^(1/2) > delta}`` and
    ``J0 = sqrt(d) sum_{j in S} a_j^2 / nu_j``.

    Parameters
    ----------
    variance : {"asymptotic", "ols"}
        ``nu_j`` estimator. ``asymptotic`` uses ``sigma2_j / T`` with the
        residual variance on divisor T (the large-T variance of ``a_j`` when
        factor means are negligible); ``ols`` uses the squared OLS se.
    alpha : float
        Recorded in the report for comparability only; screening has no
        nominal level.
    """
    T = fit.resid.shape[0] if T is None else T
    d = fit.a_hat.size if d is None else d
    delta = screening_threshold(T, d, C)
    if variance == "ols":
        nu = fit.se_a ** 2
    elif variance == "asymptotic":
        nu = (fit.resid ** 2).sum(axis=0) / T / T
    else:
        raise DomainError(f"unknown screening variance {variance!r}")
    degenerate = nu <= SE_FLOOR ** 2
    z = np.where(degenerate, 0.0, np.abs(fit.a_hat) / np.sqrt(np.where(degenerate, 1.0, nu)))
    rejected = z > delta
    j0 = float(math.sqrt(d) * np.sum(z[rejected] ** 2))
    return RejectionReport("screening", alpha, rejected, z,
                           threshold=delta, extra={"J0": j0, "variance": variance})


# ---------------------------------------------------------------------------
# Calibrated DGP
# ---------------------------------------------------------------------------

def alpha_pattern(d: int, value: float = 0.5) -> np.ndarray:
    """``a_i = value`` for ``i <= floor(d^0.4)`` (1-based), else 0."""
    k = int(math.floor(d ** 0.4 + 1e-12))
    a = np.zeros(d)
    a[:k] = value
    return a


@dataclass
class CalibratedDgp:
    """Gaussian loadings, factors and idiosyncratic errors."""

    mu_B: np.ndarray
    Sigma_B: np.ndarray
    mu_f: np.ndarray
    Sigma_f: np.ndarray
    Sigma_u: np.ndarray
    name: str = "custom"
    alpha_value: float = 0.5
    notes: str = ""

    def __post_init__(self):
        for attr in ("mu_B", "Sigma_B", "mu_f", "Sigma_f", "Sigma_u"):
            setattr(self, attr, np.asarray(getattr(self, attr), dtype=float))
        K = self.mu_f.size
        if self.mu_B.size != K or self.Sigma_B.shape != (K, K) or self.Sigma_f.shape != (K, K):
            raise DomainError("loading and factor parameters must share dimension K")
        for label, m in (("Sigma_B", self.Sigma_B), ("Sigma_f", self.Sigma_f), ("Sigma_u", self.Sigma_u)):
            if not np.allclose(m, m.T):
                raise FactorizationError(f"{label} is not symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-10 * max(1.0, np.abs(m).max()):
                raise FactorizationError(f"{label} is not positive semi-definite")

    @property
    def d(self) -> int:
        return self.Sigma_u.shape[0]

    def to_dict(self) -> dict:
        return {
            "version": DGP_VERSION,
            "name": self.name,
            "alpha_value": self.alpha_value,
            "notes": self.notes,
            "mu_B": self.mu_B.tolist(),
            "Sigma_B": self.Sigma_B.tolist(),
            "mu_f": self.mu_f.tolist(),
            "Sigma_f": self.Sigma_f.tolist(),
            "Sigma_u": self.Sigma_u.tolist(),
        }

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, data: dict) -> "CalibratedDgp":
        if data.get("version") != DGP_VERSION:
            raise DomainError(f"unsupported DGP file version {data.get('version')!r}")
        return cls(data["mu_B"], data["Sigma_B"], data["mu_f"], data["Sigma_f"], data["Sigma_u"],
                   data.get("name", "custom"), data.get("alpha_value", 0.5), data.get("notes", ""))


def _psd_factor(m: np.ndarray) -> np.ndarray:
    """Symmetric square root; works for singular PSD matrices."""
    w, v = np.linalg.eigh(m)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_panel(dgp: CalibratedDgp, T: int = 240, d: Optional[int] = None, rng=None,
                   alternative: bool = False, cache: Optional[dict] = None):
    """``y_it = a_i + b_i' f_t + u_it`` with Gaussian ``b_i``, ``f_t``, ``u_t``.

    Returns
    -------
    panel : FactorPanel
    truth : ndarray of bool
        Non-zero alpha positions (empty under the null).
    """
    d = dgp.d if d is None else d
    if d != dgp.d:
        raise DomainError(f"DGP has d={dgp.d}, requested d={d}")
    gen = rng.generator() if isinstance(rng, RngStream) else (rng or RngStream(0).generator())
    if cache is None:
        cache = {}
    if "roots" not in cache:
        cache["roots"] = (_psd_factor(dgp.Sigma_B), _psd_factor(dgp.Sigma_f), _psd_factor(dgp.Sigma_u))
    rB, rf, ru = cache["roots"]
    K = dgp.mu_f.size
    B = dgp.mu_B + gen.standard_normal((d, K)) @ rB.T
    f = dgp.mu_f + gen.standard_normal((T, K)) @ rf.T
    u = gen.standard_normal((T, d)) @ ru.T
    a = alpha_pattern(d, dgp.alpha_value) if alternative else np.zeros(d)
    y = a + f @ B.T + u
    return FactorPanel(y, f), a != 0


def calibrate_dgp(panel: FactorPanel, name: str = "calibrated") -> CalibratedDgp:
    """Moments of fitted loadings, factors and residuals of an observed panel."""
    fit = fit_alphas(panel)
    return CalibratedDgp(
        mu_B=fit.b_hat.mean(axis=0),
        Sigma_B=np.atleast_2d(np.cov(fit.b_hat, rowvar=False)),
        mu_f=panel.f.mean(axis=0),
        Sigma_f=np.atleast_2d(np.cov(panel.f, rowvar=False)),
        Sigma_u=np.cov(fit.resid, rowvar=False),
        name=name,
    )


def synthetic_sigma_u(r_base: float = 0.35, r_extreme: float = 0.88, angle_max_deg: float = 121.9,
                      size_decay: float = 0.8, vol: float = 2.5, signal_vol: float = 2.92,
                      n_signal: int = 6) -> np.ndarray:
    """Idiosyncratic covariance for a 10 x 10 size/book-to-market grid.

    Asset ``10 s + b`` (size decile s, value decile b) loads on two latent
    shocks with radius ``r_b (1 - size_decay s / 9)`` and angle
    ``angle_max * b / 9``, where ``r_b`` grows linearly from ``r_base`` at
    mid value deciles to ``r_extreme`` at the extremes. Correlations are
    ``r_i r_j cos(angle_i - angle_j)``; the defaults span about
    [-0.41, 0.71]. The first ``n_signal`` assets get volatility
    ``signal_vol`` and the rest ``vol`` (monthly percent).
    """
    s, b = np.divmod(np.arange(100), 10)
    r = (r_base + (r_extreme - r_base) * np.abs(b - 4.5) / 4.5) * (1.0 - size_decay * s / 9.0)
    ang = np.deg2rad(angle_max_deg) * b / 9.0
    lam = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    corr = lam @ lam.T
    np.fill_diagonal(corr, 1.0)
    sd = np.full(100, vol)
    sd[:n_signal] = signal_vol
    return corr * np.outer(sd, sd)


def load_dgp(name: str = "size-bm") -> CalibratedDgp:
    """Load a DGP shipped with the package or a JSON file path."""
    path = Path(name)
    if not path.exists():
        path = Path(__file__).with_name("data") / f"{name.replace('-', '_')}.json"
    if not path.exists():
        raise DomainError(f"unknown DGP {name!r}")
    return CalibratedDgp.from_dict(json.loads(path.read_text()))
