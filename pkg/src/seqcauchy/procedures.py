"""
Familywise-error controlling procedures.

Every procedure maps a family of d hypotheses to a :class:`RejectionReport`
indexed by the *original* hypothesis order. The sequential Cauchy combination
(SCC) procedure and the Bonferroni/Holm/Hochberg/Hommel/Gumbel benchmarks
share one vectorised core (:func:`rejection_matrix`) so Monte Carlo drivers
can score thousands of replications at once; the per-family functions are
thin wrappers around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import statdist
from .errors import DomainError
from .statdist import DistributionKind

P_FLOOR = 1e-15
P_CEIL = 1.0 - 1e-15

PROCEDURES = ("bonferroni", "holm", "hochberg", "hommel", "gumbel", "scc")

__all__ = [
    "P_FLOOR",
    "P_CEIL",
    "PROCEDURES",
    "PValueSet",
    "RejectionReport",
    "CauchyWeights",
    "two_sided_pvalues",
    "clamp_pvalues",
    "cauchy_transform",
    "gcc_statistic",
    "gcc_pvalue",
    "scc_pvalues",
    "scc_procedure",
    "bonferroni",
    "holm",
    "hochberg",
    "hommel",
    "simes_global",
    "gumbel_threshold",
    "gumbel_procedure",
    "rejection_matrix",
    "run_procedure",
]


@dataclass(frozen=True)
class PValueSet:
    """Raw p-values with a stable ascending order.

    ``order[k]`` is the original index of the k-th smallest p-value; ties are
    broken by original index.
    """

    raw: np.ndarray
    order: np.ndarray

    @classmethod
    def from_raw(cls, pvalues) -> "PValueSet":
        p = clamp_pvalues(pvalues)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("p-values must form a non-empty vector")
        return cls(raw=p, order=np.argsort(p, kind="stable"))

    @property
    def d(self) -> int:
        return self.raw.size

    @property
    def sorted(self) -> np.ndarray:
        return self.raw[self.order]


@dataclass
class RejectionReport:
    """Decisions of one procedure on one family, in original index order.

    ``adjusted_values`` holds the per-hypothesis decision statistic: SCC
    p-values for ``scc``, the critical value each p-value was compared with
    for the inequality methods, and ``|X_i|`` for threshold methods (whose
    common critical value is in ``threshold``).
    """

    procedure: str
    alpha: float
    rejected: np.ndarray
    adjusted_values: np.ndarray
    threshold: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def global_rejected(self) -> bool:
        return bool(self.rejected.any())

    @property
    def n_rejected(self) -> int:
        return int(self.rejected.sum())

    def rejected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.rejected)


@dataclass(frozen=True)
class CauchyWeights:
    """Non-negative combination weights summing to one.

    Weights are attached to hypotheses, so they travel with their p-value
    when the family is sorted.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("Cauchy weights must be non-negative and sum to 1")
        object.__setattr__(self, "w", w)

    @classmethod
    def equal(cls, d: int) -> "CauchyWeights":
        return cls(np.full(d, 1.0 / d))


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def clamp_pvalues(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)):
        raise DomainError(f"NaN p-value at index {np.flatnonzero(np.isnan(p.ravel()))[0]}")
    return np.clip(p, P_FLOOR, P_CEIL)


def two_sided_pvalues(stats, null: DistributionKind = statdist.NORMAL) -> PValueSet:
    """``p_i = 2 (1 - F(|x_i|))`` under a symmetric null, clamped to (0, 1)."""
    x = np.asarray(stats, dtype=float)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise DomainError(f"non-finite statistic at index {bad[0]}")
    return PValueSet.from_raw(2.0 * statdist.sf(null, np.abs(x)))


def two_sided_pmatrix(stats, null: DistributionKind = statdist.NORMAL) -> np.ndarray:
    """Clamped two-sided p-values for an array of any shape."""
    x = np.asarray(stats, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite statistic")
    return clamp_pvalues(2.0 * statdist.sf(null, np.abs(x)))


def cauchy_transform(p) -> np.ndarray:
    """``tan((0.5 - p) pi)``, evaluated as a cotangent away from the centre.

    The cotangent form keeps full relative precision for p near 0 or 1.
    """
    p = np.asarray(p, dtype=float)
    mid = np.abs(p - 0.5) < 0.25
    with np.errstate(divide="ignore"):
        lo = 1.0 / np.tan(np.pi * p)
        hi = -1.0 / np.tan(np.pi * (1.0 - p))
    return np.where(mid, np.tan((0.5 - p) * np.pi), np.where(p < 0.5, lo, hi))


def gcc_statistic(pvals: PValueSet, weights: Optional[CauchyWeights] = None) -> float:
    """Weighted Cauchy combination ``sum_i w_i tan((0.5 - p_i) pi)``."""
    if weights is None:
        weights = CauchyWeights.equal(pvals.d)
    if weights.w.size != pvals.d:
        raise DomainError(f"{weights.w.size} weights for {pvals.d} p-values")
    return float(np.dot(weights.w, cauchy_transform(pvals.raw)))


def gcc_pvalue(t):
    """Standard-Cauchy upper tail ``1/2 - arctan(t)/pi``."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Cauchy combination statistic must be finite")
    with np.errstate(divide="ignore"):
        out = np.where(arr > 0, np.arctan(1.0 / arr) / np.pi, 0.5 - np.arctan(arr) / np.pi)
    return float(out) if out.ndim == 0 else out


def _scc_sorted(ps: np.ndarray, w_sorted: np.ndarray) -> np.ndarray:
    """SCC p-values for rows of ascending p-values (shape (S, d) or (d,))."""
    terms = w_sorted * cauchy_transform(ps)
    # suffix sums: T_(i) = sum_{j >= i} w_j tan(...)
    suffix = np.flip(np.cumsum(np.flip(terms, axis=-1), axis=-1), axis=-1)
    return gcc_pvalue(suffix)


def scc_pvalues(pvals: PValueSet, weights: Optional[CauchyWeights] = None) -> np.ndarray:
    """SCC p-values in rank order (entry i belongs to the i-th smallest p)."""
    if weights is None:
        weights = CauchyWeights.equal(pvals.d)
    if weights.w.size != pvals.d:
        raise DomainError(f"{weights.w.size} weights for {pvals.d} p-values")
    return np.atleast_1d(_scc_sorted(pvals.sorted, weights.w[pvals.order]))


def scc_procedure(pvals: PValueSet, alpha: float = 0.05,
                  weights: Optional[CauchyWeights] = None) -> RejectionReport:
    """Sequential Cauchy combination test.

    For rank i the statistic combines the suffix ``p_(i), ..., p_(d)`` with
    the fixed global weights (no renormalisation), and ``H_(i)`` is rejected
    when its Cauchy p-value is at most ``alpha``. Decisions are marginal per
    rank; no contiguity is imposed.
    """
    _check_alpha(alpha)
    ptilde_sorted = scc_pvalues(pvals, weights)
    ptilde = np.empty_like(ptilde_sorted)
    ptilde[pvals.order] = ptilde_sorted
    return RejectionReport("scc", alpha, ptilde <= alpha, ptilde)


# ---------------------------------------------------------------------------
# Inequality-based benchmarks
# ---------------------------------------------------------------------------

def _holm_sorted(ps, alpha):
    d = ps.shape[-1]
    thr = alpha / (d - np.arange(d))
    passed = ps <= thr
    return np.logical_and.accumulate(passed, axis=-1)


def _hochberg_sorted(ps, alpha):
    d = ps.shape[-1]
    thr = alpha / (d - np.arange(d))
    passed = ps <= thr
    return np.flip(np.logical_or.accumulate(np.flip(passed, axis=-1), axis=-1), axis=-1)


def _simes_sorted(ps, alpha):
    d = ps.shape[-1]
    return np.any(ps <= alpha * np.arange(1, d + 1) / d, axis=-1)


def _hommel_j(ps, alpha) -> Optional[int]:
    """Largest i with p_(d-i+k) > k alpha / i for k = 1..i, or None."""
    d = ps.size
    for i in range(d, 0, -1):
        k = np.arange(1, i + 1)
        if np.all(ps[d - i:] > k * alpha / i):
            return i
    return None


def _hommel_sorted_row(ps, alpha):
    j = _hommel_j(ps, alpha)
    if j is None:
        return np.ones(ps.size, dtype=bool)
    return ps <= alpha / j


def _hommel_sorted(ps, alpha):
    ps2 = np.atleast_2d(ps)
    out = np.zeros(ps2.shape, dtype=bool)
    # Simes not rejecting implies j = d and no p-value below alpha / d
    for r in np.flatnonzero(_simes_sorted(ps2, alpha)):
        out[r] = _hommel_sorted_row(ps2[r], alpha)
    return out.reshape(np.shape(ps))


def _report_from_sorted(name, pvals, alpha, rej_sorted, thr_sorted):
    rejected = np.empty(pvals.d, dtype=bool)
    rejected[pvals.order] = rej_sorted
    thr = np.empty(pvals.d)
    thr[pvals.order] = thr_sorted
    return RejectionReport(name, alpha, rejected, thr)


def bonferroni(pvals: PValueSet, alpha: float = 0.05) -> RejectionReport:
    """Reject ``H_i`` when ``p_i <= alpha / d``."""
    _check_alpha(alpha)
    thr = np.full(pvals.d, alpha / pvals.d)
    return RejectionReport("bonferroni", alpha, pvals.raw <= thr, thr)


def holm(pvals: PValueSet, alpha: float = 0.05) -> RejectionReport:
    """Step-down: scan from the smallest p-value against ``alpha/(d-i+1)``
    and stop at the first failure."""
    _check_alpha(alpha)
    d = pvals.d
    return _report_from_sorted("holm", pvals, alpha, _holm_sorted(pvals.sorted, alpha),
                               alpha / (d - np.arange(d)))


def hochberg(pvals: PValueSet, alpha: float = 0.05) -> RejectionReport:
    """Step-up: the largest rank clearing ``alpha/(d-i+1)`` is rejected
    together with every smaller p-value."""
    _check_alpha(alpha)
    d = pvals.d
    return _report_from_sorted("hochberg", pvals, alpha, _hochberg_sorted(pvals.sorted, alpha),
                               alpha / (d - np.arange(d)))


def hommel(pvals: PValueSet, alpha: float = 0.05) -> RejectionReport:
    """Hommel's closed Simes procedure.

    With j the largest i such that ``p_(d-i+k) > k alpha / i`` for every
    k = 1..i, reject all ``H_(i)`` with ``p_(i) <= alpha / j``; if no such
    i exists every hypothesis is rejected.
    """
    _check_alpha(alpha)
    ps = pvals.sorted
    j = _hommel_j(ps, alpha)
    thr = np.full(pvals.d, 1.0 if j is None else alpha / j)
    return _report_from_sorted("hommel", pvals, alpha, _hommel_sorted_row(ps, alpha), thr)


def simes_global(pvals: PValueSet, alpha: float = 0.05) -> bool:
    """Simes global test: reject when ``p_(i) <= i alpha / d`` for some i."""
    _check_alpha(alpha)
    return bool(_simes_sorted(pvals.sorted, alpha))


# ---------------------------------------------------------------------------
# Threshold on |X|
# ---------------------------------------------------------------------------

def gumbel_threshold(d: int, alpha: float = 0.05) -> float:
    """``G^{-1}(1 - alpha) S_d + C_d`` from the Gumbel limit of max |X_i|."""
    _check_alpha(alpha)
    if d < 2:
        raise DomainError("the Gumbel threshold needs d >= 2 (log log d undefined)")
    r = np.sqrt(2.0 * np.log(d))
    c_d = r - (np.log(np.pi) + np.log(np.log(d))) / (2.0 * r)
    s_d = 1.0 / r
    return float(statdist.quantile(statdist.GUMBEL, 1.0 - alpha) * s_d + c_d)


def gumbel_procedure(stats, alpha: float = 0.05) -> RejectionReport:
    """Reject ``H_i`` when ``|X_i|`` exceeds the Gumbel threshold."""
    x = np.abs(np.asarray(stats, dtype=float))
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite statistic")
    thr = gumbel_threshold(x.size, alpha)
    return RejectionReport("gumbel", alpha, x > thr, x, threshold=thr)


# ---------------------------------------------------------------------------
# Vectorised core for Monte Carlo drivers
# ---------------------------------------------------------------------------

def rejection_matrix(procedure: str, pvalues: np.ndarray, alpha: float = 0.05,
                     stats: Optional[np.ndarray] = None) -> np.ndarray:
    """Rejections for a block of families, one family per row.

    Parameters
    ----------
    procedure : str
        One of :data:`PROCEDURES`.
    pvalues : ndarray, shape (S, d)
        Raw p-values (clamped here).
    stats : ndarray, shape (S, d), optional
        Test statistics; required for ``gumbel``.

    Returns
    -------
    ndarray of bool, shape (S, d), in original hypothesis order.
    """
    _check_alpha(alpha)
    P = clamp_pvalues(np.atleast_2d(pvalues))
    S, d = P.shape
    if procedure == "bonferroni":
        return P <= alpha / d
    if procedure == "gumbel":
        if stats is None:
            raise DomainError("gumbel needs the test statistics")
        return np.abs(np.atleast_2d(stats)) > gumbel_threshold(d, alpha)
    order = np.argsort(P, axis=1, kind="stable")
    ps = np.take_along_axis(P, order, axis=1)
    if procedure == "holm":
        rs = _holm_sorted(ps, alpha)
    elif procedure == "hochberg":
        rs = _hochberg_sorted(ps, alpha)
    elif procedure == "hommel":
        rs = _hommel_sorted(ps, alpha)
    elif procedure == "scc":
        rs = _scc_sorted(ps, np.full(d, 1.0 / d)) <= alpha
    else:
        raise DomainError(f"unknown procedure {procedure!r}")
    out = np.empty_like(rs)
    np.put_along_axis(out, order, rs, axis=1)
    return out


def run_procedure(procedure: str, stats, alpha: float = 0.05,
                  null: DistributionKind = statdist.NORMAL) -> RejectionReport:
    """Dispatch by name from raw statistics (p-values derived under ``null``)."""
    if procedure == "gumbel":
        return gumbel_procedure(stats, alpha)
    pv = two_sided_pvalues(stats, null)
    table = {"bonferroni": bonferroni, "holm": holm, "hochberg": hochberg,
             "hommel": hommel, "scc": scc_procedure}
    if procedure not in table:
        raise DomainError(f"unknown procedure {procedure!r}")
    return table[procedure](pv, alpha)
