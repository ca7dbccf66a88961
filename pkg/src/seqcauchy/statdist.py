"""
Numerical primitives: null distributions, correlation models, correlated
normal sampling, Gaussian AR(1) paths and the reproducible RNG contract.

Every random quantity in the package is drawn from an :class:`RngStream`,
a counter-based Philox generator keyed by ``(seed, stream_id)``. Monte Carlo
replication ``s`` always uses ``stream_id = s``, so results do not depend
on execution order or on the number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special
from scipy.signal import lfilter

from .errors import DomainError, FactorizationError

__all__ = [
    "DistributionKind",
    "NORMAL",
    "CAUCHY",
    "GUMBEL",
    "student_t",
    "cdf",
    "sf",
    "quantile",
    "CorrelationSpec",
    "build_correlation",
    "cholesky",
    "RngStream",
    "sample_mvn",
    "sample_mvn_batch",
    "simulate_ar1",
    "simulate_ar1_batch",
]


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

_TAGS = ("standard-normal", "student-t", "standard-cauchy", "gumbel-standard")


@dataclass(frozen=True)
class DistributionKind:
    """One of the four null laws used in the package.

    ``df`` is only meaningful (and required) for ``student-t``.
    """

    tag: str
    df: Optional[int] = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise DomainError(f"unknown distribution tag {self.tag!r}")
        if self.tag == "student-t":
            if self.df is None or int(self.df) != self.df or self.df < 1:
                raise DomainError(f"student-t needs an integer df >= 1, got {self.df!r}")
        elif self.df is not None:
            raise DomainError(f"{self.tag} takes no degrees of freedom")

    def __str__(self):
        return f"t({self.df})" if self.tag == "student-t" else self.tag


NORMAL = DistributionKind("standard-normal")
CAUCHY = DistributionKind("standard-cauchy")
GUMBEL = DistributionKind("gumbel-standard")


def student_t(df: int) -> DistributionKind:
    return DistributionKind("student-t", int(df))


def _finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(np.atleast_1d(arr)))
        raise DomainError(f"non-finite argument at index {bad[0]}")
    return arr


def _scalar_or_array(out, x):
    return float(out) if np.ndim(x) == 0 else out


def cdf(kind: DistributionKind, x):
    """Cumulative distribution function, vectorised over ``x``."""
    arr = _finite(x)
    if kind.tag == "standard-normal":
        out = special.ndtr(arr)
    elif kind.tag == "student-t":
        # upper half via the lower tail: stdtr is not monotone to the ulp near 1
        out = np.where(arr > 0, 1.0 - special.stdtr(kind.df, -np.abs(arr)), special.stdtr(kind.df, arr))
    elif kind.tag == "standard-cauchy":
        # arctan form is accurate in both tails
        out = np.where(arr < 0, np.arctan2(1.0, -arr) / np.pi, 1.0 - np.arctan2(1.0, arr) / np.pi)
    else:
        out = np.exp(-np.exp(-arr))
    return _scalar_or_array(out, x)


def sf(kind: DistributionKind, x):
    """Survival function ``1 - cdf``, computed without cancellation."""
    arr = _finite(x)
    if kind.tag == "standard-normal":
        out = special.ndtr(-arr)
    elif kind.tag == "student-t":
        out = special.stdtr(kind.df, -arr)
    elif kind.tag == "standard-cauchy":
        out = np.where(arr > 0, np.arctan2(1.0, arr) / np.pi, 1.0 - np.arctan2(1.0, -arr) / np.pi)
    else:
        out = -np.expm1(-np.exp(-arr))
    return _scalar_or_array(out, x)


def quantile(kind: DistributionKind, q):
    """Inverse CDF for ``q`` in the open unit interval."""
    arr = _finite(q)
    if np.any((arr <= 0) | (arr >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    if kind.tag == "standard-normal":
        out = special.ndtri(arr)
    elif kind.tag == "student-t":
        out = special.stdtrit(kind.df, arr)
    elif kind.tag == "standard-cauchy":
        out = np.tan(np.pi * (arr - 0.5))
    else:
        out = -np.log(-np.log(arr))
    return _scalar_or_array(out, q)


# ---------------------------------------------------------------------------
# Correlation models
# ---------------------------------------------------------------------------

_MODELS = ("exponential", "polynomial", "mixture", "block-diagonal")


@dataclass(frozen=True)
class CorrelationSpec:
    """Correlation-matrix generator.

    Parameters
    ----------
    model : {"exponential", "polynomial", "mixture", "block-diagonal"}
    dim : int
        Matrix dimension d.
    theta : float
        Decay (exponential, polynomial), equi-correlation (block-diagonal),
        or the first-half decay for ``mixture``.
    theta2 : float, optional
        Second-half decay, ``mixture`` only.
    block_size : int
        Block size for ``block-diagonal`` (must divide ``dim``).
    """

    model: str
    dim: int
    theta: float
    theta2: Optional[float] = None
    block_size: int = 10

    def __post_init__(self):
        if self.model not in _MODELS:
            raise DomainError(f"unknown correlation model {self.model!r}")
        if self.dim < 1:
            raise DomainError("dimension must be positive")
        if self.model == "exponential" and not abs(self.theta) < 1:
            raise DomainError("exponential model needs |theta| < 1")
        if self.model == "polynomial" and not self.theta > 0:
            raise DomainError("polynomial model needs theta > 0")
        if self.model == "mixture":
            if self.theta2 is None:
                raise DomainError("mixture model needs theta2")
            if not (abs(self.theta) < 1 and abs(self.theta2) < 1):
                raise DomainError("mixture model needs |theta1|, |theta2| < 1")
        if self.model == "block-diagonal":
            if not 0 <= self.theta < 1:
                raise DomainError("block-diagonal model needs theta in [0, 1)")
            if self.block_size < 1 or self.dim % self.block_size:
                raise DomainError("block size must divide the dimension")

    def label(self) -> str:
        if self.model == "mixture":
            return f"({self.theta:g}, {self.theta2:g})"
        return f"{self.theta:g}"

    def to_dict(self) -> dict:
        out = {"model": self.model, "dim": self.dim, "theta": self.theta}
        if self.model == "mixture":
            out["theta2"] = self.theta2
        if self.model == "block-diagonal":
            out["block_size"] = self.block_size
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelationSpec":
        return cls(
            model=data["model"],
            dim=int(data["dim"]),
            theta=float(data["theta"]),
            theta2=None if data.get("theta2") is None else float(data["theta2"]),
            block_size=int(data.get("block_size", 10)),
        )


def build_correlation(spec: CorrelationSpec, check: bool = True) -> np.ndarray:
    """Materialise the d x d correlation matrix of ``spec``.

    The matrix is built from ``|i - j|`` so it is symmetric to the bit.
    With ``check=True`` a Cholesky factorisation is attempted and failure
    raises :class:`FactorizationError`.
    """
    d = spec.dim
    idx = np.arange(d)
    lag = np.abs(idx[:, None] - idx[None, :]).astype(float)
    if spec.model == "exponential":
        corr = spec.theta ** lag
    elif spec.model == "polynomial":
        corr = 1.0 / (0.7 + lag ** spec.theta)
    elif spec.model == "mixture":
        half = d // 2
        corr = np.zeros((d, d))
        corr[:half, :half] = spec.theta ** lag[:half, :half]
        corr[half:, half:] = spec.theta2 ** lag[half:, half:]
    else:
        block = idx // spec.block_size
        corr = np.where(block[:, None] == block[None, :], spec.theta, 0.0)
    np.fill_diagonal(corr, 1.0)
    if check:
        cholesky(corr, label=f"{spec.model} {spec.label()} d={d}")
    return corr


def cholesky(matrix: np.ndarray, label: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; no pivoting and no repair of indefinite input."""
    try:
        return np.linalg.cholesky(np.asarray(matrix, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky failed for {label}: {exc}") from None


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams occupy disjoint regions of the Philox counter space (the stream
    id is the top counter word), so any two ids are independent.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _U64 and 0 <= self.stream_id <= _U64):
            raise DomainError("seed and stream id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of the stream."""
        bitgen = np.random.Philox(key=self.seed, counter=[0, 0, 0, self.stream_id])
        return np.random.Generator(bitgen)

    def child(self, sub: int) -> "RngStream":
        """Derived stream for a sub-task of the same replication."""
        mixed = np.random.SeedSequence([self.seed, self.stream_id, sub]).generate_state(2, np.uint64)
        return RngStream(int(mixed[0]), int(mixed[1]))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_mvn(mean, corr, rng, chol: Optional[np.ndarray] = None) -> np.ndarray:
    """One draw ``mean + L z`` with ``L`` the lower Cholesky factor of ``corr``."""
    mean = np.asarray(mean, dtype=float)
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1] or mean.shape != (corr.shape[0],):
        raise DomainError(f"dimension mismatch: mean {mean.shape}, corr {corr.shape}")
    L = cholesky(corr) if chol is None else chol
    z = _gen(rng).standard_normal(mean.shape[0])
    return mean + L @ z


def sample_mvn_batch(chol: np.ndarray, seed: int, streams) -> np.ndarray:
    """Zero-mean draws for a block of replications, one stream per row.

    Row ``k`` equals ``sample_mvn(0, corr, RngStream(seed, streams[k]))``.
    """
    d = chol.shape[0]
    z = np.empty((len(streams), d))
    for k, s in enumerate(streams):
        z[k] = RngStream(seed, int(s)).generator().standard_normal(d)
    return z @ chol.T


def simulate_ar1(theta: float, length: int, rng, burn_in: int = 0) -> np.ndarray:
    """Stationary Gaussian AR(1) path with unit marginal variance.

    ``x_i = theta x_{i-1} + e_i`` with ``e_i ~ N(0, 1 - theta^2)``. The
    recursion starts from an exact draw of the stationary law, so
    ``burn_in`` is only needed for reproducing legacy draw sequences.
    """
    return simulate_ar1_batch(theta, length, 1, _gen(rng), burn_in)[0]


def simulate_ar1_batch(theta: float, length: int, n_paths: int, gen: np.random.Generator,
                       burn_in: int = 0) -> np.ndarray:
    if not abs(theta) < 1:
        raise DomainError(f"AR(1) coefficient must satisfy |theta| < 1, got {theta}")
    if burn_in < 0 or length < 1:
        raise DomainError("length must be positive and burn_in non-negative")
    total = length + burn_in
    e = gen.standard_normal((n_paths, total))
    e[:, 1:] *= math.sqrt(1.0 - theta * theta)
    # e[:, 0] is the stationary N(0, 1) start
    x = lfilter([1.0], [1.0, -theta], e, axis=1)
    return x[:, burn_in:]
