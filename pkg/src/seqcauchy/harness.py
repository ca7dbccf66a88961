"""
Monte Carlo engine, metrics and table emission.

Replication ``s`` always draws from stream ``s`` of the configured seed, and
replications are processed in fixed-size chunks whose partial sums are
merged in chunk order. Results therefore do not depend on the number of
worker processes.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import procedures as pr
from . import resampling as rs
from .alpha import alpha_pvalues, fit_alphas, load_dgp, screening_procedure, simulate_panel
from .driftburst import DriftBurstConfig, db_sequence
from .errors import ConfigError, DataError, DomainError, FactorizationError, ReplicationAbortError
from .simgen import (FLASH_CRASH, MINUTES_PER_DAY, NO_BURST, PERSISTENT_EXPANSION, BurstSpec,
                     HestonParams, SignalSpec, default_signal_strength, gen_statistics_batch,
                     simulate_paths)
from .statdist import CorrelationSpec, RngStream, build_correlation, cholesky

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
KINDS = ("stat-mc", "driftburst-mc", "alpha-mc", "cv-table")
METRICS = ("fwer", "power", "detection", "false_detections")
ABORT_LIMIT = 0.001
TABLE_ORDER = ("bonferroni", "holm", "hommel", "hochberg", "gumbel")
_EXTRA = {"stat-mc": (), "driftburst-mc": ("resampling",), "alpha-mc": ("screening",),
          "cv-table": ()}
_CHUNK = {"stat-mc": 500, "driftburst-mc": 10, "alpha-mc": 100}
_MODULE_ERRORS = (DomainError, DataError, FactorizationError)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "RowResult",
    "ProcedureMetrics",
    "ReplicationScore",
    "score_replication",
    "score_matrix",
    "run_experiment",
    "emit_tables",
    "preset",
    "PRESETS",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """A reproducible Monte Carlo run.

    ``dgp`` is kind specific:

    * ``stat-mc``: ``rows`` (list of correlation specs) and ``signal``
      (``count``, ``strength``, ``placement``).
    * ``driftburst-mc``: ``scenario`` (``null``, ``flash-crash``,
      ``persistent-expansion``), ``gamma``, ``spacing``, ``n_days``,
      ``detection`` (``window`` or ``strict``), optional ``heston`` and
      ``driftburst`` overrides, ``cv_table`` (``default`` or ``direct``).
    * ``alpha-mc``: ``dgp`` (shipped name or JSON path), ``T``,
      ``alternative``, ``C``, ``screening_variance``.
    * ``cv-table``: ``theta_grid``, ``d_grid``, ``alpha_levels``,
      ``burn_in``; ``reps`` is the number of simulated paths per cell.
    """

    kind: str
    procedures: List[str]
    reps: int
    dgp: dict = field(default_factory=dict)
    alpha: float = 0.05
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps must be a positive integer")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        allowed = set(pr.PROCEDURES) | set(_EXTRA[self.kind])
        bad = [p for p in self.procedures if p not in allowed]
        if bad:
            raise ConfigError(f"procedures not available for {self.kind}: {bad}")
        if self.kind != "cv-table" and not self.procedures:
            raise ConfigError("no procedures configured")

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, "kind": self.kind, "name": self.name,
                "procedures": list(self.procedures), "reps": self.reps, "alpha": self.alpha,
                "seed": self.seed, "threads": self.threads, "out": self.out,
                "dgp": copy.deepcopy(self.dgp)}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {data.get('version')!r}")
        unknown = set(data) - {"version", "kind", "name", "procedures", "reps", "alpha", "seed",
                               "threads", "out", "dgp"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(kind=data["kind"], procedures=list(data.get("procedures", [])),
                       reps=data["reps"], dgp=dict(data.get("dgp", {})),
                       alpha=float(data.get("alpha", 0.05)), seed=int(data.get("seed", 0)),
                       threads=int(data.get("threads", 1)), out=data.get("out"),
                       name=data.get("name", ""))
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from None

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def config_hash(self) -> str:
        """SHA-256 prefix of the canonical config; parallelism and paths excluded."""
        d = self.to_dict()
        d.pop("threads")
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationScore:
    any_false_rejection: bool
    any_rejection: bool
    true_discoveries: int  # |F ∩ R|, F = false nulls
    false_discoveries: int  # |T ∩ R|, T = true nulls


def score_replication(report, truth) -> ReplicationScore:
    """Count outcomes of one family.

    ``truth`` is True where the null is false. Only ``report.rejected`` is
    read (a plain boolean vector is accepted too).
    """
    rej = np.asarray(getattr(report, "rejected", report), dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if rej.shape != t.shape:
        raise DomainError(f"rejection vector has shape {rej.shape}, truth {t.shape}")
    tp = int(np.sum(rej & t))
    fp = int(np.sum(rej & ~t))
    return ReplicationScore(fp > 0, bool(rej.any()), tp, fp)


@dataclass
class _Tally:
    """Associative per-procedure counters."""

    n: int = 0
    n_null: int = 0  # replications with at least one true null
    fwer_hits: int = 0
    power_hits: int = 0
    det_sum: float = 0.0
    det_n: int = 0
    false_sum: int = 0

    def merge(self, other: "_Tally") -> None:
        self.n += other.n
        self.n_null += other.n_null
        self.fwer_hits += other.fwer_hits
        self.power_hits += other.power_hits
        self.det_sum += other.det_sum
        self.det_n += other.det_n
        self.false_sum += other.false_sum


def score_matrix(rejected: np.ndarray, truth: np.ndarray) -> _Tally:
    """Vectorised :func:`score_replication` summed over rows."""
    R = np.atleast_2d(rejected)
    T = np.atleast_2d(truth)
    if R.shape != T.shape:
        raise DomainError(f"rejection block has shape {R.shape}, truth {T.shape}")
    fp = np.sum(R & ~T, axis=1)
    tp = np.sum(R & T, axis=1)
    nF = T.sum(axis=1)
    has_null = nF < T.shape[1]
    has_alt = nF > 0
    return _Tally(
        n=R.shape[0], n_null=int(has_null.sum()), fwer_hits=int(np.sum((fp > 0) & has_null)),
        power_hits=int(np.sum(R.any(axis=1))),
        det_sum=float(np.sum(tp[has_alt] / nF[has_alt])), det_n=int(has_alt.sum()),
        false_sum=int(fp.sum()))


@dataclass(frozen=True)
class ProcedureMetrics:
    """Rates in percent; ``None`` where the DGP leaves a metric undefined."""

    fwer: Optional[float]
    power: float
    detection: Optional[float]
    false_detections: float

    @classmethod
    def from_tally(cls, t: _Tally) -> "ProcedureMetrics":
        if t.n == 0:
            return cls(None, float("nan"), None, float("nan"))
        return cls(100.0 * t.fwer_hits / t.n_null if t.n_null else None,
                   100.0 * t.power_hits / t.n,
                   100.0 * t.det_sum / t.det_n if t.det_n else None,
                   t.false_sum / t.n)

    def get(self, metric: str):
        return getattr(self, metric)


@dataclass
class RowResult:
    label: str
    n_reps: int
    metrics: Dict[str, ProcedureMetrics]
    theta_hat: Optional[float] = None
    extra: Dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    """Aggregated run output. ``curve`` holds Fig.-6-style rows for cv-table runs."""

    config: ExperimentConfig
    rows: List[RowResult]
    aborted: int = 0
    runtime: float = 0.0
    curve: List[dict] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    @property
    def seed(self) -> int:
        return self.config.seed

    def row(self, label: str) -> RowResult:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else round(v, 6)

        return {
            "metadata": {"config_hash": self.config_hash, "seed": self.seed,
                         "kind": self.config.kind, "name": self.config.name,
                         "reps": self.config.reps, "alpha": self.config.alpha,
                         "aborted": self.aborted},
            "rows": [{"label": r.label, "n_reps": r.n_reps, "theta_hat": num(r.theta_hat),
                      "extra": {k: num(v) for k, v in r.extra.items()},
                      "metrics": {p: {m: num(getattr(pm, m)) for m in METRICS}
                                  for p, pm in r.metrics.items()}}
                     for r in self.rows],
            "curve": [{k: num(v) if isinstance(v, float) else v for k, v in c.items()}
                      for c in self.curve],
        }


# ---------------------------------------------------------------------------
# Chunk workers (module level so they pickle)
# ---------------------------------------------------------------------------

_CHOL_CACHE: Dict[str, np.ndarray] = {}
_DGP_CACHE: Dict[str, tuple] = {}


def _signal(dgp: dict, d: int) -> SignalSpec:
    sig = dgp.get("signal", {}) or {}
    count = int(sig.get("count", 0))
    strength = sig.get("strength")
    if strength is None:
        strength = default_signal_strength(d, count) if count else 0.0
    return SignalSpec(count, float(strength), sig.get("placement", "random"))


def _procedure_block(names, P, X, alpha) -> Dict[str, np.ndarray]:
    return {p: pr.rejection_matrix(p, P, alpha, stats=X) for p in names}


def _stat_chunk(cfg: dict, row: int, start: int, stop: int):
    spec = CorrelationSpec.from_dict(cfg["dgp"]["rows"][row])
    key = json.dumps(spec.to_dict(), sort_keys=True)
    if key not in _CHOL_CACHE:
        _CHOL_CACHE[key] = cholesky(build_correlation(spec), spec.label())
    L = _CHOL_CACHE[key]
    signal = _signal(cfg["dgp"], spec.dim)
    X, T = gen_statistics_batch(L, signal, cfg["seed"], range(start, stop))
    P = pr.two_sided_pmatrix(X)
    tallies = {p: score_matrix(r, T) for p, r in _procedure_block(cfg["procedures"], P, X,
                                                                   cfg["alpha"]).items()}
    return {row: (tallies, 0.0, 0)}, 0, None


def _burst_for(dgp: dict) -> Tuple[BurstSpec, int]:
    scenario = dgp.get("scenario", "null")
    if scenario == "null":
        return NO_BURST, int(dgp.get("n_days", 1))
    if scenario == "flash-crash":
        return FLASH_CRASH, int(dgp.get("n_days", 1))
    if scenario == "persistent-expansion":
        n = int(dgp.get("n_days", 3))
        b = PERSISTENT_EXPANSION
        return BurstSpec(b.kind, tau=1.0, dt=1.0, alpha_b=b.alpha_b, beta_b=b.beta_b, a=b.a,
                         b=b.b, clock_days=float(n)), n
    raise ConfigError(f"unknown drift-burst scenario {scenario!r}")


def _strict_truth(burst: BurstSpec, n_days: int) -> np.ndarray:
    """Only the minute whose interval ends at (or contains) the burst time."""
    truth = np.zeros(n_days * MINUTES_PER_DAY, dtype=bool)
    if burst.active:
        m = int(math.ceil(burst.tau * burst.clock_days * MINUTES_PER_DAY - 1e-9)) - 1
        truth[min(max(m, 0), truth.size - 1)] = True
    return truth


def _driftburst_chunk(cfg: dict, row: int, start: int, stop: int):
    dgp = cfg["dgp"]
    burst, n_days = _burst_for(dgp)
    params = HestonParams(**dgp.get("heston", {}))
    db_cfg = DriftBurstConfig(**dgp.get("driftburst", {}))
    table = rs.default_table() if dgp.get("cv_table", "default") == "default" else None
    procs = cfg["procedures"]
    alpha = cfg["alpha"]
    paths = simulate_paths(params, burst, float(dgp.get("gamma", 0.5)),
                           float(dgp.get("spacing", 1.0)), n_days, cfg["seed"], range(start, stop))
    strict = dgp.get("detection", "window") == "strict"
    acc = {k: ({p: _Tally() for p in procs}, 0.0, 0) for k in range(n_days)}
    aborted = 0
    for s, path in zip(range(start, stop), paths):
        truth_all = _strict_truth(burst, n_days) if strict else path.truth
        try:
            seq = db_sequence(path, db_cfg)
            day_out = []
            for k in range(n_days):
                m = seq.day == k
                x = seq.stats[m]
                if not np.all(np.isfinite(x)):
                    raise DomainError(f"failed statistics on day {k}")
                truth = truth_all[k * MINUTES_PER_DAY + seq.minute[m] - 1]
                rej = {}
                P = pr.two_sided_pmatrix(x[None, :])
                for p in procs:
                    if p == "resampling":
                        rep = rs.resampling_procedure(x, alpha, table,
                                                      rng=RngStream(cfg["seed"], s).child(k + 1))
                        rej[p] = rep.rejected
                    else:
                        rej[p] = pr.rejection_matrix(p, P, alpha, stats=x[None, :])[0]
                day_out.append((rej, truth, rs.fit_ar1(x).theta_hat))
        except _MODULE_ERRORS as exc:
            log.debug("replication %d aborted: %s", s, exc)
            aborted += 1
            continue
        for k, (rej, truth, th) in enumerate(day_out):
            tallies, tsum, tn = acc[k]
            for p in procs:
                tallies[p].merge(score_matrix(rej[p], truth))
            acc[k] = (tallies, tsum + th, tn + 1)
    return acc, aborted, None


def _alpha_chunk(cfg: dict, row: int, start: int, stop: int):
    dgp_cfg = cfg["dgp"]
    name = dgp_cfg.get("dgp", "size-bm")
    if name not in _DGP_CACHE:
        _DGP_CACHE[name] = (load_dgp(name), {})
    dgp, cache = _DGP_CACHE[name]
    T = int(dgp_cfg.get("T", 240))
    alt = bool(dgp_cfg.get("alternative", False))
    procs = cfg["procedures"]
    tallies = {p: _Tally() for p in procs}
    d = dgp.d
    t_sum = np.zeros(d)
    tt_sum = np.zeros((d, d))
    aborted = 0
    for s in range(start, stop):
        try:
            panel, truth = simulate_panel(dgp, T, rng=RngStream(cfg["seed"], s), alternative=alt,
                                          cache=cache)
            fit = fit_alphas(panel)
            P = alpha_pvalues(fit).raw[None, :]
            t = fit.t_stats
            rej = {}
            for p in procs:
                if p == "screening":
                    rej[p] = screening_procedure(fit, C=float(dgp_cfg.get("C", 1.06)), T=T,
                                                 variance=dgp_cfg.get("screening_variance",
                                                                      "asymptotic"),
                                                 alpha=cfg["alpha"]).rejected
                else:
                    rej[p] = pr.rejection_matrix(p, P, cfg["alpha"], stats=t[None, :])[0]
        except _MODULE_ERRORS as exc:
            log.debug("replication %d aborted: %s", s, exc)
            aborted += 1
            continue
        for p in procs:
            tallies[p].merge(score_matrix(rej[p], truth))
        t_sum += t
        tt_sum += np.outer(t, t)
    return {row: (tallies, 0.0, 0)}, aborted, (t_sum, tt_sum)


_WORKERS = {"stat-mc": _stat_chunk, "driftburst-mc": _driftburst_chunk, "alpha-mc": _alpha_chunk}


def _run_task(args):
    kind, cfg, row, start, stop = args
    return _WORKERS[kind](cfg, row, start, stop)


def _corr_range(t_sum, tt_sum, n) -> Tuple[float, float]:
    if n < 2:
        return float("nan"), float("nan")
    mean = t_sum / n
    cov = (tt_sum - n * np.outer(mean, mean)) / (n - 1)
    sd = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
    corr = cov / np.outer(sd, sd)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    return float(off.min()), float(off.max())


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

_MODEL_TAG = {"exponential": "M1", "polynomial": "M2", "mixture": "M3", "block-diagonal": "M4"}


def _row_label(spec: CorrelationSpec) -> str:
    return f"{_MODEL_TAG[spec.model]} {spec.label()}"


def _row_labels(config: ExperimentConfig) -> List[str]:
    dgp = config.dgp
    if config.kind == "stat-mc":
        rows = dgp.get("rows")
        if not rows:
            raise ConfigError("stat-mc needs at least one correlation row")
        try:
            return [_row_label(CorrelationSpec.from_dict(r)) for r in rows]
        except (KeyError, TypeError, DomainError) as exc:
            raise ConfigError(f"invalid correlation row: {exc}") from None
    if config.kind == "driftburst-mc":
        scenario = dgp.get("scenario", "null")
        _, n_days = _burst_for(dgp)
        if scenario == "persistent-expansion" or n_days > 1:
            return [f"day {k + 1}" for k in range(n_days)]
        return [scenario]
    return [str(dgp.get("dgp", "size-bm"))]


def _run_cv_table(config: ExperimentConfig, t0: float) -> ExperimentResult:
    dgp = config.dgp
    alphas = dgp.get("alpha_levels", list(rs.ALPHA_LEVELS))
    try:
        table = rs.build_cv_table(dgp.get("theta_grid", rs.THETA_GRID), dgp.get("d_grid", [2500]),
                                  alphas, R=config.reps, burn_in=int(dgp.get("burn_in", 0)),
                                  seed=config.seed, workers=config.threads)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    curve = []
    for j, d in enumerate(table.d_grid):
        for k, a in enumerate(table.alpha_levels):
            g = pr.gumbel_threshold(int(d), float(a))
            for i, th in enumerate(table.theta_grid):
                curve.append({"theta": float(th), "d": int(d), "alpha": float(a),
                              "simulated_cv": float(table.quantiles[i, j, k]), "gumbel_cv": g})
    res = ExperimentResult(config, [], 0, time.perf_counter() - t0, curve)
    if dgp.get("table_out"):
        table.to_json(dgp["table_out"])
    return res


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every replication and aggregate the metrics.

    Raises
    ------
    ReplicationAbortError
        If more than 0.1% of the replications raised a module error.
    """
    config.validate()
    t0 = time.perf_counter()
    if config.kind == "cv-table":
        return _run_cv_table(config, t0)
    labels = _row_labels(config)
    cfg = config.to_dict()
    chunk = _CHUNK[config.kind]
    n_rows = len(labels) if config.kind == "stat-mc" else 1
    tasks = [(config.kind, cfg, row, s, min(s + chunk, config.reps))
             for row in range(n_rows) for s in range(0, config.reps, chunk)]
    if config.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.threads) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]

    procs = config.procedures
    acc = {k: ({p: _Tally() for p in procs}, 0.0, 0) for k in range(len(labels))}
    aborted = 0
    t_sum = tt_sum = None
    for part, ab, moments in outputs:  # merged in task order: deterministic
        aborted += ab
        for k, (tallies, tsum, tn) in part.items():
            tot, s0, n0 = acc[k]
            for p in procs:
                tot[p].merge(tallies[p])
            acc[k] = (tot, s0 + tsum, n0 + tn)
        if moments is not None:
            t_sum = moments[0] if t_sum is None else t_sum + moments[0]
            tt_sum = moments[1] if tt_sum is None else tt_sum + moments[1]
    if aborted > ABORT_LIMIT * config.reps:
        raise ReplicationAbortError(f"{aborted} of {config.reps} replications aborted")
    if aborted:
        log.warning("%d replications aborted", aborted)

    rows = []
    for k, label in enumerate(labels):
        tallies, tsum, tn = acc[k]
        n = tallies[procs[0]].n
        row = RowResult(label, n, {p: ProcedureMetrics.from_tally(tallies[p]) for p in procs},
                        theta_hat=tsum / tn if tn else None)
        if t_sum is not None:
            row.extra["rho_min"], row.extra["rho_max"] = _corr_range(t_sum, tt_sum, n)
        rows.append(row)
    return ExperimentResult(config, rows, aborted, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.2f}"


def _metrics_present(result: ExperimentResult) -> List[str]:
    out = []
    for m in METRICS:
        if any(pm.get(m) is not None for r in result.rows for pm in r.metrics.values()):
            out.append(m)
    return out or ["power"]


def _ordered(procs: Sequence[str]) -> List[str]:
    order = list(TABLE_ORDER) + ["screening", "resampling", "scc"]
    return sorted(procs, key=lambda p: order.index(p) if p in order else len(order))


def emit_tables(result: ExperimentResult, fmt: str = "csv",
                path: Optional[Union[str, Path]] = None) -> str:
    """Render a result as csv, json or markdown (2-decimal rates, config hash).

    The rendered text is returned and, with ``path``, written to disk.
    Monte Carlo tables have one row per DGP row and metric and one column
    per procedure; cv-table runs emit (theta, d, alpha, simulated, Gumbel).
    """
    if fmt not in ("csv", "json", "markdown"):
        raise ConfigError(f"unknown output format {fmt!r}")
    h = result.config_hash
    if fmt == "json":
        text = json.dumps(result.to_dict(), indent=1, sort_keys=True) + "\n"
    elif result.config.kind == "cv-table":
        text = _emit_curve(result, fmt, h)
    else:
        text = _emit_mc(result, fmt, h)
    if path is not None:
        Path(path).write_text(text)
    return text


def _emit_curve(result, fmt, h) -> str:
    cols = ["theta", "d", "alpha", "simulated_cv", "gumbel_cv"]
    lines = []
    if fmt == "csv":
        lines.append(",".join(cols + ["config_hash"]))
        for c in result.curve:
            lines.append(f"{c['theta']:g},{c['d']},{c['alpha']:g},{c['simulated_cv']:.4f},"
                         f"{c['gumbel_cv']:.4f},{h}")
    else:
        lines += [f"config hash: `{h}`", "", "| " + " | ".join(cols) + " |",
                  "|" + "---|" * len(cols)]
        for c in result.curve:
            lines.append(f"| {c['theta']:g} | {c['d']} | {c['alpha']:g} | "
                         f"{c['simulated_cv']:.4f} | {c['gumbel_cv']:.4f} |")
    return "\n".join(lines) + "\n"


def _emit_mc(result, fmt, h) -> str:
    procs = _ordered(result.config.procedures)
    metrics = _metrics_present(result)
    has_theta = any(r.theta_hat is not None for r in result.rows)
    extras = sorted({k for r in result.rows for k in r.extra})
    lead = (["theta_hat"] if has_theta else []) + extras
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "row"] + lead + procs + ["config_hash"])
        for m in metrics:
            for r in result.rows:
                vals = ([_fmt(r.theta_hat)] if has_theta else []) + [_fmt(r.extra[k]) for k in extras]
                vals += [_fmt(r.metrics[p].get(m)) for p in procs]
                w.writerow([m, r.label] + vals + [h])
        return buf.getvalue()
    buf.write(f"config hash: `{h}`, seed {result.seed}, S = {result.config.reps}\n")
    for m in metrics:
        buf.write(f"\n### {m}\n\n")
        head = ["row"] + lead + procs
        buf.write("| " + " | ".join(head) + " |\n|" + "---|" * len(head) + "\n")
        for r in result.rows:
            vals = ([_fmt(r.theta_hat)] if has_theta else []) + [_fmt(r.extra[k]) for k in extras]
            vals += [_fmt(r.metrics[p].get(m)) for p in procs]
            buf.write("| " + " | ".join([r.label] + vals) + " |\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

STAT_PROCS = ["bonferroni", "holm", "hommel", "hochberg", "gumbel", "scc"]
DB_PROCS = STAT_PROCS[:5] + ["resampling", "scc"]
ALPHA_PROCS = STAT_PROCS[:5] + ["screening", "scc"]


def table2_rows(d: int = 100) -> List[dict]:
    """The 17 (model, theta) rows of the correlated-statistics study."""
    rows = [CorrelationSpec("exponential", d, t) for t in (0.2, 0.4, 0.6, 0.8, 0.9, 0.95)]
    rows += [CorrelationSpec("polynomial", d, t) for t in (1.0, 1.5, 2.0, 2.5)]
    rows += [CorrelationSpec("mixture", d, a, b) for a, b in ((0.0, 0.9), (0.2, 0.8))]
    rows += [CorrelationSpec("block-diagonal", d, t, block_size=10)
             for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
    return [r.to_dict() for r in rows]


def _stat(name, signals):
    dgp = {"rows": table2_rows(), "signal": {"count": signals, "placement": "random"}}
    if signals:
        dgp["signal"]["strength"] = round(default_signal_strength(100, signals), 4)
    return dict(kind="stat-mc", name=name, procedures=STAT_PROCS, reps=10_000, dgp=dgp)


def _db(name, scenario, reps):
    return dict(kind="driftburst-mc", name=name, procedures=DB_PROCS, reps=reps,
                dgp={"scenario": scenario, "gamma": 0.5, "spacing": 1.0, "detection": "window",
                     "cv_table": "default"})


def _alpha(name, dgp, alternative):
    return dict(kind="alpha-mc", name=name, procedures=ALPHA_PROCS, reps=2_000,
                dgp={"dgp": dgp, "T": 240, "alternative": alternative, "C": 1.06,
                     "screening_variance": "asymptotic"})


PRESETS = {
    "table2": _stat("table2", 0),
    "table3": _stat("table3", 5),
    "table4": _stat("table4", 5),
    "table5-null": _db("table5-null", "null", 500),
    "table5-flash": _db("table5-flash", "flash-crash", 500),
    "table5-expansion": _db("table5-expansion", "persistent-expansion", 500),
    "table5-smoke-null": _db("table5-smoke-null", "null", 50),
    "table5-smoke-flash": _db("table5-smoke-flash", "flash-crash", 50),
    "table5-smoke-expansion": _db("table5-smoke-expansion", "persistent-expansion", 50),
    "table7-bm": _alpha("table7-bm", "size-bm", False),
    "table7-inv": _alpha("table7-inv", "size-inv", False),
    "table7-op": _alpha("table7-op", "size-op", False),
    "table8-bm": _alpha("table8-bm", "size-bm", True),
    "table8-inv": _alpha("table8-inv", "size-inv", True),
    "table8-op": _alpha("table8-op", "size-op", True),
    "fig6": dict(kind="cv-table", name="fig6", procedures=[], reps=100_000,
                 dgp={"theta_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
                      "d_grid": [2500], "alpha_levels": [0.1, 0.05, 0.01], "burn_in": 0}),
}
PRESET_KIND = {k: v["kind"] for k, v in PRESETS.items()}


def preset(name: str, **overrides) -> ExperimentConfig:
    """A named configuration; keyword overrides replace top-level fields."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = copy.deepcopy(PRESETS[name])
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)
