"""
Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 too many
aborted replications.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import harness as hs
from . import procedures as pr
from . import resampling as rs
from .alpha import alpha_pvalues, calibrate_dgp, fit_alphas, screening_procedure
from .driftburst import DriftBurstConfig, db_sequence
from .errors import ConfigError, DataError, DomainError, FactorizationError, ReplicationAbortError
from .ingest import CleaningRules, ingest_panel_csv, ingest_tick_csv
from .statdist import RngStream

log = logging.getLogger("seqcauchy")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ABORT = 0, 2, 3, 4

_MC = {"mc-stats": ("stat-mc", "table2"), "mc-driftburst": ("driftburst-mc", "table5-null"),
       "mc-alpha": ("alpha-mc", "table7-bm"), "cv-table": ("cv-table", "fig6")}


def _procs(text: Optional[str]) -> Optional[List[str]]:
    if text is None:
        return None
    return [p.strip() for p in text.split(",") if p.strip()]


def _add_common(p: argparse.ArgumentParser, mc: bool = True):
    if mc:
        p.add_argument("--preset", help="named configuration (see README)")
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int, help="replications (paths per cell for cv-table)")
        p.add_argument("--threads", type=int, default=None)
    p.add_argument("--alpha", type=float)
    p.add_argument("--procedures", help="comma-separated procedure names")
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "json", "markdown"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqcauchy", description="FWER procedures and Monte Carlo harness")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _MC:
        p = sub.add_parser(name, help=f"Monte Carlo run ({_MC[name][0]})")
        _add_common(p)
        if name == "cv-table":
            p.add_argument("--table-json", help="also write the critical-value table as JSON")
    p = sub.add_parser("detect-driftburst", help="drift-burst tests on a tick CSV")
    p.add_argument("csv")
    _add_common(p, mc=False)
    p = sub.add_parser("test-alphas", help="alpha tests on a French-style portfolio CSV")
    p.add_argument("csv")
    p.add_argument("--factors", help="separate factor CSV (with RF)")
    p.add_argument("--window", type=int, help="rolling window length in months")
    _add_common(p, mc=False)
    p = sub.add_parser("calibrate-dgp", help="estimate a factor-panel DGP from a CSV")
    p.add_argument("csv")
    p.add_argument("--factors", help="separate factor CSV (with RF)")
    p.add_argument("--name", default="calibrated")
    p.add_argument("--out", help="output JSON (stdout if omitted)")
    return ap


def _write(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _records(rows: List[dict], fmt: str) -> str:
    """Render homogeneous records; an empty list gives a header-only csv."""
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    cols = list(rows[0]) if rows else []
    cell = lambda v: f"{v:.6g}" if isinstance(v, float) else str(v)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows([cell(r[c]) for c in cols] for r in rows)
        return buf.getvalue()
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    lines += ["| " + " | ".join(cell(r[c]) for c in cols) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _config_from_args(command: str, args) -> hs.ExperimentConfig:
    kind, default = _MC[command]
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset")
    if args.config:
        cfg = hs.ExperimentConfig.from_json(args.config)
    else:
        cfg = hs.preset(args.preset or default)
    if cfg.kind != kind:
        raise ConfigError(f"{command} expects a {kind} configuration, got {cfg.kind}")
    for attr in ("seed", "reps", "alpha", "threads"):
        v = getattr(args, attr)
        if v is not None:
            setattr(cfg, attr, v)
    if args.procedures is not None:
        cfg.procedures = _procs(args.procedures)
    if args.out:
        cfg.out = args.out
    if getattr(args, "table_json", None):
        cfg.dgp["table_out"] = args.table_json
    cfg.validate()
    return cfg


def _run_mc(command: str, args) -> int:
    cfg = _config_from_args(command, args)
    result = hs.run_experiment(cfg)
    log.info("finished in %.1f s (config %s)", result.runtime, result.config_hash)
    text = hs.emit_tables(result, args.format)
    _write(text, args.out)
    return EXIT_OK


def _detect(args) -> int:
    procs = _procs(args.procedures) or hs.DB_PROCS
    alpha = 0.05 if args.alpha is None else args.alpha
    bad = [p for p in procs if p not in set(pr.PROCEDURES) | {"resampling"}]
    if bad:
        raise ConfigError(f"unknown procedures {bad}")
    path, clog = ingest_tick_csv(args.csv, CleaningRules())
    for line in clog.lines():
        log.info(line)
    seq = db_sequence(path, DriftBurstConfig())
    rows = []
    for k in range(path.n_days):
        m = seq.day == k
        x = seq.stats[m]
        ok = np.isfinite(x)
        if not ok.all():
            log.warning("day %d: %d failed grid points set to 0", k, int((~ok).sum()))
            x = np.where(ok, x, 0.0)
        P = pr.two_sided_pmatrix(x[None, :])
        decisions = {}
        for p in procs:
            if p == "resampling":
                decisions[p] = rs.resampling_procedure(x, alpha, rs.default_table(),
                                                       rng=RngStream(0, k)).rejected
            else:
                decisions[p] = pr.rejection_matrix(p, P, alpha, stats=x[None, :])[0]
        for i, (ts, minute) in enumerate(zip(seq.timestamps[m], seq.minute[m])):
            row = {"day": int(clog.days[k]), "minute": int(minute), "timestamp": int(ts),
                   "statistic": float(x[i]), "p_value": float(P[0, i])}
            row.update({p: int(decisions[p][i]) for p in procs})
            rows.append(row)
    _write(_records(rows, args.format), args.out)
    return EXIT_OK


def _alpha_rows(fit, procs, alpha):
    P = alpha_pvalues(fit).raw
    t = fit.t_stats
    dec = {}
    for p in procs:
        if p == "screening":
            dec[p] = screening_procedure(fit, alpha=alpha).rejected
        else:
            dec[p] = pr.rejection_matrix(p, P[None, :], alpha, stats=t[None, :])[0]
    return P, t, dec


def _test_alphas(args) -> int:
    procs = _procs(args.procedures) or hs.ALPHA_PROCS
    alpha = 0.05 if args.alpha is None else args.alpha
    bad = [p for p in procs if p not in set(pr.PROCEDURES) | {"screening"}]
    if bad:
        raise ConfigError(f"unknown procedures {bad}")
    panel, info = ingest_panel_csv(args.csv, args.factors)
    log.info("panel: %s", info)
    rows = []
    if args.window:
        if not panel.K + 2 <= args.window <= panel.T:
            raise ConfigError(f"window must lie in [{panel.K + 2}, {panel.T}]")
        for start in range(panel.T - args.window + 1):
            w = panel.window(start, args.window)
            fit = fit_alphas(w)
            _, _, dec = _alpha_rows(fit, procs, alpha)
            row = {"period": w.periods[-1] if w.periods else str(start + args.window)}
            row.update({p: int(dec[p].sum()) for p in procs})
            rows.append(row)
    else:
        fit = fit_alphas(panel)
        P, t, dec = _alpha_rows(fit, procs, alpha)
        for i, asset in enumerate(panel.assets):
            row = {"asset": asset, "alpha_hat": float(fit.a_hat[i]), "t_stat": float(t[i]),
                   "p_value": float(P[i])}
            row.update({p: int(dec[p][i]) for p in procs})
            rows.append(row)
    _write(_records(rows, args.format), args.out)
    return EXIT_OK


def _calibrate(args) -> int:
    panel, info = ingest_panel_csv(args.csv, args.factors)
    dgp = calibrate_dgp(panel, args.name)
    _write(json.dumps(dgp.to_dict(), indent=1) + "\n", args.out)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command in _MC:
            return _run_mc(args.command, args)
        if args.command == "detect-driftburst":
            return _detect(args)
        if args.command == "test-alphas":
            return _test_alphas(args)
        return _calibrate(args)
    except ReplicationAbortError as exc:
        log.error("%s", exc)
        return EXIT_ABORT
    except (DataError, FactorizationError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ConfigError, DomainError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
