"""
CSV ingestion for empirical runs.

Tick files have two columns, epoch seconds and log price. Cleaning keeps
session hours, aggregates duplicate timestamps by their median, drops
obvious outliers (10 rolling MADs) and forward-fills onto a one-second grid
per day. Panel files follow the Kenneth French layout: a ``YYYYMM`` first
column, percent returns, and an ``RF`` column that is subtracted.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .alpha import FactorPanel
from .errors import DataError
from .simgen import MINUTES_PER_DAY, NO_BURST, PricePath

log = logging.getLogger(__name__)

DEFAULT_FACTORS = ("Mkt-RF", "SMB", "HML", "RMW", "CMA")

__all__ = [
    "CleaningRules",
    "CleaningLog",
    "ingest_tick_csv",
    "ingest_panel_csv",
    "DEFAULT_FACTORS",
]


@dataclass(frozen=True)
class CleaningRules:
    """Tick cleaning settings; session bounds are seconds after midnight."""

    session_open: int = 34_200
    session_close: int = 57_600
    mad_k: float = 10.0
    mad_window: int = 51
    spacing: int = 1


@dataclass
class CleaningLog:
    rows_read: int = 0
    outside_session: int = 0
    duplicates_aggregated: int = 0
    outliers_removed: int = 0
    filled_points: int = 0
    days: List[int] = field(default_factory=list)

    def lines(self) -> List[str]:
        return [
            f"rows read: {self.rows_read}",
            f"dropped outside session: {self.outside_session}",
            f"duplicate timestamps aggregated: {self.duplicates_aggregated}",
            f"outliers removed: {self.outliers_removed}",
            f"grid points forward-filled: {self.filled_points}",
            f"days: {len(self.days)}",
        ]


def _read_rows(path: Union[str, Path]) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [c.strip() for c in rows[0][1]]
    return header, rows[1:]


def _parse_floats(rows, ncol: int, path) -> np.ndarray:
    out = np.empty((len(rows), ncol))
    bad = []
    for k, (line, r) in enumerate(rows):
        try:
            if len(r) < ncol:
                raise ValueError
            out[k] = [float(c) for c in r[:ncol]]
        except ValueError:
            bad.append(line)
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        raise DataError(f"{path}: unparseable rows at lines {shown}" + (" ..." if len(bad) > 10 else ""))
    return out


def _outliers(p: np.ndarray, rules: CleaningRules) -> np.ndarray:
    """Flag prices more than ``mad_k`` mean absolute deviations from the
    median of their ``mad_window - 1`` nearest neighbours (the point itself
    excluded; windows are shifted inwards at the day edges)."""
    n, w = p.size, rules.mad_window
    start = np.clip(np.arange(n) - w // 2, 0, n - w)
    rows = sliding_window_view(p, w)[start]
    keep = np.ones((n, w), dtype=bool)
    keep[np.arange(n), np.arange(n) - start] = False
    nb = rows[keep].reshape(n, w - 1)
    med = np.median(nb, axis=1)
    mad = np.mean(np.abs(nb - med[:, None]), axis=1)
    return (mad > 0) & (np.abs(p - med) > rules.mad_k * mad)


def ingest_tick_csv(path: Union[str, Path], rules: CleaningRules = CleaningRules()
                    ) -> Tuple[PricePath, CleaningLog]:
    """Clean a tick file into an equidistant multi-day :class:`PricePath`.

    Session hours are applied to ``timestamp mod 86400``, so timestamps
    should be exchange-local epoch seconds.
    """
    header, rows = _read_rows(path)
    try:
        float(header[0])
        rows = [(1, header)] + rows  # no header line
    except ValueError:
        pass
    data = _parse_floats(rows, 2, path)
    clog = CleaningLog(rows_read=len(data))
    ts, px = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(px))):
        raise DataError(f"{path}: non-finite timestamps or prices")
    sod = np.mod(ts, 86_400)
    keep = (sod >= rules.session_open) & (sod <= rules.session_close)
    clog.outside_session = int((~keep).sum())
    ts, px = ts[keep], px[keep]
    if ts.size == 0:
        raise DataError(f"{path}: no observations inside the session")
    order = np.argsort(ts, kind="stable")
    ts, px = ts[order], px[order]

    uniq, start, counts = np.unique(ts, return_index=True, return_counts=True)
    if uniq.size < ts.size:
        clog.duplicates_aggregated = int((counts - 1).sum())
        px = np.array([np.median(px[s:s + c]) if c > 1 else px[s] for s, c in zip(start, counts)])
        ts = uniq

    days = np.floor(ts / 86_400).astype(np.int64)
    steps = (rules.session_close - rules.session_open) // rules.spacing
    grid = rules.session_open + rules.spacing * np.arange(steps + 1)
    out_ts, out_px = [], []
    for day in np.unique(days):
        m = days == day
        t_d, p_d = ts[m], px[m]
        if p_d.size >= rules.mad_window:  # too few ticks for a neighbour reference
            out = _outliers(p_d, rules)
            clog.outliers_removed += int(out.sum())
            t_d, p_d = t_d[~out], p_d[~out]
        if p_d.size == 0:
            continue
        g_abs = day * 86_400 + grid
        # last observation at or before each grid point; the first tick fills the gap before it
        idx = np.searchsorted(t_d, g_abs, side="right") - 1
        exact = np.isin(g_abs, t_d)
        clog.filled_points += int((~exact).sum())
        out_ts.append(g_abs.astype(float))
        out_px.append(p_d[np.clip(idx, 0, None)])
        clog.days.append(int(day))
    if not out_ts:
        raise DataError(f"{path}: every session is empty after cleaning")
    for line in clog.lines():
        log.info(line)
    n_days = len(out_ts)
    noisy = np.concatenate(out_px)
    path_obj = PricePath(
        timestamps=np.concatenate(out_ts), noisy=noisy, latent=noisy.copy(),
        spot_var=np.full(noisy.size, np.nan),
        truth=np.zeros(n_days * MINUTES_PER_DAY, dtype=bool),
        burst_drift=np.zeros(n_days * steps), spacing=float(rules.spacing), n_days=n_days,
        gamma=float("nan"), burst=NO_BURST)
    return path_obj, clog


def _read_french(path, missing: float) -> Tuple[List[str], List[str], np.ndarray]:
    header, rows = _read_rows(path)
    if len(header) < 2:
        raise DataError(f"{path}: expected a period column followed by data columns")
    periods, bad = [], []
    for line, r in rows:
        p = r[0].strip()
        if not (len(p) == 6 and p.isdigit() and 1 <= int(p[4:]) <= 12):
            bad.append(line)
        periods.append(p)
    if bad:
        raise DataError(f"{path}: malformed YYYYMM period at lines {', '.join(map(str, bad[:10]))}")
    values = _parse_floats([(line, r[1:]) for line, r in rows], len(header) - 1, path)
    values[np.isclose(values, missing) | np.isclose(values, -999.0)] = np.nan
    return periods, header[1:], values


def ingest_panel_csv(path: Union[str, Path], factors_path: Optional[Union[str, Path]] = None,
                     factor_columns: Optional[Sequence[str]] = None, rf_column: str = "RF",
                     missing: float = -99.99) -> Tuple[FactorPanel, Dict[str, int]]:
    """Excess-return panel from French-style CSVs.

    Without ``factors_path`` the portfolio file itself must carry the factor
    and RF columns. Periods with any missing value (``-99.99``) are dropped.

    Returns
    -------
    panel : FactorPanel
    log : dict
        Row counts per cleaning rule.
    """
    periods, cols, vals = _read_french(path, missing)
    port_cols = list(cols)
    table = {p: v for p, v in zip(periods, vals)}
    if factors_path is not None:
        f_periods, f_cols, f_vals = _read_french(factors_path, missing)
        f_table = {p: v for p, v in zip(f_periods, f_vals)}
        common = [p for p in periods if p in f_table]
        dropped_unmatched = len(periods) - len(common)
        all_cols = cols + [c for c in f_cols if c not in cols]
        f_idx = [f_cols.index(c) for c in all_cols[len(cols):]]
        merged = np.array([np.concatenate([table[p], f_table[p][f_idx]]) for p in common])
        periods, cols, vals = common, all_cols, merged.reshape(len(common), len(all_cols))
    else:
        dropped_unmatched = 0
    if rf_column not in cols:
        raise DataError(f"{path}: risk-free column {rf_column!r} not found")
    if factor_columns is None:
        factor_columns = [c for c in DEFAULT_FACTORS if c in cols]
    missing_f = [c for c in factor_columns if c not in cols]
    if missing_f or not factor_columns:
        raise DataError(f"factor columns not found: {missing_f or list(DEFAULT_FACTORS)}")
    # unused factor columns are never assets
    skip = {rf_column, *factor_columns, *DEFAULT_FACTORS}
    asset_cols = [c for c in port_cols if c not in skip]
    if not asset_cols:
        raise DataError(f"{path}: no asset columns")
    ok = np.all(np.isfinite(vals), axis=1)
    dropped_missing = int((~ok).sum())
    vals = vals[ok]
    periods = [p for p, k in zip(periods, ok) if k]
    idx = {c: i for i, c in enumerate(cols)}
    rf = vals[:, idx[rf_column]]
    y = vals[:, [idx[c] for c in asset_cols]] - rf[:, None]
    f = vals[:, [idx[c] for c in factor_columns]]
    info = {"rows": len(periods), "dropped_missing": dropped_missing, "dropped_unmatched": dropped_unmatched}
    log.info("panel: %s", info)
    return FactorPanel(y, f, asset_cols, periods), info
