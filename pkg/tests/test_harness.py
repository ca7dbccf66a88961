import csv
import io
import json

import numpy as np
import pytest

from seqcauchy import cli
from seqcauchy import harness as hx
from seqcauchy import procedures as pr
from seqcauchy import simgen as sg
from seqcauchy.alpha import load_dgp
from seqcauchy.errors import ConfigError, DomainError, ReplicationAbortError
from seqcauchy.statdist import CorrelationSpec, RngStream


# -- scoring ---------------------------------------------------------------------------

def test_score_replication_examples():
    s = hx.score_replication(np.array([True, True, False]), np.zeros(3, bool))
    assert s.any_false_rejection and s.false_discoveries == 2
    truth = np.array([True, False, True, False])
    s = hx.score_replication(truth, truth)
    assert s.true_discoveries == 2 and s.false_discoveries == 0 and not s.any_false_rejection
    with pytest.raises(DomainError):
        hx.score_replication(np.zeros(3, bool), np.zeros(4, bool))


def test_score_reads_only_rejections():
    x = np.array([5.0, 0.1, -0.2])
    rep = pr.run_procedure("holm", x)
    assert hx.score_replication(rep, [True, False, False]) == \
        hx.score_replication(rep.rejected, [True, False, False])


def test_worked_example_three_of_five():
    spec = CorrelationSpec("exponential", 100, 0.9)
    x, truth = sg.gen_statistics(spec, sg.SignalSpec(5, 2.806, "first-k"), RngStream(2, 1))
    rep = pr.run_procedure("scc", x)
    s = hx.score_replication(rep, truth)
    assert (s.true_discoveries, s.false_discoveries) == (3, 0)
    assert pr.gcc_pvalue(pr.gcc_statistic(pr.PValueSet.from_raw(pr.two_sided_pvalues(x).raw))) <= 0.05
    # rejections are the top ranks only
    ranks = np.argsort(np.argsort(-np.abs(x), kind="stable"), kind="stable")
    assert set(ranks[rep.rejected]) == {0, 1, 2}


REJ = np.array([
    [1, 1, 0, 0], [1, 0, 0, 0], [0, 0, 1, 0], [1, 0, 1, 0], [0, 0, 0, 0],
    [0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 1, 1, 0]], dtype=bool)
TRUTH = np.array([[1, 1, 0, 0]] * 5 + [[0, 0, 0, 0]] * 5, dtype=bool)


def test_metric_algebra_fixture():
    m = hx.ProcedureMetrics.from_tally(hx.score_matrix(REJ, TRUTH))
    assert m.fwer == pytest.approx(40.0)
    assert m.power == pytest.approx(60.0)
    assert m.detection == pytest.approx(40.0)
    assert m.false_detections == pytest.approx(0.5)
    scores = [hx.score_replication(r, t) for r, t in zip(REJ, TRUTH)]
    assert sum(s.any_false_rejection for s in scores) == 4
    assert sum(s.true_discoveries + s.false_discoveries for s in scores) == REJ.sum()


def test_tally_merge_associative():
    whole = hx.score_matrix(REJ, TRUTH)
    parts = hx._Tally()
    for lo, hi in ((7, 10), (0, 3), (3, 7)):
        parts.merge(hx.score_matrix(REJ[lo:hi], TRUTH[lo:hi]))
    assert parts == whole


def test_degenerate_zero_statistics():
    P = pr.two_sided_pmatrix(np.zeros((1, 10)))
    for p in hx.STAT_PROCS:
        m = hx.ProcedureMetrics.from_tally(
            hx.score_matrix(pr.rejection_matrix(p, P, stats=np.zeros((1, 10))), np.zeros((1, 10), bool)))
        assert m.fwer == 0.0 and m.power == 0.0 and m.detection is None


# -- config ------------------------------------------------------------------------------

def test_config_roundtrip_and_hash(tmp_path):
    cfg = hx.preset("table3", reps=100, seed=4)
    cfg.to_json(tmp_path / "c.json")
    back = hx.ExperimentConfig.from_json(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    assert back.config_hash() == cfg.config_hash()
    back.threads, back.out = 3, "x.csv"
    assert back.config_hash() == cfg.config_hash()
    back.seed = 5
    assert back.config_hash() != cfg.config_hash()


@pytest.mark.parametrize("patch", [
    {"reps": 0}, {"alpha": 1.0}, {"kind": "nope"}, {"procedures": ["magic"]},
    {"procedures": ["resampling"]}, {"threads": 0}, {"version": 2}, {"extra": 1}])
def test_bad_configs(patch):
    data = hx.preset("table2").to_dict()
    data.update(patch)
    with pytest.raises(ConfigError):
        hx.ExperimentConfig.from_dict(data)


def test_unknown_preset_and_missing_rows():
    with pytest.raises(ConfigError):
        hx.preset("table99")
    with pytest.raises(ConfigError):
        hx.run_experiment(hx.ExperimentConfig("stat-mc", ["scc"], 10, {"rows": []}))


# -- engine ------------------------------------------------------------------------------

def _small_stat(**kw):
    dgp = {"rows": hx.table2_rows()[:2], "signal": {"count": 5, "strength": 2.1737, "placement": "random"}}
    return hx.ExperimentConfig("stat-mc", hx.STAT_PROCS, 1_200, dgp, seed=11, **kw)


def test_determinism_across_threads():
    a = hx.run_experiment(_small_stat(threads=1))
    b = hx.run_experiment(_small_stat(threads=2))
    for fmt in ("csv", "json", "markdown"):
        assert hx.emit_tables(a, fmt) == hx.emit_tables(b, fmt)
    db1 = hx.run_experiment(hx.preset("table5-flash", reps=12, seed=3))
    db2 = hx.run_experiment(hx.preset("table5-flash", reps=12, seed=3, threads=2))
    assert hx.emit_tables(db1, "json") == hx.emit_tables(db2, "json")


def test_rates_within_bounds():
    res = hx.run_experiment(_small_stat())
    for r in res.rows:
        for m in r.metrics.values():
            for v in (m.fwer, m.power, m.detection):
                assert v is None or 0.0 <= v <= 100.0


def test_table_layout(tmp_path):
    res = hx.run_experiment(hx.preset("table2", reps=200))
    text = hx.emit_tables(res, "csv", tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["metric"] for r in rows] == ["fwer"] * 17 + ["power"] * 17 + ["false_detections"] * 17
    assert rows[0]["row"] == "M1 0.2" and rows[10]["row"] == "M3 (0, 0.9)"
    assert list(rows[0])[2:] == ["bonferroni", "holm", "hommel", "hochberg", "gumbel", "scc",
                                 "config_hash"]
    assert all(r["config_hash"] == res.config_hash for r in rows)
    assert all(len(r["scc"].split(".")[1]) == 2 for r in rows)
    md = hx.emit_tables(res, "markdown")
    assert res.config_hash in md and "| M4 0.9 |" in md
    with pytest.raises(ConfigError):
        hx.emit_tables(res, "xml")


def test_empty_result_header_only():
    res = hx.ExperimentResult(hx.preset("table2"), [])
    text = hx.emit_tables(res, "csv")
    assert text.count("\n") == 1 and text.startswith("metric,row")


def test_curve_output():
    cfg = hx.ExperimentConfig("cv-table", [], 2_000, {"theta_grid": [0.0, 0.7], "d_grid": [50],
                                                       "alpha_levels": [0.05]}, seed=1)
    res = hx.run_experiment(cfg)
    rows = list(csv.DictReader(io.StringIO(hx.emit_tables(res, "csv"))))
    assert list(rows[0]) == ["theta", "d", "alpha", "simulated_cv", "gumbel_cv", "config_hash"]
    assert len(rows) == 2
    assert float(rows[0]["gumbel_cv"]) == pytest.approx(pr.gumbel_threshold(50, 0.05), abs=1e-4)


def test_abort_threshold(monkeypatch):
    def failing(cfg, row, start, stop):
        return {}, stop - start, None

    monkeypatch.setitem(hx._WORKERS, "stat-mc", failing)
    with pytest.raises(ReplicationAbortError):
        hx.run_experiment(_small_stat())


def test_abort_counted_below_threshold(monkeypatch):
    real = hx._WORKERS["stat-mc"]

    def one_failure(cfg, row, start, stop):
        part, ab, mom = real(cfg, row, start, stop)
        return part, ab + (start == 0 and row == 0), mom

    monkeypatch.setitem(hx._WORKERS, "stat-mc", one_failure)
    res = hx.run_experiment(_small_stat())
    assert res.aborted == 1


# -- CLI ----------------------------------------------------------------------------------

def test_cli_mc_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "t2.csv"
    assert cli.main(["mc-stats", "--preset", "table2", "--reps", "100", "--out", str(out)]) == 0
    assert out.read_text().startswith("metric,row")
    assert cli.main(["mc-stats", "--reps", "0"]) == 2
    assert cli.main(["mc-stats", "--preset", "table7-bm"]) == 2
    assert cli.main(["mc-alpha", "--procedures", "scc,bogus"]) == 2
    assert cli.main(["no-such-command"]) == 2
    cfg = tmp_path / "cfg.json"
    _small_stat().to_json(cfg)
    assert cli.main(["mc-stats", "--config", str(cfg), "--reps", "50", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["metadata"]["reps"] == 50
    cfg.write_text("{not json")
    assert cli.main(["mc-stats", "--config", str(cfg)]) == 2


def test_cli_abort_exit_code(monkeypatch):
    monkeypatch.setitem(hx._WORKERS, "stat-mc", lambda cfg, row, a, b: ({}, b - a, None))
    assert cli.main(["mc-stats", "--reps", "10"]) == 4


def test_cli_cv_table(tmp_path):
    out, tab = tmp_path / "cv.csv", tmp_path / "cv.json"
    cfg = hx.ExperimentConfig("cv-table", [], 1_000, {"theta_grid": [0.0, 0.5], "d_grid": [20],
                                                     "alpha_levels": [0.05]})
    cfg.to_json(tmp_path / "c.json")
    assert cli.main(["cv-table", "--config", str(tmp_path / "c.json"), "--out", str(out),
                     "--table-json", str(tab)]) == 0
    assert len(out.read_text().splitlines()) == 3
    assert json.loads(tab.read_text())["R"] == 1_000


def test_cli_detect_driftburst(tmp_path):
    day = sg.simulate_heston_day(burst=sg.FLASH_CRASH, rng=RngStream(23))
    day.to_csv(tmp_path / "ticks.csv")
    out = tmp_path / "db.csv"
    assert cli.main(["detect-driftburst", str(tmp_path / "ticks.csv"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 341
    assert list(rows[0])[:5] == ["day", "minute", "timestamp", "statistic", "p_value"]
    assert {"scc", "resampling", "bonferroni"} <= set(rows[0])
    hits = [int(r["minute"]) for r in rows if r["scc"] == "1"]
    assert hits and all(180 <= m <= 215 for m in hits)
    (tmp_path / "bad.csv").write_text("timestamp,log_price\n34200,x\n")
    assert cli.main(["detect-driftburst", str(tmp_path / "bad.csv")]) == 3
    assert cli.main(["detect-driftburst", str(tmp_path / "missing.csv")]) == 3


def _french_files(tmp_path, T=120, d=12):
    gen = np.random.default_rng(5)
    f = gen.normal(0.5, 3.0, (T, 3))
    rf = np.full(T, 0.1)
    B = gen.normal(1.0, 0.3, (d, 3))
    a = np.zeros(d)
    a[0] = 3.0
    y = a + f @ B.T + gen.normal(0, 1.0, (T, d)) + rf[:, None]
    periods = [f"{2000 + t // 12}{t % 12 + 1:02d}" for t in range(T)]
    port = [","+",".join(f"P{i + 1}" for i in range(d))]
    port += [p + "," + ",".join(f"{v:.4f}" for v in row) for p, row in zip(periods, y)]
    fac = [",Mkt-RF,SMB,HML,RF"]
    fac += [p + "," + ",".join(f"{v:.4f}" for v in [*row, r]) for p, row, r in zip(periods, f, rf)]
    (tmp_path / "port.csv").write_text("\n".join(port) + "\n")
    (tmp_path / "fac.csv").write_text("\n".join(fac) + "\n")
    return tmp_path / "port.csv", tmp_path / "fac.csv"


def test_cli_test_alphas(tmp_path):
    port, fac = _french_files(tmp_path)
    out = tmp_path / "a.csv"
    assert cli.main(["test-alphas", str(port), "--factors", str(fac), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["asset"] for r in rows][:2] == ["P1", "P2"] and len(rows) == 12
    assert rows[0]["scc"] == "1" and rows[0]["bonferroni"] == "1"
    out = tmp_path / "w.csv"
    assert cli.main(["test-alphas", str(port), "--factors", str(fac), "--window", "60",
                     "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 61 and rows[0]["period"] == "200412"
    assert cli.main(["test-alphas", str(port), "--factors", str(fac), "--window", "3"]) == 2
    assert cli.main(["test-alphas", str(port)]) == 3


def test_cli_calibrate_dgp(tmp_path):
    port, fac = _french_files(tmp_path)
    out = tmp_path / "dgp.json"
    assert cli.main(["calibrate-dgp", str(port), "--factors", str(fac), "--name", "toy",
                     "--out", str(out)]) == 0
    dgp = load_dgp(str(out))
    assert dgp.name == "toy" and dgp.d == 12 and dgp.mu_f.size == 3
