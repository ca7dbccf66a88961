import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqcauchy import driftburst as db
from seqcauchy import simgen as sg
from seqcauchy.errors import DataError, DomainError
from seqcauchy.resampling import fit_ar1
from seqcauchy.statdist import RngStream

from oracles import drift_loop, parzen_loop, preaveraged_loop, variance_loop

CFG = db.DriftBurstConfig()


@pytest.fixture(scope="module")
def null_day():
    return sg.simulate_heston_day(rng=RngStream(100))


@pytest.fixture(scope="module")
def null_days():
    return sg.simulate_paths(sg.HestonParams(), sg.NO_BURST, 0.5, 1.0, 1, 101, range(200))


# -- pre-averaging -------------------------------------------------------------------

def test_preaverage_examples():
    assert db.preaverage([3.0, 6.0, 9.0], 3)[0] == pytest.approx(5.0, abs=1e-15)
    assert db.preaverage([5.0, 1.0, 1.0, 1.0], 4)[0] == pytest.approx(1.0, abs=1e-15)
    assert np.all(db.preaverage(np.zeros(20), 3) == 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=40), st.integers(2, 5))
def test_preaverage_matches_loop(prices, k):
    p = np.asarray(prices)
    r = np.concatenate([[0.0], np.diff(p)])
    assert np.allclose(db.preaverage(r, k), preaveraged_loop(list(p), k), atol=1e-12)
    assert db.preaverage(r, k).size == (p.size - 1) - k + 2


def test_preaverage_domain():
    with pytest.raises(DomainError):
        db.preaverage([1.0], 3)


# -- kernel and lag ------------------------------------------------------------------

def test_parzen():
    assert db.parzen(0.25) == pytest.approx(0.71875, abs=1e-15)
    assert db.parzen(0.0) == 1.0 and db.parzen(1.0) == 0.0 and db.parzen(1.5) == 0.0
    left, right = db.parzen(0.5 - 1e-12), db.parzen(0.5 + 1e-12)
    assert left == pytest.approx(right, abs=1e-9) and left == pytest.approx(0.25)
    x = np.linspace(-1.2, 1.2, 241)
    assert np.allclose(db.parzen(x), [parzen_loop(v) for v in x], atol=1e-15)


def test_q_star_white_noise_and_ma1():
    gen = np.random.default_rng(1)
    assert db.q_star(gen.normal(size=23_401)) <= 4
    e = gen.normal(size=23_402)
    assert db.q_star(e[1:] - 0.5 * e[:-1]) >= 1
    assert db.q_star(np.zeros(50)) == 0
    with pytest.raises(DomainError):
        db.q_star(np.ones(5))


def test_select_lag_formula(monkeypatch):
    r = np.random.default_rng(2).normal(size=500)
    assert db.select_lag(r, 3) == db.q_star(r) + 4
    monkeypatch.setattr(db, "q_star", lambda _: 4)
    assert db.select_lag(r, 3) == 8


# -- estimators ----------------------------------------------------------------------

def _path(prices, spacing=1.0):
    p = np.asarray(prices, dtype=float)
    return (np.arange(p.size) * spacing, p)


def test_drift_zero_returns():
    assert db.drift_estimate(_path(np.zeros(50)), 49.0) == 0.0


def test_drift_single_term():
    cfg = db.DriftBurstConfig(k_n=2, h_n=30.0)
    p = np.zeros(100)
    p[41:] = 2.0  # one raw return at index 41 -> pre-averaged value 1.0 anchored at t=40
    for t in (41.0, 60.0, 99.0):
        lag = t - 40.0
        assert db.drift_estimate(_path(p), t, cfg) == pytest.approx(math.exp(-lag / 30) / 30, rel=1e-12)


def test_drift_linear_price():
    m, n = 0.01, 4000
    times, prices = _path(m * np.arange(n + 1.0))
    est = db.drift_estimate((times, prices), times[-1], CFG)
    assert est == pytest.approx(drift_loop(list(times), list(prices), 3, CFG.h_n), rel=1e-12)
    # each pre-averaged value is m * sum_j g(j/3) = 2m/3; kernel mass is a geometric series
    n_pa = n - 3 + 2
    mass = sum(math.exp(-(times[-1] - times[i]) / CFG.h_n) for i in range(n_pa)) / CFG.h_n
    assert est == pytest.approx(m * 2 / 3 * mass, rel=0.05)


def test_variance_lag_zero_reduces_to_squares():
    gen = np.random.default_rng(3)
    times, prices = _path(np.cumsum(gen.normal(size=300)))
    v = db.variance_estimate((times, prices), times[-1], CFG, lag=0)
    ref, _ = variance_loop(list(times), list(prices), 3, CFG.h_var, 0)
    assert v == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("k,lag", [(3, 1), (3, 4), (4, 3), (2, 2)])
def test_index_fixture_tiny_n(k, lag):
    """n = 12 increments: n-k+2 pre-averaged terms and n-k-L+2 cross products."""
    gen = np.random.default_rng(k * 10 + lag)
    prices = np.r_[0.0, np.cumsum(gen.normal(size=12))]
    times = np.arange(13.0) * 5
    n = 12
    cfg = db.DriftBurstConfig(k_n=k, h_n=20.0, bandwidth_ratio=2.0)
    pa = db.preaverage(np.r_[0.0, np.diff(prices)], k)
    assert pa.size == n - k + 2
    mu = db.drift_estimate((times, prices), times[-1], cfg)
    assert mu == pytest.approx(drift_loop(list(times), list(prices), k, 20.0), rel=1e-12)
    v = db.variance_estimate((times, prices), times[-1], cfg, lag=lag)
    ref, counts = variance_loop(list(times), list(prices), k, 40.0, lag)
    assert counts == {L: n - k - L + 2 for L in range(1, lag + 1)}
    if ref > 0:
        assert v == pytest.approx(ref, rel=1e-12)


def test_no_look_ahead(null_day):
    times, prices = null_day.timestamps, null_day.noisy.copy()
    t = times[5000]
    a = db.drift_estimate((times, prices), t)
    prices[5001:] += 1.0
    assert db.drift_estimate((times, prices), t) == a


def test_recursion_matches_direct_sums(null_day):
    seq = db.db_sequence(null_day)
    lag = seq.lags[0]
    path = (null_day.timestamps, null_day.noisy)
    for i in (0, 100, 340):
        t = seq.timestamps[i]
        mu = db.drift_estimate(path, t)
        s2 = db.variance_estimate(path, t, lag=lag)
        assert seq.mu[i] == pytest.approx(mu, rel=1e-8, abs=1e-14)
        assert seq.sigma2[i] == pytest.approx(s2, rel=1e-8)
        assert seq.stats[i] == pytest.approx(math.sqrt(CFG.h_n) * mu / math.sqrt(s2), rel=1e-7)


def test_sequence_layout(null_day):
    seq = db.db_sequence(null_day)
    assert seq.stats.size == 341
    assert seq.minute[0] == 50 and seq.minute[-1] == 390
    assert seq.timestamps[0] == 34_200 + 50 * 60


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scale_invariance(c):
    day = sg.simulate_heston_day(spacing=5.0, rng=RngStream(12))
    a = db.db_sequence((day.timestamps, day.noisy)).stats
    b = db.db_sequence((day.timestamps, c * day.noisy)).stats
    assert np.allclose(a, b, rtol=1e-8, atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.floats(-1e6, 1e6))
def test_time_shift_invariance(shift):
    day = sg.simulate_heston_day(spacing=5.0, rng=RngStream(13))
    a = db.db_sequence((day.timestamps, day.noisy)).stats
    b = db.db_sequence((day.timestamps + shift, day.noisy)).stats
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_null_calibration(null_days):
    seqs = [db.db_sequence(p) for p in null_days]
    x = np.concatenate([s.stats for s in seqs])
    assert x.size == 341 * 200
    assert abs(x.mean()) <= 0.05
    assert 0.9 <= x.std() <= 1.1
    theta = np.mean([fit_ar1(s.stats).theta_hat for s in seqs])
    assert theta == pytest.approx(0.89, abs=0.02)


def test_multi_day_sequence():
    p = sg.simulate_expansion_days(rng=RngStream(14))
    seq = db.db_sequence(p)
    assert seq.stats.size == 3 * 341
    assert np.array_equal(np.unique(seq.day), [0, 1, 2])
    assert np.array_equal(seq.for_day(1), db.db_sequence(p.day(1)).stats)


def test_sequence_errors():
    t = np.array([0.0, 1.0, 3.0, 4.0] + list(np.arange(5.0, 30.0)))
    with pytest.raises(DataError):
        db.db_sequence((t, np.zeros(t.size)))
    with pytest.raises(DataError):
        db.db_sequence((np.arange(5.0), np.zeros(5)))
    with pytest.raises(DomainError):
        db.DriftBurstConfig(k_n=1)
