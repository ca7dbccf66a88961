import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from seqcauchy import statdist as sd
from seqcauchy.errors import DomainError, FactorizationError
from seqcauchy.harness import table2_rows

from oracles import t_cdf_quad

KINDS = [sd.NORMAL, sd.CAUCHY, sd.GUMBEL, sd.student_t(4), sd.student_t(234)]


def test_cdf_examples():
    assert sd.cdf(sd.NORMAL, 0.0) == 0.5
    assert sd.cdf(sd.GUMBEL, 0.0) == pytest.approx(math.exp(-1.0), abs=1e-15)


@pytest.mark.parametrize("x0", [-2.0, 1.0, 3.0])
def test_student_t_matches_quadrature(x0):
    assert sd.cdf(sd.student_t(4), x0) == pytest.approx(t_cdf_quad(x0, 4), abs=1e-10)


@pytest.mark.parametrize("kind", KINDS, ids=str)
def test_cdf_monotone_and_limits(kind):
    x = np.linspace(-40, 40, 4001)
    c = sd.cdf(kind, x)
    assert np.all(np.diff(c) >= 0)
    assert sd.cdf(kind, -1e300) < 1e-2 and sd.cdf(kind, 1e300) > 1 - 1e-2
    assert sd.cdf(kind, -1e12) < 1e-10 or kind is sd.CAUCHY


@pytest.mark.parametrize("kind", KINDS, ids=str)
def test_quantile_roundtrip_grid(kind):
    x = np.linspace(-3, 3, 61)
    assert np.allclose(sd.quantile(kind, sd.cdf(kind, x)), x, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(KINDS), st.floats(-6, 6))
def test_quantile_roundtrip_property(kind, x):
    assert sd.quantile(kind, sd.cdf(kind, x)) == pytest.approx(x, abs=1e-8)


def test_sf_complements_cdf():
    for kind in KINDS:
        x = np.linspace(-5, 5, 101)
        assert np.allclose(sd.cdf(kind, x) + sd.sf(kind, x), 1.0, atol=1e-14)


def test_quantile_domain():
    with pytest.raises(DomainError):
        sd.quantile(sd.NORMAL, 1.0)
    with pytest.raises(DomainError):
        sd.cdf(sd.NORMAL, float("nan"))


def test_correlation_examples():
    c = sd.build_correlation(sd.CorrelationSpec("exponential", 3, 0.5))
    assert c[0, 1] == 0.5 and c[0, 2] == 0.25
    c = sd.build_correlation(sd.CorrelationSpec("polynomial", 2, 1.0))
    assert c[0, 1] == pytest.approx(1 / 1.7, abs=1e-15)


def test_correlation_spec_validation():
    with pytest.raises(DomainError):
        sd.CorrelationSpec("exponential", 5, 1.0)
    with pytest.raises(DomainError):
        sd.CorrelationSpec("block-diagonal", 15, 0.5, block_size=10)
    with pytest.raises(DomainError):
        sd.CorrelationSpec("mixture", 10, 0.5)
    with pytest.raises(FactorizationError):
        sd.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("row", table2_rows(), ids=lambda r: f"{r['model']}-{r['theta']}")
def test_table_grids_symmetric_and_pd(row):
    c = sd.build_correlation(sd.CorrelationSpec.from_dict(row))
    assert np.array_equal(c, c.T)
    assert np.linalg.eigvalsh(c).min() > 0


def test_spec_roundtrip():
    for row in table2_rows():
        spec = sd.CorrelationSpec.from_dict(row)
        assert sd.CorrelationSpec.from_dict(spec.to_dict()) == spec


def test_mvn_identity_moments():
    gen = sd.RngStream(1).generator()
    L = np.eye(4)
    x = np.array([sd.sample_mvn(np.zeros(4), L, gen, chol=L) for _ in range(1)])
    draws = sd.sample_mvn_batch(L, 3, range(100_000))
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
    assert np.all(np.abs(draws.var(axis=0) - 1) < 0.05)
    assert x.shape == (1, 4)


def test_mvn_exponential_correlation():
    c = sd.build_correlation(sd.CorrelationSpec("exponential", 2, 0.9))
    draws = sd.sample_mvn_batch(sd.cholesky(c), 5, range(100_000))
    assert abs(np.corrcoef(draws.T)[0, 1] - 0.9) < 0.02


def test_mvn_determinism_and_batch_equivalence():
    c = sd.build_correlation(sd.CorrelationSpec("exponential", 6, 0.4))
    a = sd.sample_mvn(np.zeros(6), c, sd.RngStream(7, 3))
    b = sd.sample_mvn(np.zeros(6), c, sd.RngStream(7, 3))
    assert np.array_equal(a, b)
    batch = sd.sample_mvn_batch(sd.cholesky(c), 7, [1, 3])
    assert np.allclose(batch[1], a, rtol=0, atol=1e-14)


def test_mvn_d1_is_standard_normal():
    draws = sd.sample_mvn_batch(np.eye(1), 11, range(100_000))[:, 0]
    ks = sps.kstest(draws, "norm")
    assert ks.statistic < 1.628 / math.sqrt(draws.size)


def test_streams_are_distinct():
    a = sd.RngStream(1, 0).generator().standard_normal(8)
    b = sd.RngStream(1, 1).generator().standard_normal(8)
    c = sd.RngStream(1, 0).child(1).generator().standard_normal(8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_ar1_white_noise():
    x = sd.simulate_ar1(0.0, 100_000, sd.RngStream(2))
    assert abs(np.corrcoef(x[1:], x[:-1])[0, 1]) < 0.01


def test_ar1_stationary_variance():
    x = sd.simulate_ar1(0.9, 100_000, sd.RngStream(3), burn_in=10_000)
    assert x.size == 100_000
    assert abs(x.var() - 1) < 0.05


def test_ar1_lag2_autocovariance():
    x = sd.simulate_ar1(0.95, 200_000, sd.RngStream(4))
    assert abs(np.mean(x[2:] * x[:-2]) - 0.9025) < 0.03


def test_ar1_acf_matches_exponential_model():
    theta = 0.6
    x = sd.simulate_ar1(theta, 100_000, sd.RngStream(5))
    x = x - x.mean()
    for lag in range(1, 6):
        acf = np.dot(x[lag:], x[:-lag]) / np.dot(x, x)
        assert abs(acf - theta ** lag) < 0.02


def test_ar1_domain():
    with pytest.raises(DomainError):
        sd.simulate_ar1(1.0, 10, sd.RngStream(0))
