import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy import stats as sps

from treemart import martingales as mg
from treemart import stats
from treemart.errors import DomainError


@pytest.mark.parametrize("law", ["exp1", "gamma(1.5)", "gamma(0.4)", "beta(0.75,0.25)", "yule_quarter", "bst_quarter"])
def test_sampler_matches_cdf(law):
    s = stats.sample_limit_law(law, 1, 10_000)
    assert stats.ks_test(s, law).passed


def test_sampler_is_seeded():
    a = stats.sample_limit_law("gamma(1.25)", 4, 100).values
    b = stats.sample_limit_law("gamma(1.25)", 4, 100).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, stats.sample_limit_law("gamma(1.25)", 5, 100).values)


def test_gamma_sampler_against_scipy():
    gen = np.random.default_rng(0)
    for shape in (0.3, 1.0, 1.5, 7.0):
        draws = stats.sample_gamma(gen, shape, 20_000)
        assert sps.kstest(draws, "gamma", args=(shape,)).pvalue > 1e-3


@given(st.floats(0.01, 20.0))
def test_cdf_is_monotone_and_bounded(x):
    for law in ("yule_quarter", "bst_quarter"):
        lo, hi = stats.target_cdf(law, x), stats.target_cdf(law, 1.01 * x)
        assert 0.0 <= lo <= hi <= 1.0


def test_cdf_limits():
    assert stats.target_cdf("yule_quarter", 1e-4) < 1e-12
    assert stats.target_cdf("yule_quarter", 1e12) > 1 - 1e-5
    assert stats.target_cdf("bst_quarter", 0.0) == 0.0


def test_bst_quarter_cdf_by_double_integral():
    # P(c / sqrt(B G) <= m) by a 2-d quadrature over the beta and gamma densities
    c = 0.25 * math.sqrt(math.pi)
    m = 0.9
    beta, gamma = sps.beta(0.75, 0.25), sps.gamma(1.25)
    inner = lambda b: gamma.sf(c * c / (m * m * b)) * beta.pdf(b)
    oracle = integrate.quad(inner, 0, 1, limit=200)[0]
    assert stats.target_cdf("bst_quarter", m) == pytest.approx(oracle, abs=1e-7)


def test_yule_quarter_density_normalized():
    total = integrate.quad(stats.yule_quarter_density, 0, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("law", ["yule_quarter", "bst_quarter"])
def test_limit_means_are_one(law):
    assert stats.parse_law(law).mean() == pytest.approx(1.0, rel=1e-13)


def test_yule_quarter_sample_mean():
    s = stats.sample_limit_law("yule_quarter", 2, 200_000).values
    r = stats.mean_test(s, 1.0)
    assert r.passed


def test_parse_law_errors():
    with pytest.raises(DomainError):
        stats.parse_law("gamma(1,2)")
    with pytest.raises(DomainError):
        stats.parse_law("nope")


def test_ks_null_and_power():
    passes = sum(stats.ks_test(stats.sample_limit_law("exp1", s, 10_000), "exp1").passed for s in range(100))
    assert passes >= 98
    assert stats.ks_test(stats.sample_limit_law("exp1", 0, 10_000), "yule_quarter").p_value < 1e-6
    with pytest.raises(DomainError):
        stats.ks_test(np.array([]), "exp1")


def test_chi_squared():
    probs = np.array([0.2, 0.3, 0.5])
    assert stats.chi_squared_test(np.array([200, 300, 500]), probs).passed
    assert not stats.chi_squared_test(np.array([300, 300, 400]), probs).passed


def test_report_serialization():
    r = stats.TestReport("demo", "KS", np.float64(0.1), 0.5, True, {"n": np.int64(3)}, details={"x": np.arange(2)})
    d = json.loads(r.to_json())
    assert d["verdict"] == "pass" and d["sizes"]["n"] == 3 and d["details"]["x"] == [0, 1]
    assert r.csv_row().count(",") == stats.TestReport.CSV_HEADER.count(",")


# ---- identity suites

@pytest.mark.parametrize("z", [0.25, 0.7, 2.0])
def test_one_step(z):
    assert stats.one_step_residuals(z, shapes=200).statistic <= 1e-12


def test_degenerate_half():
    assert stats.degenerate_half(paths=10).statistic == 0.0


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 2.0])
def test_yor_moments(s):
    r = stats.moment_check_yor(s)
    assert r.passed
    if s == 1.0:
        assert r.details["left"] == pytest.approx(3.75, rel=1e-14)
        assert r.details["right"] == pytest.approx(3.75, rel=1e-14)


def test_limit_connection_at_one():
    assert stats.limit_connection(1.0, time=6.0, paths=10).statistic < 1e-12


# ---- theorem suites (small sizes)

def test_gen_vs_yule_contracts():
    r = stats.gen_vs_yule(1.0, (6, 9, 12), paths=40)
    assert r.passed and len(r.stages) == 3


def test_bis_vs_bst_small():
    r = stats.bis_vs_bst(0.8, paths=30)
    assert r.passed and r.details["median_sample_size"] > 2**3


def test_embedding_small():
    assert stats.embedding_law(3, samples=5000).passed


def test_verify_theorem_domain():
    with pytest.raises(DomainError):
        stats.verify_theorem("T33_gen_eq_yule", 0.1)
    with pytest.raises(DomainError):
        stats.verify_theorem("T34_deriv_gen_eq_yule", 1.0)
    with pytest.raises(DomainError):
        stats.verify_theorem("nonsense", 1.0)


def test_derivative_law_report():
    r = stats.derivative_laws(mg.critical_points()[1], generation=6, paths=100, pathwise_paths=5)
    assert r.passed == (r.p_value > 0.01)
    assert r.details["exploratory_pathwise"]["paths"] == 5
