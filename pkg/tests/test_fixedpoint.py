import io
import math

import numpy as np
import pytest

from treemart import fixedpoint as fp
from treemart import martingales as mg
from treemart import stats
from treemart.errors import DomainError, ExtrapolationError, TruncationError


@pytest.fixture(scope="module")
def solved():
    return {z: fp.solve_smoothing_j(z) for z in (1.0, 0.5, 0.25, 1.5)}


def test_z_one_on_short_range():
    sol = fp.solve_smoothing_j(1.0, x_max=10.0)
    assert np.max(np.abs(sol.values - 1.0 / (1.0 + sol.grid))) <= 1e-6


@pytest.mark.parametrize("z,tol", [(1.0, 1e-6), (0.5, 1e-10), (0.25, 1e-4)])
def test_closed_forms(solved, z, tol):
    sol = solved[z]
    assert np.max(np.abs(sol.values - fp.j_closed_form(z)(sol.grid))) <= tol


def test_shape_checks(solved):
    for sol in solved.values():
        assert sol.is_non_increasing()
        assert sol.convexity_spot_check()


def test_interpolation_and_bounds(solved):
    sol = solved[1.0]
    x = np.geomspace(sol.grid[0], sol.grid[-1], 77)
    assert np.max(np.abs(sol(x) - 1.0 / (1.0 + x))) < 1e-6
    with pytest.raises(ExtrapolationError):
        sol(10 * sol.grid[-1])


def test_subcritical_rejected():
    with pytest.raises(DomainError):
        fp.solve_smoothing_j(0.125)


@pytest.mark.parametrize("which", [0, 1])
def test_critical_slope(which):
    zc = mg.critical_points()[which]
    sol = fp.solve_smoothing_j(zc)
    target = 2.0 / abs(2.0 * zc - 1.0)
    assert abs(fp.critical_slope_readout(sol) / target - 1.0) < 0.05


def test_integral_equation_residuals(solved):
    assert fp.check_integral_equation(lambda x: 1.0 / (1.0 + np.asarray(x)), 1.0, tag="j") <= 1e-8
    assert fp.check_integral_equation(lambda x: np.ones_like(np.asarray(x, dtype=float)), 0.7, tag="j") <= 1e-12
    pts = np.geomspace(1e-3, 1e2, 25)
    assert fp.check_integral_equation(fp.phi_bar, 16.0, tag="phi", points=pts) <= 1e-6
    assert fp.check_integral_equation(solved[1.5], 1.5, max_points=20) <= 1e-6


def test_csv_roundtrip(solved):
    buf = io.StringIO()
    solved[0.25].to_csv(buf, residual=1e-7)
    buf.seek(0)
    meta, x, y = fp.read_csv(buf)
    assert meta["tag"] == "j" and float(meta["parameter"]) == 0.25
    assert np.array_equal(x, solved[0.25].grid) and np.array_equal(y, solved[0.25].values)


# ---- pantograph

def test_series_alpha_two():
    series = fp.solve_phi_series(2.0)
    assert series.coefficients[0] == 1.0
    assert series.coefficients[1] == -0.25
    x = np.linspace(0.0, 5.0, 201)
    assert np.max(np.abs(series(x) - np.exp(-x / 4))) <= 1e-8
    with pytest.raises(TruncationError):
        series(10 * series.radius())


def test_series_at_alpha_critical():
    series = fp.solve_phi_series(fp.alpha_critical())
    pts = np.linspace(0.0, 2.0, 21)
    sol = fp.PantographSolution(fp.alpha_critical())
    assert np.max(np.abs(series(pts) - sol(pts))) < 1e-12
    assert fp.check_integral_equation(sol.as_solution(), fp.alpha_critical(), tag="Phi", points=pts) <= 1e-6


def test_scaling_family_residual():
    sol = fp.solve_smoothing_j(1.5)
    kappa = 1.7
    base = lambda x: sol(x, extrapolate=True)
    scaled = lambda x: sol(kappa * np.asarray(x), extrapolate=True)
    pts = np.geomspace(1e-2, 10.0, 12)
    r_scaled = fp.check_integral_equation(scaled, 1.5, tag="j", points=pts)
    r_base = fp.check_integral_equation(base, 1.5, tag="j", points=kappa * pts)
    assert abs(r_scaled - r_base) < 1e-10


def test_series_domain():
    with pytest.raises(DomainError):
        fp.pantograph_coefficients(1.0)


def test_stepping_matches_series():
    sol = fp.PantographSolution(2.0, x_max=60.0)
    x = np.linspace(0.0, 60.0, 301)
    assert np.max(np.abs(sol(x) - np.exp(-x / 4))) < 1e-12


@pytest.mark.parametrize("z", [1.2, 1.5])
def test_two_routes_agree(solved, z):
    """The pantograph route and the direct smoothing iteration give the same j."""
    alpha = z ** (1.0 / (2.0 * z - 1.0))
    sol = fp.PantographSolution(alpha)
    tail = fp.measure_tail_constant(sol)
    assert tail["z"] == pytest.approx(z, rel=1e-12)
    j = fp.j_from_pantograph(sol, tail["K"], critical=False)
    direct = solved[z] if z in solved else fp.solve_smoothing_j(z)
    x = np.geomspace(1e-3, 1e2, 40)
    assert np.max(np.abs(j(x) - direct(x))) < 1e-6


def test_alpha_family_edges():
    assert fp.alpha_critical() == pytest.approx(math.exp(1.0 / (2.0 * mg.critical_points()[1])))
    assert fp.z_from_alpha(fp.alpha_critical()) == mg.critical_points()[1]
    with pytest.raises(DomainError):
        fp.z_from_alpha(2.0)


# ---- Laplace connection and psi

@pytest.fixture(scope="module")
def quarter_transform():
    s = stats.sample_limit_law("bst_quarter", 0, 10**6).values

    def j_bst(a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        out = np.empty(a.size)
        for i in range(0, a.size, 16):
            out[i:i + 16] = np.exp(-np.outer(a[i:i + 16], s)).mean(axis=1)
        return out

    return j_bst


def test_connection_trivial_cases():
    assert fp.laplace_connection(lambda a: np.exp(-a), 0.8, 0.0) == pytest.approx(1.0, abs=1e-14)
    x = np.linspace(0, 4, 9)
    assert np.max(np.abs(fp.laplace_connection(lambda a: np.exp(-a), 0.5, x) - np.exp(-x))) < 1e-13


def test_connection_quarter(quarter_transform):
    x = np.linspace(0.1, 5.0, 10)
    got = fp.laplace_connection(quarter_transform, 0.25, x)
    assert np.max(np.abs(got - fp.j_closed_form(0.25)(x))) < 1e-2


def test_psi_convolution(quarter_transform):
    psi = fp.psi_from_j_bst(quarter_transform, 0.25)
    assert psi(np.array([0.0]))[0] == 0.0
    residual = fp.check_psi_convolution(psi, 16.0, points=401)
    assert residual <= 1e-2
    # psi(kappa u) solves the same equation; on the grid scaled by 1/kappa the residual scales by 1/kappa
    kappa = 2.0
    scaled = fp.psi_from_j_bst(quarter_transform, 0.25, kappa)
    assert abs(kappa * fp.check_psi_convolution(scaled, 16.0, y_max=2.0 / kappa, points=401) - residual) < 1e-10


# ---- Mellin

def test_mellin_chain():
    for s in (0.5, 1.0, 2.0):
        left, right = fp.quarter_moment_chain(s)
        assert abs(left - right) <= 1e-12 * abs(left)
    assert fp.quarter_moment_chain(0.0) == pytest.approx((1.0, 1.0), rel=1e-15)
    assert fp.mellin(("gamma", 1.5), 2.0) == pytest.approx(15 / 4, rel=1e-14)
    assert 4 * fp.mellin(("beta", 0.75, 0.25), 1) * fp.mellin(("gamma", 1.0), 1) * fp.mellin(("gamma", 1.25), 1) \
        == pytest.approx(15 / 4, rel=1e-14)
    with pytest.raises(DomainError):
        fp.mellin_gamma(1.5, -2.0)


def test_duplication_formula():
    for y in (0.75, 1.5, 3.25):
        assert fp.duplication_gap(y) < 1e-12


def test_simple_mellin_values():
    assert fp.mellin(("gamma", 1.0), 1.0) == pytest.approx(1.0, rel=1e-15)
    assert fp.mellin(("beta", 0.75, 0.25), 1.0) == pytest.approx(0.75, rel=1e-15)
