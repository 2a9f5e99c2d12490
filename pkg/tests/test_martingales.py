import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treemart import martingales as mg
from treemart import rng, trees
from treemart.errors import DomainError, ExtrapolationError
from treemart.fixedpoint import j_closed_form
from treemart.trees import BinaryTreeShape, NodeLabel

seeds = st.integers(0, 2**64 - 1)
zs = st.floats(0.05, 3.0)


def test_critical_points():
    lo, hi = mg.critical_points()
    assert f"{lo:.4f}".startswith("0.186") and f"{hi:.4f}".startswith("2.155")
    assert abs(mg.critical_equation(lo)) <= 1e-15
    assert abs(mg.critical_equation(hi)) <= 1e-15


def test_classify():
    half = mg.classify(0.5)
    assert half.region is mg.Region.SUPERCRITICAL and not half.alpha_defined
    quarter = mg.classify(0.25)
    assert quarter.region is mg.Region.SUPERCRITICAL and quarter.alpha == pytest.approx(16.0, rel=1e-14)
    assert mg.classify(0.125).region is mg.Region.SUBCRITICAL
    assert mg.classify(mg.critical_points()[1]).region is mg.Region.CRITICAL_PLUS
    with pytest.raises(DomainError):
        mg.classify(0.0)


def test_normalizing_constant():
    assert mg.c_n(3, 2.0) == 20.0
    for n in (10, 1000, 100_000):
        oracle = math.lgamma(n + 2 * 0.7) - math.lgamma(2 * 0.7) - math.lgamma(n + 1.0)
        assert mg.log_c_n(n, 0.7) == pytest.approx(oracle, rel=1e-9)


@given(st.integers(1, 200), zs)
def test_log_derivative_of_constant(n, z):
    h = 1e-6 * z
    fd = (mg.log_c_n(n, z + h) - mg.log_c_n(n, z - h)) / (2 * h)
    assert mg.c_n_log_derivative(n, z) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_bst_examples():
    assert mg.m_bst(BinaryTreeShape.from_internal([""]), 1.7).value == pytest.approx(1.0, rel=1e-15)
    for internal in (["", "0"], ["", "1"]):
        assert mg.m_bst(BinaryTreeShape.from_internal(internal), 0.3).value == pytest.approx(1.0, rel=1e-15)
    comb = BinaryTreeShape.from_internal(["", "0", "00"])
    assert mg.m_bst(comb, 2.0).value == pytest.approx(1.1, rel=1e-15)


def test_yule_examples():
    p = trees.simulate_yule(3, leaves=1)
    t = 0.5 * p.valid_horizon
    assert mg.m_yule(p, t, 0.8).value == pytest.approx(math.exp(-0.6 * t), rel=1e-14)


def test_gen_first_generation():
    p = trees.simulate_yule(5, generation=1)
    tau = rng.lifetime(5, 0, 0)
    assert mg.m_gen(p, 0, 1.3).value == 1.0
    assert mg.m_gen(p, 1, 1.0).value == pytest.approx(2 * math.exp(-tau), rel=1e-14)
    assert mg.derivative_martingale("GEN", p, 1, 1.0).value == pytest.approx(
        2 * math.exp(-tau) * (1 - 2 * tau), rel=1e-12, abs=1e-15)


def test_bis_examples():
    r = trees.SplitRatios((np.array([0.3, 0.7]),), 0)
    assert mg.m_bis(r, 1, 1.0).value == pytest.approx(1.0, rel=1e-15)
    assert mg.m_bis(r, 1, 2.0).value == pytest.approx(0.74, rel=1e-14)


@given(seeds, st.floats(0.0, 3.0))
def test_half_is_exactly_one(seed, t):
    p = trees.simulate_yule(seed, time=3.0)
    assert mg.m_yule(p, t, 0.5).value == 1.0
    assert mg.m_gen(p, 5, 0.5).value == 1.0
    assert mg.m_bis(trees.bisection_ratios(seed, 5), 5, 0.5).value == 1.0
    assert mg.m_bst(trees.simulate_bst(seed, 30).leaf_depths(), 0.5).value == 1.0


@given(seeds, zs)
def test_yule_at_one_counts_population(seed, t):
    p = trees.simulate_yule(seed, time=3.0)
    t = min(t, 3.0)
    assert mg.m_yule(p, t, 1.0).value == pytest.approx(math.exp(-t) * p.population(t), rel=1e-14)


@pytest.mark.parametrize("kind", ["BST", "GEN", "YULE", "BIS"])
@pytest.mark.parametrize("z", [0.3, 1.0, 2.1])
def test_derivatives_match_finite_differences(kind, z):
    seed, h = 17, 1e-6
    state = {
        "BST": (trees.simulate_bst(seed, 40).leaf_depths(), None),
        "GEN": (trees.simulate_yule(seed, time=3.0), 5),
        "YULE": (trees.simulate_yule(seed, time=3.0), 2.5),
        "BIS": (trees.bisection_ratios(seed, 6), 6),
    }[kind]
    f = lambda zz: mg.additive_martingale(kind, state[0], state[1], zz).value
    fd = (f(z + h) - f(z - h)) / (2 * h)
    d = mg.derivative_martingale(kind, state[0], state[1], z).value
    assert d == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_derivative_on_first_tree_is_zero():
    assert mg.derivative_martingale("BST", BinaryTreeShape.from_internal([""]), None, 0.9).value == 0.0


def test_log_space_survives_extremes():
    p = trees.simulate_yule(8, generation=20)
    v = mg.m_gen(p, 20, mg.critical_points()[1])
    assert math.isfinite(v.log_abs) and v.value >= 0


def test_multiplicative_martingale_mean():
    j = j_closed_form(1.0)
    for y in (0.5, 1.0, 2.0):
        vals = np.array([mg.multiplicative_martingale(trees.simulate_yule(rng.derive_seed(2, "mult", i), generation=10),
                                                      ("generation", 10), y, j, 1.0).value for i in range(1000)])
        assert abs(vals.mean() - j(y)) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_multiplicative_martingale_start():
    p = trees.simulate_yule(1, generation=2)
    j = j_closed_form(1.0)
    assert mg.multiplicative_martingale(p, ("generation", 0), 0.7, j, 1.0).value == pytest.approx(j(0.7))


def test_multiplicative_rejects_bad_transform():
    p = trees.simulate_yule(1, generation=2)
    with pytest.raises(ExtrapolationError):
        mg.multiplicative_martingale(p, ("generation", 1), 1.0, lambda x: 2.0 + 0 * x, 1.0)


def test_multiplicative_collapse_at_half():
    p = trees.simulate_yule(6, generation=8)
    j = j_closed_form(0.5)
    for g in (0, 3, 8):
        assert mg.multiplicative_martingale(p, ("generation", g), 1.3, j, 0.5).value == pytest.approx(
            math.exp(-1.3), rel=1e-13)


@given(seeds, st.floats(0.2, 2.0), st.integers(0, 10))
def test_log_space_matches_direct(seed, z, g):
    p = trees.simulate_yule(seed, generation=max(g, 1))
    s = trees.generation_times(p, g)
    direct = math.fsum(z**g * np.exp((1 - 2 * z) * s))
    assert mg.m_gen(p, g, z).value == pytest.approx(direct, rel=1e-10)
    r = trees.bisection_ratios(seed, g)
    direct = math.fsum(z**g * np.exp((2 * z - 1) * r.log_branch_products(g)))
    assert mg.m_bis(r, g, z).value == pytest.approx(direct, rel=1e-10)
