import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treemart import rng, trees
from treemart.errors import DomainError, HorizonError, ResourceError
from treemart.trees import ROOT, BinaryTreeShape, NodeLabel

seeds = st.integers(0, 2**64 - 1)


# ---- labels and shapes

@given(st.text(alphabet="01", max_size=40))
def test_label_word_roundtrip(word):
    u = NodeLabel.from_word(word)
    assert u.word == word
    assert u.depth == len(word)
    if word:
        assert u.parent().word == word[:-1]
        assert all(a.is_ancestor_of(u) for a in u.ancestors())


def test_root_label():
    assert str(ROOT) == "∅"
    assert ROOT.children() == (NodeLabel.from_word("0"), NodeLabel.from_word("1"))


def test_shape_rejects_orphans():
    with pytest.raises(ValueError):
        BinaryTreeShape.from_internal(["", "01"])


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=12))
def test_insertion_keeps_leaf_count(choices):
    shape = BinaryTreeShape.from_internal([])
    for c in choices:
        leaves = sorted(shape.leaves)
        shape = shape.insert(leaves[c % len(leaves)])
        assert len(shape.leaves) == shape.n_internal + 1
        # Kraft equality for a complete binary tree
        assert sum(Fraction(1, 2 ** int(d)) for d in shape.leaf_depths()) == 1


def test_first_two_trees():
    proc = trees.simulate_bst(11, 2)
    assert proc[0].leaves == {NodeLabel.from_word("0"), NodeLabel.from_word("1")}
    assert sorted(proc.leaf_depths(2).tolist()) == [1, 2, 2]


@given(seeds, st.integers(1, 40))
def test_bst_leaf_depths_match_shape(seed, n):
    proc = trees.simulate_bst(seed, n)
    assert sorted(proc.leaf_depths(n).tolist()) == sorted(proc[-1].leaf_depths().tolist())


def test_shape_probabilities():
    assert trees.shape_probability(BinaryTreeShape.from_internal([""])) == 1.0
    comb = BinaryTreeShape.from_internal(["", "0"])
    assert trees.shape_probability_exact(comb) == Fraction(1, 2)
    shapes = trees.all_shapes(4)
    assert len(shapes) == 14
    assert abs(sum(trees.shape_probability(s) for s in shapes) - 1.0) < 1e-12
    with pytest.raises(DomainError):
        trees.all_shapes(trees.MAX_ENUMERATION + 1)


def test_bst_batch_depth_sums():
    # mean total leaf depth of T_n is 2(n+1)(H_{n+1} - 1)
    n = 64
    depths = trees.bst_leaf_depths_batch(1, n, 4000)
    harmonic = math.fsum(1.0 / k for k in range(1, n + 2))
    expected = 2 * (n + 1) * (harmonic - 1)
    total = depths.sum(axis=1)
    assert abs(total.mean() - expected) < 4 * total.std() / math.sqrt(total.size)


# ---- Yule paths

def test_single_leaf_stop():
    p = trees.simulate_yule(4, leaves=1)
    assert p.valid_horizon == pytest.approx(rng.lifetime(4, 0, 0))
    assert p.population(0.5 * p.valid_horizon) == 1
    with pytest.raises(HorizonError):
        p.population(p.valid_horizon)


def test_first_generation_shares_birth():
    p = trees.simulate_yule(9, generation=1)
    s = trees.generation_times(p, 1)
    assert s[0] == s[1] == rng.lifetime(9, 0, 0)


@given(seeds, st.floats(0.0, 4.0))
def test_population_counts_splits(seed, frac):
    p = trees.simulate_yule(seed, time=4.0)
    t = frac
    splits = int(np.count_nonzero(p.death <= t))
    assert p.population(t) == 1 + splits
    assert len(trees.alive_set(p, t)) == p.population(t)


@given(seeds)
def test_prefix_consistency(seed):
    short = trees.simulate_yule(seed, time=2.0)
    long = short.extended(time=3.5)
    for t in (0.0, 0.7, 1.9):
        assert trees.alive_set(short, t) == trees.alive_set(long, t)


@given(seeds, st.integers(1, 60))
def test_leaf_stop_population(seed, n):
    p = trees.simulate_yule(seed, leaves=n)
    last = p.jump_times[-1]
    assert p.population(last) == n


def test_mean_population_at_ten():
    sizes = [trees.simulate_yule(rng.derive_seed(0, "N10", i), time=10.0).population(10.0) for i in range(1000)]
    assert abs(np.mean(sizes) / math.exp(10.0) - 1.0) < 0.05


def test_generation_line_moments():
    vals = np.concatenate([trees._generation_times(rng.derive_seed(1, "gen12", i), 12) for i in range(1000)])
    assert abs(vals.mean() - 12.0) < 0.3
    assert abs(vals.var() - 12.0) < 1.5


def test_saturation_matches_arrays():
    p = trees.simulate_yule(21, time=3.0)
    i = int(np.argmax(p.depth))
    u = NodeLabel(int(p.depth[i]), int(p.bits[i]))
    assert p.saturation(u) == pytest.approx(p.birth[i], rel=1e-12)


def test_resource_cap():
    with pytest.raises(ResourceError):
        trees.simulate_yule(0, time=12.0, max_nodes=1000)


def test_split_ratio_after_first_split():
    p = trees.simulate_yule(13, leaves=2)
    t = p.jump_times[1]
    r = trees.split_ratios(p, 1, t)
    assert r.ratio(NodeLabel.from_word("0")) == 0.5
    assert r.sample_size == 2


def test_split_ratios_need_born_line():
    p = trees.simulate_yule(13, leaves=2)
    with pytest.raises(DomainError):
        trees.split_ratios(p, 2, p.jump_times[1])


@given(seeds, st.integers(1, 8))
def test_bisection_ratios_complement(seed, g):
    r = trees.bisection_ratios(seed, g)
    for level in r.ratios:
        assert np.max(np.abs(level[0::2] + level[1::2] - 1.0)) <= 2**-52
    assert np.exp(r.log_branch_products(g)).sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("stop", [{"time": 3.0}, {"leaves": 40}, {"generation": 4}])
def test_binary_roundtrip(stop):
    p = trees.simulate_yule(77, **stop)
    buf = io.BytesIO()
    trees.dump_path(p, buf)
    buf.seek(0)
    q = trees.load_path(buf)
    assert q.valid_horizon == p.valid_horizon
    assert q.stop == p.stop
    t = 0.5 * p.valid_horizon
    assert trees.alive_set(q, t) == trees.alive_set(p, t)


@given(seeds, st.integers(1, 80))
def test_distinct_births_before_jump(seed, n):
    p = trees.simulate_yule(seed, leaves=n + 1)
    tau_n = p.jump_times[n]
    assert np.unique(p.birth[p.birth < tau_n]).size == n


def _permutation_bst_shape(keys):
    # classic BST on distinct keys; left child appends 0, right child 1
    placed = {}
    for k in keys:
        label = trees.ROOT
        while label in placed:
            label = label.child(0 if k < placed[label] else 1)
        placed[label] = k
    return frozenset(placed)


def test_permutation_model_matches_insertion_law():
    from treemart.stats import chi_squared_test

    n = 4
    shapes = trees.all_shapes(n)
    index = {s.internal: i for i, s in enumerate(shapes)}
    gen = np.random.default_rng(12)
    counts = np.zeros(len(shapes))
    for _ in range(20_000):
        counts[index[_permutation_bst_shape(gen.permutation(n))]] += 1
    probs = np.array([trees.shape_probability(s) for s in shapes])
    assert chi_squared_test(counts, probs).passed
