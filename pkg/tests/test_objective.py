import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hiercos.errors import NonFiniteInput, NonPositiveDepth, NotALeaf
from hiercos.hierarchy import parse_hierarchy, random_tree
from hiercos.objective import (
    kl_loss,
    level_weights,
    loss_gradient,
    predicted_distribution,
    reg_loss,
    target_distribution,
    total_loss,
)
from hiercos.subspace import assign_bases, construct_ideal_vector


def fd_gradient(f, x, step=1e-5):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def away_from_zero(rng, n, lo=0.05):
    x = rng.uniform(lo, 2.0, n)
    return x * rng.choice([-1.0, 1.0], n)


def test_level_weights():
    assert level_weights(1).weights == pytest.approx([math.e])
    assert level_weights(2).weights == pytest.approx([1.6487, 2.7183], abs=1e-4)
    assert level_weights(3).weights == pytest.approx([1.3956, 1.6487, 2.7183], abs=1e-4)
    with pytest.raises(NonPositiveDepth):
        level_weights(0)


@pytest.mark.parametrize("h", range(1, 9))
def test_level_weights_monotone(h):
    w = level_weights(h).weights
    assert np.all(np.diff(w) > 0)
    assert w[-1] == pytest.approx(math.e) and w[0] == pytest.approx(math.exp(1 / h))
    assert np.all((w > 1) & (w <= math.e))


def test_target_distribution(t1, t1_idx):
    p = target_distribution(t1, t1_idx, "a1")
    ax = t1_idx.axis
    assert p[ax["A"]] == pytest.approx(0.3775, abs=1e-4)
    assert p[ax["a1"]] == pytest.approx(0.6225, abs=1e-4)
    assert np.count_nonzero(p) == 2
    q = target_distribution(t1, t1_idx, "b2")
    assert q[ax["B"]] == pytest.approx(p[ax["A"]]) and q[ax["b2"]] == pytest.approx(p[ax["a1"]])
    with pytest.raises(NotALeaf):
        target_distribution(t1, t1_idx, "A")


def test_single_node_target():
    t = parse_hierarchy("A\t-\n")
    assert target_distribution(t, assign_bases(t), "A") == pytest.approx([1.0])


def test_predicted_distribution():
    assert predicted_distribution(np.zeros(7)) == pytest.approx(np.full(7, 1 / 7))
    x = np.array([0.6, 0, -0.8, 0, 0, 0, 0])
    p = predicted_distribution(x)
    assert p == pytest.approx([0.2014, 0.1105, 0.2460] + [0.1105] * 4, abs=1e-4)
    assert np.array_equal(p, predicted_distribution(-x))
    with pytest.raises(NonFiniteInput):
        predicted_distribution(np.array([np.nan, 0.0]))
    big = predicted_distribution(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(big)) and big.sum() == pytest.approx(1.0)


def test_kl_values(t1, t1_idx):
    p = target_distribution(t1, t1_idx, "a1")
    x = construct_ideal_vector(t1, t1_idx, "a1", [0.6, 0.8])
    assert kl_loss(p, p) == 0
    assert kl_loss(p, predicted_distribution(x)) == pytest.approx(0.815, abs=1e-3)
    # 1.28306 exactly; the hand value 1.282 is rounded from truncated weights
    assert kl_loss(p, np.full(7, 1 / 7)) == pytest.approx(1.282, abs=2e-3)


def test_reg_values(t1, t1_idx):
    x = construct_ideal_vector(t1, t1_idx, "a1", [0.6, 0.8])
    assert reg_loss(x, "a1", t1, t1_idx) == 0
    y = x.copy()
    y[t1_idx.axis["a2"]] = 0.6
    assert reg_loss(y, "a1", t1, t1_idx) == pytest.approx(0.8)
    # zero blocks inside the leaf's depth each cost 1
    assert reg_loss(np.zeros(7), "a1", t1, t1_idx) == pytest.approx(2.0)


def test_reg_zero_block_beyond_leaf_depth_is_free():
    t = parse_hierarchy("r\t-\nA\tr\nx\tr\na\tA\n")
    idx = assign_bases(t)
    v = np.zeros(t.n)
    v[idx.axis["x"]] = 1.0
    assert reg_loss(v, "x", t, idx) == 0


def test_total_loss(t1, t1_idx):
    x = construct_ideal_vector(t1, t1_idx, "a1", [0.6, 0.8])
    b = total_loss(x, "a1", 0.05, t1, t1_idx)
    assert b.kl == pytest.approx(0.815, abs=1e-3) and b.reg == 0 and b.total == b.kl
    assert total_loss(x, "a1", 0.0, t1, t1_idx).total == b.kl
    y = x.copy()
    y[t1_idx.axis["a2"]] = 0.6
    c = total_loss(y, "a1", 0.05, t1, t1_idx)
    assert c.total == pytest.approx(c.kl + 0.05 * 0.8)
    with pytest.raises(ValueError):
        total_loss(x, "a1", -1.0, t1, t1_idx)


def test_gradient_subgradient_at_zero(t1, t1_idx):
    x = np.array([0.3, 0.0, 0.5, -0.2, 0.1, 0.4, -0.6])
    g = loss_gradient(x, "a1", 0.0, t1, t1_idx)
    assert g[1] == 0


@pytest.mark.parametrize("alpha", [0.0, 0.05, 1.0])
def test_gradient_t1(t1, t1_idx, rng, alpha):
    for _ in range(20):
        x = away_from_zero(rng, t1.n)
        leaf = t1.leaves[int(rng.integers(t1.K))]
        g = loss_gradient(x, leaf, alpha, t1, t1_idx)
        fd = fd_gradient(lambda v: total_loss(v, leaf, alpha, t1, t1_idx).total, x)
        assert max_rel_err(g, fd) <= 1e-5


trees = st.builds(lambda s, d, r: random_tree(np.random.default_rng(s), d, max_leaves=20, ragged=r),
                  st.integers(0, 10_000), st.integers(1, 4), st.sampled_from([0.0, 0.3]))


@given(trees, st.integers(0, 2**31), st.sampled_from([0.0, 0.05, 0.5]))
def test_gradient_random_trees(t, seed, alpha):
    rng = np.random.default_rng(seed)
    idx = assign_bases(t)
    x = away_from_zero(rng, t.n)
    leaf = t.leaves[int(rng.integers(t.K))]
    g = loss_gradient(x, leaf, alpha, t, idx)
    fd = fd_gradient(lambda v: total_loss(v, leaf, alpha, t, idx).total, x)
    assert max_rel_err(g, fd) <= 1e-5


@given(trees, st.integers(0, 2**31))
def test_loss_invariants(t, seed):
    rng = np.random.default_rng(seed)
    idx = assign_bases(t)
    x = rng.standard_normal(t.n)
    for leaf in t.leaves[:5]:
        p = target_distribution(t, idx, leaf)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        on_path = p[[idx.axis[v] for v in t.path(leaf)]]
        assert np.all(np.diff(on_path) > 0)
        b = total_loss(x, leaf, 0.05, t, idx)
        assert b.kl >= 0 and b.reg >= 0
        assert b.total == total_loss(-x, leaf, 0.05, t, idx).total
        ideal = construct_ideal_vector(t, idx, leaf, rng.uniform(0.1, 1, t.level[leaf]))
        assert reg_loss(ideal, leaf, t, idx) == pytest.approx(0, abs=1e-12)
