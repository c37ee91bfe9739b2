import numpy as np
import pytest
from hypothesis import given, strategies as st

from hiercos.errors import UnknownNode
from hiercos.hierarchy import random_tree
from hiercos.inference import (
    is_consistent_path,
    leaf_scores,
    node_scores,
    predict,
    predict_leaf,
    predict_levels,
    rank_leaves,
)
from hiercos.subspace import assign_bases, construct_ideal_vector, projection_norm


def test_leaf_scores_t1(t1, t1_idx):
    x = construct_ideal_vector(t1, t1_idx, "a1", [0.6, 0.8])
    assert leaf_scores(x, t1, t1_idx) == pytest.approx([1.0, 0.6, 0, 0, 0])
    assert np.array_equal(leaf_scores(np.zeros(7), t1, t1_idx), np.zeros(5))
    y = np.zeros(7)
    y[t1_idx.axis["B"]] = 2.5
    assert leaf_scores(y, t1, t1_idx) == pytest.approx([0, 0, 2.5, 2.5, 2.5])


def test_batch_scores_match_single(t1, t1_idx, rng):
    X = rng.standard_normal((6, 7))
    S = leaf_scores(X, t1, t1_idx)
    for i in range(6):
        assert np.array_equal(S[i], leaf_scores(X[i], t1, t1_idx))


def test_predict_leaf_tie_break(t1):
    L = t1.leaves
    assert predict_leaf([1.0, 0.6, 0, 0, 0], L) == "a1"
    assert predict_leaf([0.3] * 5, L) == "a1"
    assert predict_leaf([0, 0, 0.9, 0.9, 0.1], L) == "b1"
    assert rank_leaves([0, 0, 0.9, 0.9, 0.1], L) == ["b1", "b2", "b3", "a1", "a2"]


def test_predict_levels_t1(t1, t1_idx):
    x = construct_ideal_vector(t1, t1_idx, "a1", [0.6, 0.8])
    assert predict_levels(x, t1, t1_idx) == ["A", "a1"]
    assert predict_levels(x, t1, t1_idx, "leaf-path") == ["A", "a1"]
    with pytest.raises(ValueError):
        predict_levels(x, t1, t1_idx, "bogus")


def test_adversarial_vector(t1, t1_idx):
    x = np.zeros(7)
    x[t1_idx.axis["B"]] = 10
    x[t1_idx.axis["a1"]] = 1
    assert predict_levels(x, t1, t1_idx) == ["B", "b1"]
    p = predict(x, t1, t1_idx)
    assert p.ranked[0] == "b1" and is_consistent_path(t1, p.level_path)


def test_consistency_check(t1):
    assert is_consistent_path(t1, ["A", "a1"])
    assert not is_consistent_path(t1, ["B", "a1"])
    assert is_consistent_path(t1, ["A"])
    assert not is_consistent_path(t1, ["a1"])
    with pytest.raises(UnknownNode):
        is_consistent_path(t1, ["A", "zz"])
    with pytest.raises(ValueError):
        is_consistent_path(t1, [])


trees = st.builds(lambda s, d, r: random_tree(np.random.default_rng(s), d, max_leaves=30, ragged=r),
                  st.integers(0, 10_000), st.integers(1, 5), st.sampled_from([0.0, 0.3]))


@given(trees, st.integers(0, 2**31))
def test_ideal_vectors_give_consistent_paths(t, seed):
    rng = np.random.default_rng(seed)
    idx = assign_bases(t)
    for leaf in t.leaves:
        x = construct_ideal_vector(t, idx, leaf, rng.uniform(0.05, 1, t.level[leaf]))
        path = predict_levels(x, t, idx)
        assert path == t.path(leaf)
        assert predict_leaf(leaf_scores(x, t, idx), t.leaves) == leaf


@given(trees, st.integers(0, 2**31))
def test_leaf_path_mode_always_consistent(t, seed):
    idx = assign_bases(t)
    X = np.random.default_rng(seed).standard_normal((10, t.n))
    for x in X:
        assert is_consistent_path(t, predict_levels(x, t, idx, "leaf-path"))


@given(trees, st.integers(0, 2**31), st.floats(0.01, 100))
def test_monotone_norms_and_scale_invariance(t, seed, c):
    idx = assign_bases(t)
    x = np.random.default_rng(seed).standard_normal(t.n)
    N = node_scores(x, idx)
    for v in t.nodes:
        assert N[t.node_index[v]] == pytest.approx(projection_norm(x, v, idx), rel=1e-12)
        u = t.parent[v]
        if u != t.root:
            assert N[t.node_index[u]] >= N[t.node_index[v]] * (1 - 1e-12)
    s = leaf_scores(x, t, idx)
    assert rank_leaves(s, t.leaves) == rank_leaves(leaf_scores(c * x, t, idx), t.leaves) or np.any(
        np.isclose(np.diff(np.sort(s)), 0, atol=1e-12))
