import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from hiercos.errors import (
    CycleDetected,
    DanglingParent,
    DuplicateNode,
    LevelOutOfRange,
    MissingRoot,
    MultipleRoots,
    NotALeaf,
    ParseError,
    StructureError,
    UnknownNode,
)
from hiercos.hierarchy import (
    ancestors,
    descendants,
    lca_distance,
    level_nodes,
    parse_hierarchy,
    random_tree,
    read_hierarchy,
    serialize_hierarchy,
)


def test_t1_sizes(t1):
    assert (t1.n, t1.H, t1.K) == (7, 2, 5)
    assert t1.level_sizes == (2, 5)
    assert t1.leaves == ("a1", "a2", "b1", "b2", "b3")
    assert sum(t1.level_sizes) == t1.n


def test_single_class_line():
    t = parse_hierarchy("A\t-\n")
    assert (t.n, t.H, t.K) == (1, 1, 1)
    assert t.leaves == ("A",)


def test_comments_and_blank_lines_ignored():
    t = parse_hierarchy("# taxonomy\nr\t-\n\nA\tr\n# leaf\na1\tA\n")
    assert (t.n, t.H, t.K) == (2, 2, 1)


@pytest.mark.parametrize(
    "text, exc, line",
    [
        ("A\tB\nB\tA\n", CycleDetected, 1),
        ("r\t-\nA\tr\nA\tr\n", DuplicateNode, 3),
        ("r\t-\ns\t-\n", MultipleRoots, 2),
        ("r\t-\nA\tX\n", DanglingParent, 2),
        ("r\t-\nA\tA\n", CycleDetected, 2),
        ("", MissingRoot, None),
    ],
)
def test_structure_errors(text, exc, line):
    with pytest.raises(exc) as info:
        parse_hierarchy(text, path="h.tsv")
    assert isinstance(info.value, StructureError)
    assert "h.tsv" in str(info.value)
    if line is not None:
        assert f"line {line}" in str(info.value)


def test_cycle_message_names_members():
    with pytest.raises(CycleDetected, match="A -> B -> A"):
        parse_hierarchy("r\t-\nA\tB\nB\tA\n")


def test_malformed_line_is_parse_error():
    with pytest.raises(ParseError, match="line 2"):
        parse_hierarchy("r\t-\nA\n")


def test_ancestors(t1):
    assert ancestors(t1, "a1") == ["A"]
    assert ancestors(t1, "A") == []
    assert ancestors(t1, "b3") == ["B"]
    with pytest.raises(UnknownNode):
        ancestors(t1, "zz")


def test_descendants(t1):
    assert descendants(t1, "B") == {"b1", "b2", "b3"}
    assert descendants(t1, "a1") == set()
    assert descendants(t1, t1.root) == set(t1.nodes)


def test_lca_distance_t1(t1):
    assert lca_distance(t1, "a1", "a1") == 0
    assert lca_distance(t1, "a1", "a2") == 1
    assert lca_distance(t1, "a1", "b1") == 2
    with pytest.raises(NotALeaf):
        lca_distance(t1, "a1", "A")
    with pytest.raises(UnknownNode):
        lca_distance(t1, "a1", "nope")


def test_level_nodes(t1):
    assert level_nodes(t1, 1) == ["A", "B"]
    assert level_nodes(t1, 2) == ["a1", "a2", "b1", "b2", "b3"]
    with pytest.raises(LevelOutOfRange):
        level_nodes(t1, 3)
    with pytest.raises(LevelOutOfRange):
        level_nodes(t1, 0)


def test_ragged_lca_uses_subtree_height():
    t = parse_hierarchy("r\t-\nA\tr\nx\tr\na\tA\nb\tA\nb1\tb\n")
    # LCA(a, b1) = A whose subtree reaches depth 3, so height 2
    assert lca_distance(t, "a", "b1") == 2
    assert lca_distance(t, "x", "a") == 3
    assert not t.equal_leaf_depths


def test_roundtrip_file(fixtures):
    for name in ("t1.tsv", "worked_example.tsv"):
        t = read_hierarchy(fixtures / name)
        t2 = parse_hierarchy(serialize_hierarchy(t))
        assert t2.leaves == t.leaves
        assert t2.parent == t.parent


trees = st.builds(
    lambda seed, depth, ragged: random_tree(np.random.default_rng(seed), depth, max_children=3, max_leaves=40,
                                            ragged=ragged),
    st.integers(0, 10_000), st.integers(1, 5), st.sampled_from([0.0, 0.3]),
)


@given(trees)
def test_lca_matches_oracle(t):
    L = t.leaves
    M = t.lca_matrix
    o = oracles.for_tree(t)
    assert np.array_equal(M, M.T)
    for i, a in enumerate(L):
        for j, b in enumerate(L):
            d = o.lca_distance(a, b)
            assert M[i, j] == d
            assert (d == 0) == (a == b)
            assert d <= t.H


@given(trees)
def test_ancestor_length_and_roundtrip(t):
    for v in t.nodes:
        assert len(t.ancestors(v)) == t.level[v] - 1
    t2 = parse_hierarchy(serialize_hierarchy(t))
    assert t2.leaves == t.leaves and t2.parent == t.parent
