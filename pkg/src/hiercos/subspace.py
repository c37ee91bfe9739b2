"""Orthogonal-subspace geometry over a label hierarchy.

Every non-root node owns one axis of an orthonormal frame.  The subspace of
node ``v`` is spanned by the axes of its ancestors, itself and its
descendants.  Vectors are numpy arrays of frame coordinates, so projections
reduce to masking and distances to sums of squares over the masked-out axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AxisOutOfRange, NonPositiveMagnitude, NotALeaf, UnknownNode
from .hierarchy import HierarchyTree


@dataclass(frozen=True, eq=False)
class SubspaceIndex:
    """Per-node axis sets of a tree under a fixed axis assignment.

    ``axis`` maps node id to its axis; ``frame`` is an optional n x n
    orthonormal matrix whose column ``axis[v]`` is the world-space basis
    vector of ``v`` (``None`` means the identity frame).
    """

    tree: HierarchyTree
    axis: dict[str, int]
    frame: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.tree.n

    def _check(self, v):
        if v not in self.axis:
            raise UnknownNode(f"unknown or root node {v!r}")

    def self_axis(self, v) -> int:
        self._check(v)
        return self.axis[v]

    def ancestor_axes(self, v) -> frozenset[int]:
        self._check(v)
        return frozenset(self.axis[u] for u in self.tree.ancestors(v))

    def descendant_axes(self, v) -> frozenset[int]:
        self._check(v)
        return frozenset(self.axis[u] for u in self.tree.descendants(v))

    def axes(self, v) -> frozenset[int]:
        """The full basis set: ancestors, ``v`` itself and descendants."""
        self._check(v)
        return self._full_sets[v]

    def complement(self, v) -> frozenset[int]:
        return frozenset(range(self.n)) - self.axes(v)

    def level_axes(self, l: int) -> tuple[int, ...]:
        return tuple(self.axis[v] for v in self.tree.level_nodes(l))

    @cached_property
    def _full_sets(self) -> dict[str, frozenset[int]]:
        return {v: self.ancestor_axes(v) | {self.axis[v]} | self.descendant_axes(v) for v in self.tree.nodes}

    @cached_property
    def node_masks(self) -> np.ndarray:
        """Boolean ``n_nodes x n`` membership matrix, rows in ``tree.nodes`` order."""
        m = np.zeros((self.n, self.n), dtype=bool)
        for i, v in enumerate(self.tree.nodes):
            m[i, list(self._full_sets[v])] = True
        m.setflags(write=False)
        return m

    @cached_property
    def leaf_masks(self) -> np.ndarray:
        """``K x n`` membership matrix of leaf basis sets, rows in leaf order."""
        rows = [self.tree.node_index[v] for v in self.tree.leaves]
        m = self.node_masks[rows]
        m.setflags(write=False)
        return m

    @cached_property
    def level_blocks(self) -> list[np.ndarray]:
        """Axis indices of each level, ``level_blocks[l - 1]`` for level ``l``."""
        return [np.array(self.level_axes(l), dtype=np.int64) for l in range(1, self.tree.H + 1)]

    @cached_property
    def leaf_path_axes(self) -> list[np.ndarray]:
        """Axes along each leaf's root path, ordered by level."""
        return [np.array([self.axis[u] for u in self.tree.path(v)], dtype=np.int64) for v in self.tree.leaves]

    # -- world-space helpers (non-identity frames) ----------------------------

    def to_world(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.frame is None else x @ self.frame.T

    def to_frame(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y if self.frame is None else y @ self.frame

    def basis_matrix(self, v) -> np.ndarray:
        """World-space columns spanning ``V_v``."""
        cols = sorted(self.axes(v))
        q = np.eye(self.n) if self.frame is None else self.frame
        return q[:, cols]


def assign_bases(tree: HierarchyTree, rotation_seed: int | None = None) -> SubspaceIndex:
    """Assign axes level by level in file order; optionally draw a random frame."""
    order = [v for l in range(1, tree.H + 1) for v in tree.level_nodes(l)]
    axis = {v: i for i, v in enumerate(order)}
    frame = None
    if rotation_seed is not None:
        frame = random_orthonormal(tree.n, np.random.default_rng(rotation_seed))
    return SubspaceIndex(tree=tree, axis=axis, frame=frame)


def random_orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0))
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _axis_array(S, n) -> np.ndarray:
    idx = np.fromiter(S, dtype=np.int64) if not isinstance(S, np.ndarray) else S.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise AxisOutOfRange(f"axis set {sorted(set(idx.tolist()))} outside 0..{n - 1}")
    return idx


def project(x: np.ndarray, S) -> np.ndarray:
    """Zero every component of ``x`` outside the axis set ``S``."""
    x = np.asarray(x, dtype=float)
    idx = _axis_array(S, x.shape[-1])
    out = np.zeros_like(x)
    out[..., idx] = x[..., idx]
    return out


def subspace_distance_sq(x: np.ndarray, v, idx: SubspaceIndex) -> float:
    """Squared distance from ``x`` to the subspace of node ``v``."""
    x = np.asarray(x, dtype=float)
    comp = np.array(sorted(idx.complement(v)), dtype=np.int64)
    return float(np.sum(x[comp] ** 2))


def projection_norm(x: np.ndarray, v, idx: SubspaceIndex) -> float:
    x = np.asarray(x, dtype=float)
    inside = np.array(sorted(idx.axes(v)), dtype=np.int64)
    return float(np.sqrt(np.sum(x[inside] ** 2)))


def world_distance_sq(y: np.ndarray, v, idx: SubspaceIndex) -> float:
    """Squared distance computed with explicit projection matrices."""
    b = idx.basis_matrix(v)
    y = np.asarray(y, dtype=float)
    r = y - b @ (b.T @ y)
    return float(r @ r)


def world_projection_norm(y: np.ndarray, v, idx: SubspaceIndex) -> float:
    b = idx.basis_matrix(v)
    return float(np.linalg.norm(b.T @ np.asarray(y, dtype=float)))


def construct_ideal_vector(tree: HierarchyTree, idx: SubspaceIndex, leaf, magnitudes) -> np.ndarray:
    """Vector supported exactly on the root path of ``leaf``.

    ``magnitudes`` lists one strictly positive value per path node, from the
    level-1 ancestor down to the leaf.
    """
    tree._check(leaf)
    if not tree.is_leaf(leaf):
        raise NotALeaf(f"{leaf!r} is not a leaf")
    path = tree.path(leaf)
    mags = np.asarray(magnitudes, dtype=float)
    if mags.shape != (len(path),):
        raise ValueError(f"need {len(path)} magnitudes for {leaf!r}, got {mags.shape}")
    if not np.all(mags > 0):
        raise NonPositiveMagnitude(f"magnitudes must be strictly positive, got {mags.tolist()}")
    x = np.zeros(tree.n)
    for v, m in zip(path, mags):
        x[idx.axis[v]] = m
    return x


@dataclass
class HavsReport:
    trials: int
    triples_checked: int
    violations: int


def havs_violations(x: np.ndarray, leaf, idx: SubspaceIndex) -> tuple[int, int]:
    """Count ordering violations for one vector over all leaf pairs (j, k).

    A violation is a pair with ``D_T(i, j) < D_T(i, k)`` but
    ``|D_i - D_j| >= |D_i - D_k|``.  Returns ``(violations, checked)``.
    """
    tree = idx.tree
    i = tree.leaf_index[leaf]
    d_sub = np.sqrt([subspace_distance_sq(x, y, idx) for y in tree.leaves])
    gap = np.abs(d_sub[i] - d_sub)
    d_tree = tree.lca_matrix[i]
    must = d_tree[:, None] < d_tree[None, :]
    bad = must & ~(gap[:, None] < gap[None, :])
    return int(bad.sum()), int(must.sum())


def havs_check(tree: HierarchyTree, idx: SubspaceIndex, trials: int, seed: int) -> HavsReport:
    """Brute-force the distance-ordering condition on random ideal vectors."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = HavsReport(trials=trials, triples_checked=0, violations=0)
    for _ in range(trials):
        leaf = tree.leaves[int(rng.integers(tree.K))]
        mags = rng.uniform(0.05, 1.0, size=tree.level[leaf])
        x = construct_ideal_vector(tree, idx, leaf, mags)
        bad, checked = havs_violations(x, leaf, idx)
        report.violations += bad
        report.triples_checked += checked
    return report
