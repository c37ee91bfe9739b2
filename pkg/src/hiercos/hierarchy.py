"""Label hierarchies: parsing, validation and LCA queries.

A hierarchy file is a TSV document with one ``node<TAB>parent`` line per
node.  The root is the single node declared with ``-`` as its parent::

    # T1
    r	-
    A	r
    B	r
    a1	A
    ...

The root stands for the universal class and is excluded from every count
(``n``, ``K_l``) and from ancestor sets.  A file whose only content is a
single childless ``x<TAB>-`` line describes a one-class tree; ``x`` then
sits at level 1 below an implicit root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    CycleDetected,
    DanglingParent,
    DuplicateNode,
    LevelOutOfRange,
    MissingRoot,
    MultipleRoots,
    NotALeaf,
    ParseError,
    UnknownNode,
)

ROOT_MARKER = "-"
IMPLICIT_ROOT = "<root>"


@dataclass(frozen=True, eq=False)
class HierarchyTree:
    """Immutable rooted tree over string node ids.

    ``nodes`` lists the non-root nodes in declaration order; every ordered
    query (``leaves``, ``level_nodes``) is a stable filter of that list.
    """

    root: str
    parent: dict[str, str]
    nodes: tuple[str, ...]
    implicit_root: bool = False
    children: dict[str, tuple[str, ...]] = field(init=False)
    level: dict[str, int] = field(init=False)

    def __post_init__(self):
        children: dict[str, list[str]] = {self.root: []}
        for v in self.nodes:
            children.setdefault(v, [])
        for v in self.nodes:
            children[self.parent[v]].append(v)
        level = {self.root: 0}
        for v in self.nodes:
            chain = []
            u = v
            while u not in level:
                chain.append(u)
                u = self.parent[u]
            base = level[u]
            for depth, w in enumerate(reversed(chain), start=1):
                level[w] = base + depth
        object.__setattr__(self, "children", {k: tuple(c) for k, c in children.items()})
        object.__setattr__(self, "level", level)

    # -- sizes ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def H(self) -> int:
        return max((self.level[v] for v in self.nodes), default=0)

    @cached_property
    def leaves(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if not self.children[v])

    @property
    def K(self) -> int:
        return len(self.leaves)

    @cached_property
    def level_sizes(self) -> tuple[int, ...]:
        """``(K_1, ..., K_H)``."""
        return tuple(len(self.level_nodes(l)) for l in range(1, self.H + 1))

    @cached_property
    def leaf_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.leaves)}

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.nodes)}

    @cached_property
    def equal_leaf_depths(self) -> bool:
        return len({self.level[v] for v in self.leaves}) <= 1

    def __contains__(self, v) -> bool:
        return v in self.level

    def __repr__(self):
        return f"HierarchyTree(n={self.n}, H={self.H}, K={self.K})"

    # -- queries -------------------------------------------------------------

    def _check(self, v):
        if v not in self.level:
            raise UnknownNode(f"unknown node {v!r}")

    def is_leaf(self, v) -> bool:
        self._check(v)
        return v != self.root and not self.children[v]

    def require_leaf(self, v):
        self._check(v)
        if not self.is_leaf(v):
            raise NotALeaf(f"{v!r} is not a leaf")

    def ancestors(self, v) -> list[str]:
        """Ancestors of ``v`` excluding the root, nearest first."""
        self._check(v)
        if v == self.root:
            raise UnknownNode("the root has no ancestor set")
        out = []
        u = self.parent[v]
        while u != self.root:
            out.append(u)
            u = self.parent[u]
        return out

    def path(self, v) -> list[str]:
        """Root path of ``v`` ordered by level: ``[level-1 node, ..., v]``."""
        return self.ancestors(v)[::-1] + [v]

    def descendants(self, v) -> set[str]:
        self._check(v)
        out = set()
        stack = list(self.children[v])
        while stack:
            u = stack.pop()
            out.add(u)
            stack.extend(self.children[u])
        return out

    def level_nodes(self, l: int) -> list[str]:
        if not 1 <= l <= self.H:
            raise LevelOutOfRange(f"level {l} outside 1..{self.H}")
        return [v for v in self.nodes if self.level[v] == l]

    @cached_property
    def height(self) -> dict[str, int]:
        """Edges from each node down to its deepest descendant leaf."""
        h = {}
        for v in sorted(self.level, key=self.level.__getitem__, reverse=True):
            h[v] = 1 + max((h[c] for c in self.children[v]), default=-1)
        return h

    def lca(self, a, b) -> str:
        self._check(a)
        self._check(b)
        seen = set()
        u = a
        while True:
            seen.add(u)
            if u == self.root:
                break
            u = self.parent[u]
        u = b
        while u not in seen:
            u = self.parent[u]
        return u

    def lca_distance(self, a, b) -> int:
        """Height of the subtree rooted at ``LCA(a, b)``; 0 for ``a == b``."""
        self.require_leaf(a)
        self.require_leaf(b)
        if a == b:
            return 0
        return self.height[self.lca(a, b)]

    # -- vectorised tables ---------------------------------------------------

    @cached_property
    def _leaf_paths(self) -> np.ndarray:
        # K x H matrix of node indices along each leaf's root path, -1 padded.
        table = np.full((self.K, max(self.H, 1)), -1, dtype=np.int64)
        for i, leaf in enumerate(self.leaves):
            for l, v in enumerate(self.path(leaf)):
                table[i, l] = self.node_index[v]
        return table

    @cached_property
    def _lca_depth(self) -> np.ndarray:
        paths = self._leaf_paths
        same = (paths[:, None, :] == paths[None, :, :]) & (paths[:, None, :] >= 0)
        return np.cumprod(same, axis=2).sum(axis=2)

    @cached_property
    def lca_matrix(self) -> np.ndarray:
        """K x K table of :meth:`lca_distance` in leaf order (read-only)."""
        heights = np.array([self.height[v] for v in self.nodes] + [self.height[self.root]])
        depth = self._lca_depth
        rows = np.arange(self.K)[:, None]
        idx = np.where(depth > 0, self._leaf_paths[rows, np.maximum(depth - 1, 0)], self.n)
        out = heights[idx]
        np.fill_diagonal(out, 0)
        out.setflags(write=False)
        return out

    @cached_property
    def edge_distance_matrix(self) -> np.ndarray:
        """K x K path lengths in edges between leaves."""
        d = np.array([self.level[v] for v in self.leaves])
        out = d[:, None] + d[None, :] - 2 * self._lca_depth
        out.setflags(write=False)
        return out

    @cached_property
    def diameter(self) -> int:
        """Longest leaf-to-leaf path, in edges."""
        return int(self.edge_distance_matrix.max()) if self.K else 0


# -- module-level API --------------------------------------------------------


def ancestors(tree: HierarchyTree, v) -> list[str]:
    return tree.ancestors(v)


def descendants(tree: HierarchyTree, v) -> set[str]:
    return tree.descendants(v)


def lca_distance(tree: HierarchyTree, a, b) -> int:
    return tree.lca_distance(a, b)


def level_nodes(tree: HierarchyTree, l: int) -> list[str]:
    return tree.level_nodes(l)


def from_parents(parent: dict[str, str], root: str) -> HierarchyTree:
    """Build a tree from a ``child -> parent`` map (insertion order kept)."""
    text = f"{root}\t{ROOT_MARKER}\n" + "".join(f"{c}\t{p}\n" for c, p in parent.items())
    return parse_hierarchy(text)


def parse_hierarchy(text: str, path=None) -> HierarchyTree:
    """Parse and validate a hierarchy TSV document.

    Raises
    ------
    ParseError
        Malformed line (column count, empty id).
    DuplicateNode, MultipleRoots, MissingRoot, CycleDetected, DanglingParent
        Structural problems; the message names the offending line.
    """
    entries = []  # (lineno, node, parent)
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError(f"expected 'node<TAB>parent', got {len(cols)} column(s)", lineno, path)
        node, par = cols[0].strip(), cols[1].strip()
        if not node or not par:
            raise ParseError("empty node or parent id", lineno, path)
        entries.append((lineno, node, par))

    declared: dict[str, int] = {}
    for lineno, node, _ in entries:
        if node == ROOT_MARKER:
            raise ParseError(f"{ROOT_MARKER!r} is reserved for the root marker", lineno, path)
        if node in declared:
            raise DuplicateNode(f"node {node!r} already declared on line {declared[node]}", lineno, path)
        declared[node] = lineno

    parent = {}
    roots = []
    for lineno, node, par in entries:
        if par == ROOT_MARKER:
            roots.append((lineno, node))
            continue
        if par not in declared:
            raise DanglingParent(f"parent {par!r} of {node!r} is never declared", lineno, path)
        if par == node:
            raise CycleDetected(f"node {node!r} is its own parent", lineno, path)
        parent[node] = par

    # Any node whose parent chain never reaches a '-' line sits on a cycle.
    state: dict[str, int] = {}
    for lineno, node, _ in entries:
        trail = []
        u = node
        while u in parent and u not in state:
            if u in trail:
                cyc = trail[trail.index(u):] + [u]
                raise CycleDetected("cycle " + " -> ".join(cyc), declared[u], path)
            trail.append(u)
            u = parent[u]
        for w in trail:
            state[w] = 1

    if not roots:
        raise MissingRoot(f"no root line ('<id>\\t{ROOT_MARKER}')", None, path)
    if len(roots) > 1:
        names = ", ".join(f"{r!r} (line {ln})" for ln, r in roots)
        raise MultipleRoots(f"multiple roots: {names}", roots[1][0], path)

    root = roots[0][1]
    order = tuple(node for _, node, _ in entries if node != root)
    if not order:
        # A single childless class: hang it below an implicit root.
        return HierarchyTree(root=IMPLICIT_ROOT, parent={root: IMPLICIT_ROOT}, nodes=(root,), implicit_root=True)
    return HierarchyTree(root=root, parent=parent, nodes=order)


def read_hierarchy(path) -> HierarchyTree:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(fh.read(), path=path)


def serialize_hierarchy(tree: HierarchyTree) -> str:
    lines = []
    if not tree.implicit_root:
        lines.append(f"{tree.root}\t{ROOT_MARKER}")
        lines.extend(f"{v}\t{tree.parent[v]}" for v in tree.nodes)
    else:
        lines.extend(f"{v}\t{ROOT_MARKER}" for v in tree.nodes)
    return "\n".join(lines) + "\n"


def random_tree(rng: np.random.Generator, depth: int, max_children: int = 3, max_leaves: int | None = None,
                ragged: float = 0.0, prefix: str = "v") -> HierarchyTree:
    """Random tree with every leaf at ``depth`` unless ``ragged`` > 0.

    ``ragged`` is the probability that an internal node below level 1 stops
    early and becomes a leaf, giving leaves at unequal depths.  Growth halts
    once ``max_leaves`` frontier nodes would be exceeded.
    """
    parent: dict[str, str] = {}
    counter = 0

    def fresh():
        nonlocal counter
        counter += 1
        return f"{prefix}{counter}"

    frontier = ["r"]
    for lvl in range(1, depth + 1):
        nxt = []
        for i, u in enumerate(frontier):
            if lvl > 2 and u != "r" and rng.random() < ragged:
                continue
            remaining = len(frontier) - i - 1
            k = int(rng.integers(1, max_children + 1))
            if max_leaves is not None:
                k = max(1, min(k, max_leaves - len(nxt) - remaining))
            for _ in range(k):
                c = fresh()
                parent[c] = u
                nxt.append(c)
        frontier = nxt
    return from_parents(parent, "r")
