"""Leaf scores, ranked predictions and per-level paths from Hier-COS vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownNode
from .hierarchy import HierarchyTree
from .subspace import SubspaceIndex

MODES = ("per-level", "leaf-path")


@dataclass
class Prediction:
    leaf_scores: np.ndarray
    ranked: list[str]
    level_path: list[str]


def leaf_scores(x: np.ndarray, tree: HierarchyTree, idx: SubspaceIndex) -> np.ndarray:
    """Projection norm of ``x`` onto every leaf subspace, in leaf order.

    Accepts a single vector or a ``B x n`` batch.
    """
    x = np.asarray(x, dtype=float)
    return np.sqrt((x * x) @ idx.leaf_masks.T.astype(float))


def node_scores(x: np.ndarray, idx: SubspaceIndex) -> np.ndarray:
    """Projection norms onto every node subspace, in ``tree.nodes`` order."""
    x = np.asarray(x, dtype=float)
    return np.sqrt((x * x) @ idx.node_masks.T.astype(float))


def rank_leaves(scores, leaves) -> list[str]:
    """Leaves by descending score; ties keep the smaller leaf index first."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return [leaves[i] for i in order]


def predict_leaf(scores, leaves) -> str:
    return leaves[int(np.argmax(scores))]  # argmax returns the first maximum


def predict_levels(x: np.ndarray, tree: HierarchyTree, idx: SubspaceIndex, mode: str = "per-level") -> list[str]:
    """Predicted node per level.

    ``per-level`` takes the best-scoring node independently at each level,
    stopping at the depth of the predicted leaf.  ``leaf-path`` reports the
    root path of the predicted leaf and is therefore always consistent.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    x = np.asarray(x, dtype=float)
    leaf = predict_leaf(leaf_scores(x, tree, idx), tree.leaves)
    if mode == "leaf-path":
        return tree.path(leaf)
    scores = node_scores(x, idx)
    path = []
    for l in range(1, tree.level[leaf] + 1):
        cands = tree.level_nodes(l)
        s = [scores[tree.node_index[v]] for v in cands]
        path.append(cands[int(np.argmax(s))])
    return path


def predict(x, tree, idx, mode="per-level") -> Prediction:
    s = leaf_scores(x, tree, idx)
    return Prediction(s, rank_leaves(s, tree.leaves), predict_levels(x, tree, idx, mode))


def is_consistent_path(tree: HierarchyTree, path) -> bool:
    """True when ``path`` starts at level 1 and follows parent-to-child edges."""
    path = list(path)
    if not path:
        raise ValueError("empty path")
    for v in path:
        if v not in tree or v == tree.root:
            raise UnknownNode(f"unknown node {v!r}")
    if tree.level[path[0]] != 1:
        return False
    return all(tree.parent[c] == p for p, c in zip(path[:-1], path[1:]))
