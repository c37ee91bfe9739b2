"""Training objective: tree-path KL divergence plus level-sparsity regulariser.

The batched functions (``*_batch``) are the working implementation used by
the trainer; the single-sample functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, NonPositiveDepth
from .hierarchy import HierarchyTree
from .subspace import SubspaceIndex

# Below this norm a level block counts as empty.
ZERO_BLOCK = 1e-12

WEIGHT_ORDERS = ("increasing", "reversed", "uniform")


@dataclass(frozen=True)
class WeightProfile:
    h: int
    weights: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    kl: float
    reg: float
    total: float
    alpha: float


def level_weights(h: int, order: str = "increasing") -> WeightProfile:
    """Per-level target weights ``w_l = exp(1 / (h + 1 - l))`` for ``l = 1..h``.

    ``order="reversed"`` flips the sequence (coarse levels heaviest) and
    ``order="uniform"`` uses ``1 / h`` everywhere; both exist for ablations.
    """
    if h < 1:
        raise NonPositiveDepth(f"leaf depth must be >= 1, got {h}")
    l = np.arange(1, h + 1)
    w = np.exp(1.0 / (h + 1 - l))
    if order == "reversed":
        w = w[::-1].copy()
    elif order == "uniform":
        w = np.full(h, 1.0 / h)
    elif order != "increasing":
        raise ValueError(f"unknown weight order {order!r}; expected one of {WEIGHT_ORDERS}")
    return WeightProfile(h=h, weights=w)


def target_distribution(tree: HierarchyTree, idx: SubspaceIndex, leaf, order: str = "increasing") -> np.ndarray:
    """Normalised level weights placed on the root path of ``leaf``."""
    tree.require_leaf(leaf)
    path_axes = idx.leaf_path_axes[tree.leaf_index[leaf]]
    w = level_weights(len(path_axes), order).weights
    p = np.zeros(tree.n)
    p[path_axes] = w / w.sum()
    return p


def target_matrix(tree: HierarchyTree, idx: SubspaceIndex, order: str = "increasing") -> np.ndarray:
    """``K x n`` stack of target distributions in leaf order."""
    return np.stack([target_distribution(tree, idx, v, order) for v in tree.leaves]) if tree.K else np.zeros((0, tree.n))


def _log_softmax_abs(x: np.ndarray) -> np.ndarray:
    a = np.abs(x)
    a = a - a.max(axis=-1, keepdims=True)
    return a - np.log(np.exp(a).sum(axis=-1, keepdims=True))


def predicted_distribution(x: np.ndarray) -> np.ndarray:
    """Softmax over absolute components."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("x contains non-finite entries")
    return np.exp(_log_softmax_abs(x))


def kl_loss(p: np.ndarray, p_hat: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    s = p > 0
    return float(np.sum(p[s] * (np.log(p[s]) - np.log(p_hat[s]))))


# -- batched core ------------------------------------------------------------


def _kl_batch(x, P):
    logq = _log_softmax_abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0)
    return plogp.sum(axis=1) - (P * logq).sum(axis=1), np.exp(logq)


def _reg_batch(x, targets, idx):
    """Regulariser values and gradients w.r.t. x.

    ``targets[b, l]`` is the axis of the path node at level ``l + 1`` for
    sample ``b`` or ``-1`` when the sample's leaf is shallower than that
    level.
    """
    B = x.shape[0]
    val = np.zeros(B)
    grad = np.zeros_like(x)
    sgn = np.sign(x)
    for l, block in enumerate(idx.level_blocks):
        a = np.abs(x[:, block])
        norm = np.sqrt((a * a).sum(axis=1))
        live = norm >= ZERO_BLOCK
        safe = np.where(live, norm, 1.0)
        u = a / safe[:, None]
        tgt = targets[:, l]
        onpath = tgt >= 0
        delta = (block[None, :] == tgt[:, None]).astype(float)
        # L1 deviation from the one-hot for levels on the path, plain L1
        # mass for levels below the leaf.
        dev = np.where(onpath[:, None], delta - u, u)
        contrib = np.abs(dev).sum(axis=1)
        contrib = np.where(live, contrib, np.where(onpath, 1.0, 0.0))
        val += contrib
        g_u = np.where(onpath[:, None], -np.sign(delta - u), np.sign(u))
        g_a = (g_u - u * (u * g_u).sum(axis=1, keepdims=True)) / safe[:, None]
        g_a = np.where(live[:, None], g_a, 0.0)
        grad[:, block] += g_a * sgn[:, block]
    return val, grad


def level_targets(tree: HierarchyTree, idx: SubspaceIndex, leaves) -> np.ndarray:
    """``B x H`` matrix of on-path axes per level (``-1`` past the leaf)."""
    H = max(tree.H, 1)
    out = np.full((len(leaves), H), -1, dtype=np.int64)
    for b, v in enumerate(leaves):
        path = idx.leaf_path_axes[tree.leaf_index[v]]
        out[b, : len(path)] = path
    return out


def total_loss_batch(x, leaves, alpha, tree, idx, order="increasing", P=None, targets=None):
    """Per-sample ``(kl, reg, total)`` arrays and the gradient of ``total``.

    ``P`` and ``targets`` may be passed precomputed to skip the per-leaf
    lookups in tight loops.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("x contains non-finite entries")
    if P is None:
        P = np.stack([target_distribution(tree, idx, v, order) for v in leaves])
    if targets is None:
        targets = level_targets(tree, idx, leaves)
    kl, q = _kl_batch(x, P)
    g_kl = (q - P) * np.sign(x)
    if alpha:
        reg, g_reg = _reg_batch(x, targets, idx)
    else:
        reg, g_reg = np.zeros(len(x)), 0.0
    return kl, reg, kl + alpha * reg, g_kl + alpha * g_reg


# -- single-sample API -------------------------------------------------------


def reg_loss(x: np.ndarray, leaf, tree: HierarchyTree, idx: SubspaceIndex) -> float:
    tree.require_leaf(leaf)
    x = np.asarray(x, dtype=float)[None, :]
    val, _ = _reg_batch(x, level_targets(tree, idx, [leaf]), idx)
    return float(val[0])


def total_loss(x, leaf, alpha, tree, idx, order="increasing") -> LossBreakdown:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    tree.require_leaf(leaf)
    kl, *_ = total_loss_batch(np.asarray(x, dtype=float)[None, :], [leaf], 0.0, tree, idx, order)
    kl = float(kl[0])
    reg = reg_loss(x, leaf, tree, idx)
    return LossBreakdown(kl=kl, reg=reg, total=kl + alpha * reg, alpha=float(alpha))


def loss_gradient(x, leaf, alpha, tree, idx, order="increasing") -> np.ndarray:
    """Analytic gradient of the total loss w.r.t. ``x``.

    The derivative of ``|x_i|`` is taken as ``sign(x_i)`` with 0 at 0.
    """
    tree.require_leaf(leaf)
    *_, g = total_loss_batch(np.asarray(x, dtype=float)[None, :], [leaf], alpha, tree, idx, order)
    return g[0]


def cosine_alignment(x: np.ndarray, leaves, idx: SubspaceIndex) -> np.ndarray:
    """Cosine similarity between each row of ``x`` and its projection on its leaf subspace."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    masks = idx.leaf_masks[[idx.tree.leaf_index[v] for v in leaves]]
    inside = np.sqrt((np.where(masks, x, 0.0) ** 2).sum(axis=1))
    full = np.linalg.norm(x, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(full > 0, inside / np.where(full > 0, full, 1.0), 0.0)


__all__ = [
    "WEIGHT_ORDERS",
    "LossBreakdown",
    "WeightProfile",
    "cosine_alignment",
    "kl_loss",
    "level_targets",
    "level_weights",
    "loss_gradient",
    "predicted_distribution",
    "reg_loss",
    "target_distribution",
    "target_matrix",
    "total_loss",
    "total_loss_batch",
]
