"""Hierarchical classification metrics.

The centrepiece is HOPS, a preference-order score.  For a true class the
other leaves are grouped by LCA distance; the groups, ranked by distance
with empty distances skipped, define the desired rank vector ``z``.  A
prediction's ranked leaf list is mapped through the same ranks into
``z_hat`` and compared with ``z`` by a weighted L1 distance, normalised by
the distance of the reversed order.

Every batch-level function takes the tree first and a sequence of
:class:`EvalSample`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import KOutOfRange, MissingLevelPredictions, NotAPermutation, UnequalLeafDepths
from .hierarchy import HierarchyTree
from .inference import is_consistent_path, rank_leaves

REPORT_SCHEMA = 1


@dataclass(frozen=True, eq=False)
class RankTemplate:
    true_class: str
    groups: tuple[tuple[str, ...], ...]
    rank_of: dict[str, int]
    z: np.ndarray
    eta: np.ndarray

    @property
    def K(self) -> int:
        return len(self.z)

    @property
    def z_rev(self) -> np.ndarray:
        return self.z[::-1]

    @property
    def s_max(self) -> float:
        return float(np.sum(self.eta * np.abs(self.z - self.z_rev)))

    def worst_at(self, k: int) -> np.ndarray:
        """First ``k`` desired ranks reversed, the rest in place."""
        _check_k(k, self.K)
        return np.concatenate([self.z[:k][::-1], self.z[k:]])

    def s_max_at(self, k: int) -> float:
        w = self.worst_at(k)
        return float(np.sum(self.eta[:k] * np.abs(self.z[:k] - w[:k])))


def _check_k(k, K):
    if not 1 <= k <= K:
        raise KOutOfRange(f"k={k} outside 1..{K}")


def decay_weights(z: np.ndarray) -> np.ndarray:
    """Exponential steps between rank groups, linear decay inside a group.

    The first slot of rank ``r`` gets ``2**-r``; slot ``t`` of an ``m``-slot
    group is interpolated toward (but never reaching) ``2**-(r+1)``.
    """
    eta = np.empty(len(z))
    j = 0
    while j < len(z):
        r = z[j]
        m = int(np.sum(z == r))
        t = np.arange(m)
        eta[j:j + m] = (1 - t / m) * 2.0 ** -r + (t / m) * 2.0 ** -(r + 1)
        j += m
    return eta


@lru_cache(maxsize=None)
def _template(tree: HierarchyTree, y_c: str) -> RankTemplate:
    i = tree.leaf_index[y_c]
    dist = tree.lca_matrix[i]
    groups = []
    for d in range(0, tree.H + 1):
        members = tuple(tree.leaves[j] for j in np.flatnonzero(dist == d))
        if members:
            groups.append(members)
    rank_of = {v: r for r, g in enumerate(groups) for v in g}
    z = np.concatenate([np.full(len(g), r) for r, g in enumerate(groups)]).astype(np.int64)
    return RankTemplate(y_c, tuple(groups), rank_of, z, decay_weights(z))


def rank_template(tree: HierarchyTree, y_c) -> RankTemplate:
    tree.require_leaf(y_c)
    return _template(tree, y_c)


def predicted_order(template: RankTemplate, ranked) -> np.ndarray:
    ranked = list(ranked)
    if len(ranked) != template.K or set(ranked) != set(template.rank_of):
        raise NotAPermutation("ranked predictions must list every leaf exactly once")
    return np.array([template.rank_of[v] for v in ranked], dtype=np.int64)


def hops_score(template: RankTemplate, z_hat) -> float:
    """Weighted L1 distance between desired and predicted orders."""
    return float(np.sum(template.eta * np.abs(template.z - np.asarray(z_hat))))


def hops(template: RankTemplate, z_hat) -> float:
    """``1 - s / s_max``, clamped at 0; 1 for single-leaf trees."""
    s_max = template.s_max
    s = hops_score(template, z_hat)
    if s_max == 0:
        return 1.0 if s == 0 else 0.0
    return max(0.0, 1.0 - s / s_max)


def hops_at_k(template: RankTemplate, z_hat, k: int) -> float:
    _check_k(k, template.K)
    z_hat = np.asarray(z_hat)
    s = float(np.sum(template.eta[:k] * np.abs(template.z[:k] - z_hat[:k])))
    s_max = template.s_max_at(k)
    if s_max == 0:
        return 1.0 if s == 0 else 0.0
    return max(0.0, 1.0 - s / s_max)


# -- samples and batches -----------------------------------------------------


@dataclass
class EvalSample:
    """One scored example.

    ``ranked`` always holds the full leaf ranking; ``scores`` keeps the
    dense leaf scores when they were given.  ``node_scores`` (in
    ``tree.nodes`` order) feeds MNR when available.
    """

    sample_id: str
    true_leaf: str
    ranked: list[str]
    scores: np.ndarray | None = None
    level_path: list[str] | None = None
    node_scores: np.ndarray | None = None

    @classmethod
    def from_scores(cls, sample_id, true_leaf, scores, leaves, **kw) -> "EvalSample":
        scores = np.asarray(scores, dtype=float)
        return cls(str(sample_id), true_leaf, rank_leaves(scores, leaves), scores=scores, **kw)

    @property
    def top1(self) -> str:
        return self.ranked[0]


def _lca_row(tree, s):
    return tree.lca_matrix[tree.leaf_index[s.true_leaf]]


def _ranked_idx(tree, s):
    return np.array([tree.leaf_index[v] for v in s.ranked])


def accuracy(tree, batch) -> float:
    return float(np.mean([s.top1 == s.true_leaf for s in batch]))


def mistake_severity(tree: HierarchyTree, batch) -> tuple[float, int]:
    """Mean LCA distance over misclassified samples, with the mistake count.

    Returns ``(0.0, 0)`` when nothing is misclassified.
    """
    d = [tree.lca_distance(s.true_leaf, s.top1) for s in batch if s.top1 != s.true_leaf]
    return (float(np.mean(d)) if d else 0.0), len(d)


def ahd_at_k(tree: HierarchyTree, batch, k: int) -> float:
    _check_k(k, tree.K)
    vals = [_lca_row(tree, s)[_ranked_idx(tree, s)[:k]].mean() for s in batch]
    return float(np.mean(vals))


def _closure(tree, v):
    return set(tree.path(v))


def hp_hr_at_k(tree: HierarchyTree, batch, k: int) -> tuple[float, float]:
    _check_k(k, tree.K)
    hp, hr = [], []
    for s in batch:
        truth = _closure(tree, s.true_leaf)
        ps, rs = [], []
        for v in s.ranked[:k]:
            pred = _closure(tree, v)
            common = len(pred & truth)
            ps.append(common / len(pred))
            rs.append(common / len(truth))
        hp.append(np.mean(ps))
        hr.append(np.mean(rs))
    return float(np.mean(hp)), float(np.mean(hr))


def _require_paths(batch):
    for s in batch:
        if not s.level_path:
            raise MissingLevelPredictions(f"sample {s.sample_id!r} has no per-level predictions")


def fpa(tree: HierarchyTree, batch) -> float:
    """Fraction of samples predicted correctly at every level."""
    if not tree.equal_leaf_depths:
        raise UnequalLeafDepths("full-path accuracy needs all leaves at the same depth")
    _require_paths(batch)
    for s in batch:
        if len(s.level_path) != tree.H:
            raise MissingLevelPredictions(
                f"sample {s.sample_id!r} predicts {len(s.level_path)} of {tree.H} levels")
    return float(np.mean([list(s.level_path) == tree.path(s.true_leaf) for s in batch]))


def tice(tree: HierarchyTree, batch) -> float:
    """Fraction of samples whose per-level prediction is not a tree path."""
    _require_paths(batch)
    return float(np.mean([not is_consistent_path(tree, s.level_path) for s in batch]))


def mrr(tree: HierarchyTree, batch) -> float:
    """Mean reciprocal of the 1-based position of the true leaf."""
    return float(np.mean([1.0 / (s.ranked.index(s.true_leaf) + 1) for s in batch]))


def _level_rank(tree, s, l):
    nodes = tree.level_nodes(l)
    truth = tree.path(s.true_leaf)[l - 1]
    if s.node_scores is not None:
        sc = np.array([s.node_scores[tree.node_index[v]] for v in nodes])
        order = np.argsort(-sc, kind="stable")
        return int(np.flatnonzero(np.array(nodes)[order] == truth)[0])
    # Rank nodes by their best-placed descendant leaf.
    best = {}
    for pos, leaf in enumerate(s.ranked):
        anc = tree.path(leaf)[l - 1]
        best.setdefault(anc, pos)
    return sum(1 for v in nodes if best[v] < best[truth])


def mnr(tree: HierarchyTree, batch) -> float:
    """Mean over samples of the level-averaged, size-normalised 0-based rank."""
    if not tree.equal_leaf_depths:
        raise UnequalLeafDepths("MNR needs all leaves at the same depth")
    sizes = tree.level_sizes
    vals = []
    for s in batch:
        vals.append(np.mean([_level_rank(tree, s, l) / sizes[l - 1] for l in range(1, tree.H + 1)]))
    return float(np.mean(vals))


def relevance_matrix(tree: HierarchyTree) -> np.ndarray:
    if tree.diameter <= 0:
        raise ValueError("NDCG needs at least two leaves")
    return 1.0 - tree.edge_distance_matrix / tree.diameter


def ndcg_at_k(tree: HierarchyTree, batch, k: int) -> float:
    _check_k(k, tree.K)
    rel = relevance_matrix(tree)
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    vals = []
    for s in batch:
        row = rel[tree.leaf_index[s.true_leaf]]
        dcg = float(np.sum(row[_ranked_idx(tree, s)[:k]] * disc))
        idcg = float(np.sum(np.sort(row)[::-1][:k] * disc))
        vals.append(dcg / idcg)
    return float(np.mean(vals))


def correct_order_fraction(tree: HierarchyTree, batch, k: int) -> float:
    """Fraction of samples whose first ``k`` predicted ranks equal the desired ones."""
    _check_k(k, tree.K)
    ok = []
    for s in batch:
        t = rank_template(tree, s.true_leaf)
        ok.append(bool(np.array_equal(predicted_order(t, s.ranked)[:k], t.z[:k])))
    return float(np.mean(ok))


def batch_hops(tree: HierarchyTree, batch, k: int | None = None) -> float:
    vals = []
    for s in batch:
        t = rank_template(tree, s.true_leaf)
        zh = predicted_order(t, s.ranked)
        vals.append(hops(t, zh) if k is None else hops_at_k(t, zh, k))
    return float(np.mean(vals))


# -- aggregate report --------------------------------------------------------


@dataclass
class MetricReport:
    samples: int
    accuracy: float
    ms: float
    mistakes: int
    hops: float
    mrr: float
    mnr: float | None = None
    fpa: float | None = None
    tice: float | None = None
    ahd: dict[int, float] = field(default_factory=dict)
    hp: dict[int, float] = field(default_factory=dict)
    hr: dict[int, float] = field(default_factory=dict)
    hops_at: dict[int, float] = field(default_factory=dict)
    ndcg: dict[int, float] = field(default_factory=dict)
    correct_order: dict[int, float] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, float | int]]:
        """Flat ``(metric, value)`` pairs in a fixed order; absent metrics omitted."""
        out = [("samples", self.samples), ("accuracy", self.accuracy), ("ms", self.ms),
               ("mistakes", self.mistakes), ("hops", self.hops), ("mrr", self.mrr)]
        for name in ("mnr", "fpa", "tice"):
            if getattr(self, name) is not None:
                out.append((name, getattr(self, name)))
        for name, table in (("ahd", self.ahd), ("hp", self.hp), ("hr", self.hr), ("hops", self.hops_at),
                            ("ndcg", self.ndcg), ("correct_order", self.correct_order)):
            out.extend((f"{name}@{k}", v) for k, v in sorted(table.items()))
        out.extend(sorted(self.extra.items()))
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "conventions": {
                "mrr_rank_base": 1,
                "mnr_rank_base": 0,
                "ms_when_no_mistakes": 0,
                "tie_break": "smallest leaf index",
            },
            "metrics": dict(self.rows()),
        }


def evaluate(tree: HierarchyTree, batch, ks=()) -> MetricReport:
    """Every metric over one batch.

    MNR and FPA are reported only for trees whose leaves share one depth,
    FPA and TICE only when every sample carries a per-level path.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    for k in ks:
        _check_k(k, tree.K)
    ms, mistakes = mistake_severity(tree, batch)
    report = MetricReport(
        samples=len(batch),
        accuracy=accuracy(tree, batch),
        ms=ms,
        mistakes=mistakes,
        hops=batch_hops(tree, batch),
        mrr=mrr(tree, batch),
    )
    if tree.equal_leaf_depths:
        report.mnr = mnr(tree, batch)
    if all(s.level_path for s in batch):
        report.tice = tice(tree, batch)
        if tree.equal_leaf_depths and all(len(s.level_path) == tree.H for s in batch):
            report.fpa = fpa(tree, batch)
    for k in ks:
        report.ahd[k] = ahd_at_k(tree, batch, k)
        report.hp[k], report.hr[k] = hp_hr_at_k(tree, batch, k)
        report.hops_at[k] = batch_hops(tree, batch, k)
        report.correct_order[k] = correct_order_fraction(tree, batch, k)
        if tree.diameter > 0:
            report.ndcg[k] = ndcg_at_k(tree, batch, k)
    return report


def lca_rows(tree: HierarchyTree, batch) -> np.ndarray:
    """``B x K`` LCA distance from each true leaf to each ranked prediction."""
    return np.stack([_lca_row(tree, s)[_ranked_idx(tree, s)] for s in batch])


def hops_trace(tree: HierarchyTree, sample: EvalSample) -> dict:
    """Intermediate HOPS quantities for one sample."""
    t = rank_template(tree, sample.true_leaf)
    zh = predicted_order(t, sample.ranked)
    return {
        "sample_id": sample.sample_id,
        "true_class": sample.true_leaf,
        "z": t.z.tolist(),
        "z_hat": zh.tolist(),
        "eta": t.eta.tolist(),
        "s": hops_score(t, zh),
        "s_max": t.s_max,
        "hops": hops(t, zh),
    }

