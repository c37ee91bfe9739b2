"""End-to-end desk-scale run: synthetic features, training, inference, metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hierarchy import HierarchyTree, from_parents
from .inference import leaf_scores, node_scores, predict_levels
from .metrics import EvalSample, MetricReport, evaluate
from .objective import cosine_alignment
from .subspace import SubspaceIndex, assign_bases
from .trainer import (
    Dataset,
    SyntheticSpec,
    TrainConfig,
    TrainResult,
    TransformationModule,
    generate_synthetic,
    nearest_mean_error,
    split_per_leaf,
    train,
)

# Pinned from seed sweeps: every threshold of the desk-scale check holds
# with margin on data seeds 0-4 at these settings.
DEMO_SIGMA_OBS = 1.75
DEMO_EPOCHS = 30
DEMO_LR = 0.05


def default_demo_tree(branching=(2, 2, 4)) -> HierarchyTree:
    """Balanced tree; the default has 3 levels and 16 leaves."""
    parent = {}
    frontier = ["root"]
    for l, b in enumerate(branching, start=1):
        nxt = []
        for u in frontier:
            for i in range(b):
                v = f"L{l}_{len(nxt)}"
                parent[v] = u
                nxt.append(v)
        frontier = nxt
    return from_parents(parent, "root")


@dataclass
class DemoConfig:
    d_in: int = 64
    train_per_leaf: int = 50
    test_per_leaf: int = 20
    sigma_node: float = 1.0
    sigma_obs: float = DEMO_SIGMA_OBS
    data_seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=DEMO_LR, epochs=DEMO_EPOCHS))
    mode: str = "per-level"
    ks: tuple[int, ...] = (1, 5, 20)


@dataclass
class SplitResult:
    samples: list[EvalSample]
    report: MetricReport
    x: np.ndarray
    scores: np.ndarray


@dataclass
class DemoResult:
    tree: HierarchyTree
    idx: SubspaceIndex
    fit: TrainResult
    train: SplitResult
    test: SplitResult
    bayes_error: float


def score_split(module, data: Dataset, tree, idx, mode, ks, prefix) -> SplitResult:
    x = module.forward(data.z)
    S = leaf_scores(x, tree, idx)
    N = node_scores(x, idx)
    samples = [
        EvalSample.from_scores(f"{prefix}{i:05d}", leaf, S[i], tree.leaves,
                               level_path=predict_levels(x[i], tree, idx, mode), node_scores=N[i])
        for i, leaf in enumerate(data.leaves)
    ]
    ks = tuple(k for k in ks if k <= tree.K)
    report = evaluate(tree, samples, ks)
    report.extra["cosine_alignment"] = float(np.mean(cosine_alignment(x, data.leaves, idx)))
    return SplitResult(samples, report, x, S)


def run_demo(cfg: DemoConfig, tree: HierarchyTree | None = None) -> DemoResult:
    tree = default_demo_tree() if tree is None else tree
    idx = assign_bases(tree)
    spec = SyntheticSpec(tree, d_in=cfg.d_in, samples_per_leaf=cfg.train_per_leaf + cfg.test_per_leaf,
                         sigma_node=cfg.sigma_node, sigma_obs=cfg.sigma_obs, seed=cfg.data_seed)
    data = generate_synthetic(spec)
    tr, te = split_per_leaf(data, cfg.train_per_leaf)
    t = cfg.train
    module = TransformationModule(cfg.d_in, tree.n, depth=t.depth, hidden=t.hidden, seed=t.seed, normalize=t.normalize)
    fit = train(module, tr, t, tree, idx)
    ks = cfg.ks
    res_tr = score_split(fit.module, tr, tree, idx, cfg.mode, ks, "train")
    res_te = score_split(fit.module, te, tree, idx, cfg.mode, ks, "test") if len(te) else None
    return DemoResult(tree, idx, fit, res_tr, res_te, nearest_mean_error(te if len(te) else tr))
