"""Hierarchy-aware orthogonal subspaces, their training objective and HOPS evaluation."""

from .errors import HierCosError
from .hierarchy import HierarchyTree, parse_hierarchy, read_hierarchy
from .inference import leaf_scores, predict, predict_levels
from .metrics import EvalSample, MetricReport, evaluate, hops, rank_template
from .objective import level_weights, loss_gradient, total_loss
from .subspace import SubspaceIndex, assign_bases
from .trainer import TrainConfig, TransformationModule, train

__all__ = [
    "EvalSample", "HierCosError", "HierarchyTree", "MetricReport", "SubspaceIndex", "TrainConfig",
    "TransformationModule", "assign_bases", "evaluate", "hops", "leaf_scores", "level_weights",
    "loss_gradient", "parse_hierarchy", "predict", "predict_levels", "rank_template", "read_hierarchy",
    "total_loss", "train",
]

__version__ = "0.1.0"
