"""Reading and writing prediction CSV files.

Two interchangeable formats carry leaf predictions:

dense
    ``sample_id,true_class,<leaf_1>,...,<leaf_K>`` header (leaf ids in
    hierarchy order) and one score per leaf on each row.
ranked
    ``sample_id,true_class,r_1,...,r_K`` header and the leaf ids of each
    row in descending preference.

An optional levels file ``sample_id,pred_l1,...,pred_lH`` supplies one
predicted node per level; trailing cells may be empty for shallow leaves.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import (
    MissingLevelPredictions,
    NotAPermutation,
    ParseError,
    RowLengthMismatch,
    UnknownClassInPredictions,
)
from .hierarchy import HierarchyTree
from .metrics import EvalSample


def fmt(v) -> str:
    """Six significant digits for floats; integers verbatim."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".6g")


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if row and not (len(row) == 1 and not row[0].strip()):
                yield lineno, [c.strip() for c in row]


def read_predictions(path, tree: HierarchyTree) -> list[EvalSample]:
    rows = _rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("empty predictions file", None, path) from None
    K = tree.K
    if len(header) < 2 or header[:2] != ["sample_id", "true_class"]:
        raise ParseError("header must start with 'sample_id,true_class'", lineno, path)
    if len(header) != K + 2:
        raise RowLengthMismatch(f"header has {len(header) - 2} class columns, hierarchy has {K} leaves", lineno, path)
    cols = header[2:]
    if cols == list(tree.leaves):
        dense = True
    elif cols == [f"r_{i}" for i in range(1, K + 1)]:
        dense = False
    else:
        bad = [c for c in cols if c not in tree.leaf_index]
        if bad:
            raise UnknownClassInPredictions(f"header names non-leaf class {bad[0]!r}", lineno, path)
        raise ParseError("dense header must list leaves in hierarchy order", lineno, path)

    samples = []
    seen = set()
    for lineno, row in rows:
        if len(row) != K + 2:
            raise RowLengthMismatch(f"expected {K + 2} fields, got {len(row)}", lineno, path)
        sid, truth = row[0], row[1]
        if sid in seen:
            raise ParseError(f"duplicate sample_id {sid!r}", lineno, path)
        seen.add(sid)
        if truth not in tree.leaf_index:
            raise UnknownClassInPredictions(f"true class {truth!r} is not a leaf", lineno, path)
        if dense:
            try:
                scores = np.array([float(c) for c in row[2:]])
            except ValueError as exc:
                raise ParseError(f"non-numeric score ({exc})", lineno, path) from None
            if not np.all(np.isfinite(scores)):
                raise ParseError("non-finite score", lineno, path)
            samples.append(EvalSample.from_scores(sid, truth, scores, tree.leaves))
        else:
            ranked = row[2:]
            bad = [c for c in ranked if c not in tree.leaf_index]
            if bad:
                raise UnknownClassInPredictions(f"{bad[0]!r} is not a leaf", lineno, path)
            if len(set(ranked)) != K:
                raise NotAPermutation("ranked row repeats a class", lineno, path)
            samples.append(EvalSample(sid, truth, ranked))
    return samples


def read_levels(path, tree: HierarchyTree, samples: list[EvalSample]) -> None:
    """Attach per-level paths from a levels file to ``samples`` in place."""
    rows = _rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("empty levels file", None, path) from None
    if not header or header[0] != "sample_id" or len(header) != tree.H + 1:
        raise ParseError(f"levels header must be sample_id,pred_l1..pred_l{tree.H}", lineno, path)
    paths = {}
    for lineno, row in rows:
        if len(row) != tree.H + 1:
            raise RowLengthMismatch(f"expected {tree.H + 1} fields, got {len(row)}", lineno, path)
        nodes = row[1:]
        while nodes and not nodes[-1]:
            nodes.pop()
        for v in nodes:
            if v not in tree or v == tree.root:
                raise UnknownClassInPredictions(f"{v!r} is not a node of the hierarchy", lineno, path)
        paths[row[0]] = nodes
    for s in samples:
        if s.sample_id not in paths or not paths[s.sample_id]:
            raise MissingLevelPredictions(f"no level predictions for sample {s.sample_id!r}", None, path)
        s.level_path = paths[s.sample_id]


def derive_levels(tree: HierarchyTree, samples: list[EvalSample], mode: str) -> None:
    """Fill missing per-level paths from each sample's leaf ranking.

    ``per-level`` picks, at every level, the node whose best descendant leaf
    is ranked highest; ``leaf-path`` takes the root path of the top leaf.
    Both coincide when only a leaf ranking is available.
    """
    for s in samples:
        if s.level_path:
            continue
        if mode == "leaf-path":
            s.level_path = tree.path(s.top1)
            continue
        best = {}
        for i, leaf in enumerate(s.ranked):
            for u in tree.path(leaf):
                best.setdefault(u, i)
        path = []
        for l in range(1, tree.level[s.top1] + 1):
            cands = tree.level_nodes(l)
            path.append(min(cands, key=lambda v: (best[v], tree.node_index[v])))
        s.level_path = path


def write_dense(path, tree: HierarchyTree, ids, truths, scores) -> None:
    # Full precision: rounding scores could create ties that reorder leaves.
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "true_class", *tree.leaves])
        for sid, t, row in zip(ids, truths, scores):
            w.writerow([sid, t, *(repr(float(v)) for v in row)])


def write_ranked(path, tree: HierarchyTree, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "true_class", *(f"r_{i}" for i in range(1, tree.K + 1))])
        for s in samples:
            w.writerow([s.sample_id, s.true_leaf, *s.ranked])


def write_levels(path, tree: HierarchyTree, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *(f"pred_l{l}" for l in range(1, tree.H + 1))])
        for s in samples:
            cells = list(s.level_path) + [""] * (tree.H - len(s.level_path))
            w.writerow([s.sample_id, *cells])
