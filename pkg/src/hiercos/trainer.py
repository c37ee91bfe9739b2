"""Desk-scale transformation module, synthetic features and SGD training.

The module maps backbone features ``z`` into the Hier-COS space through a
stack of ``Linear -> BatchNorm -> PReLU`` blocks followed by a frozen
orthonormal output layer.  Backpropagation is written out by hand in numpy;
:func:`module_gradient_check` compares it against central differences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, DivergenceDetected
from .hierarchy import HierarchyTree
from .objective import WEIGHT_ORDERS, level_targets, target_distribution, total_loss_batch
from .subspace import SubspaceIndex

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
PRELU_INIT = 0.25


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    alpha: float = 0.05
    seed: int = 0
    depth: int = 5
    hidden: int | None = None  # defaults to n
    weight_order: str = "increasing"
    normalize: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1 or self.depth < 1:
            raise ValueError(f"invalid training config: {self}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.weight_order not in WEIGHT_ORDERS:
            raise ValueError(f"weight_order must be one of {WEIGHT_ORDERS}")


@dataclass
class SyntheticSpec:
    tree: HierarchyTree
    d_in: int = 64
    samples_per_leaf: int = 50
    sigma_node: float | tuple[float, ...] = 1.0
    sigma_obs: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d_in < 1 or self.samples_per_leaf < 1 or self.sigma_obs < 0:
            raise ValueError("synthetic spec needs positive sizes and non-negative noise")

    def level_scale(self, l: int) -> float:
        if isinstance(self.sigma_node, (int, float)):
            return float(self.sigma_node)
        return float(self.sigma_node[min(l, len(self.sigma_node)) - 1])


@dataclass
class Dataset:
    z: np.ndarray
    leaves: list[str]
    means: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.leaves)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.z[rows], [self.leaves[i] for i in rows], self.means)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Gaussian clusters whose means are sums of per-node offsets along each root path."""
    tree = spec.tree
    rng = np.random.default_rng(spec.seed)
    offset = {v: rng.standard_normal(spec.d_in) * spec.level_scale(tree.level[v]) for v in tree.nodes}
    means = {leaf: np.sum([offset[u] for u in tree.path(leaf)], axis=0) for leaf in tree.leaves}
    zs, labels = [], []
    for leaf in tree.leaves:
        noise = rng.standard_normal((spec.samples_per_leaf, spec.d_in)) * spec.sigma_obs
        zs.append(means[leaf] + noise)
        labels.extend([leaf] * spec.samples_per_leaf)
    return Dataset(np.concatenate(zs), labels, means)


def split_per_leaf(data: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    """First ``n_first`` samples of each leaf versus the rest."""
    first, rest = [], []
    seen: dict[str, int] = {}
    for i, leaf in enumerate(data.leaves):
        k = seen.get(leaf, 0)
        (first if k < n_first else rest).append(i)
        seen[leaf] = k + 1
    return data.take(first), data.take(rest)


def nearest_mean_error(data: Dataset) -> float:
    """Error of the nearest-true-mean rule; the Bayes error for equal isotropic clusters."""
    names = list(data.means)
    mu = np.stack([data.means[v] for v in names])
    d = ((data.z[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
    pred = [names[i] for i in d.argmin(axis=1)]
    return float(np.mean([p != t for p, t in zip(pred, data.leaves)]))


# -- the module --------------------------------------------------------------


class TransformationModule:
    """``depth`` affine blocks with batch normalisation and PReLU, then a fixed frame."""

    def __init__(self, d_in: int, n: int, depth: int = 5, hidden: int | None = None, seed: int = 0,
                 frame: np.ndarray | None = None, normalize: bool = True):
        self.d_in = d_in
        self.n = n
        self.normalize = normalize
        hidden = n if hidden is None else hidden
        rng = np.random.default_rng(seed)
        self.layers = []
        widths = [d_in] + [hidden] * (depth - 1) + [n]
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(1.0 / fan_in)
            self.layers.append({
                "W": rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                "b": rng.uniform(-bound, bound, size=fan_out),
                "gamma": np.ones(fan_out),
                "beta": np.zeros(fan_out),
                "slope": np.full(fan_out, PRELU_INIT),
                "running_mean": np.zeros(fan_out),
                "running_var": np.ones(fan_out),
            })
        self.frame = np.eye(n) if frame is None else np.array(frame, dtype=float)
        self.frame.setflags(write=False)

    TRAINABLE = ("W", "b", "gamma", "beta", "slope")

    @classmethod
    def identity(cls, n: int) -> "TransformationModule":
        """Single block that returns its input unchanged."""
        m = cls(n, n, depth=1, normalize=False)
        layer = m.layers[0]
        layer["W"] = np.eye(n)
        layer["b"] = np.zeros(n)
        layer["slope"] = np.ones(n)
        return m

    def parameters(self):
        """``(name, array)`` pairs for every trainable tensor, in a fixed order."""
        for i, layer in enumerate(self.layers):
            for key in self.TRAINABLE:
                if key in ("gamma", "beta") and not self.normalize:
                    continue
                yield f"layers.{i}.{key}", layer[key]

    def forward(self, z, training: bool = False, update_stats: bool = True):
        """Map inputs to Hier-COS coordinates.

        Returns ``x`` for a single input vector or a ``B x n`` array for a
        batch.  In training mode batch statistics are used and (optionally)
        folded into the running averages.
        """
        x, _ = self._forward(z, training, update_stats)
        return x

    def _forward(self, z, training, update_stats):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        h = np.atleast_2d(z)
        if h.shape[1] != self.d_in:
            raise DimensionMismatch(f"expected inputs of dimension {self.d_in}, got {h.shape[1]}")
        cache = []
        for layer in self.layers:
            a = h @ layer["W"] + layer["b"]
            c = {"h_in": h}
            if self.normalize:
                if training:
                    mu = a.mean(axis=0)
                    var = a.var(axis=0)
                    if update_stats:
                        m = len(a)
                        unbiased = var * m / (m - 1) if m > 1 else var
                        layer["running_mean"] = (1 - BN_MOMENTUM) * layer["running_mean"] + BN_MOMENTUM * mu
                        layer["running_var"] = (1 - BN_MOMENTUM) * layer["running_var"] + BN_MOMENTUM * unbiased
                else:
                    mu, var = layer["running_mean"], layer["running_var"]
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (a - mu) * inv
                c.update(xhat=xhat, inv=inv, batch_stats=training)
                a = layer["gamma"] * xhat + layer["beta"]
            c["pre"] = a
            h = np.where(a > 0, a, layer["slope"] * a)
            cache.append(c)
        x = h @ self.frame
        return (x[0] if single else x), cache

    def backward(self, grad_x, cache):
        """Parameter gradients given ``dL/dx`` for a batch (``B x n``)."""
        g = np.atleast_2d(grad_x) @ self.frame.T
        grads = {}
        for i in reversed(range(len(self.layers))):
            layer, c = self.layers[i], cache[i]
            pre = c["pre"]
            grads[f"layers.{i}.slope"] = (g * np.minimum(pre, 0.0)).sum(axis=0)
            g = np.where(pre > 0, g, layer["slope"] * g)
            if self.normalize:
                xhat = c["xhat"]
                grads[f"layers.{i}.gamma"] = (g * xhat).sum(axis=0)
                grads[f"layers.{i}.beta"] = g.sum(axis=0)
                gx = g * layer["gamma"]
                if c["batch_stats"]:
                    m = len(gx)
                    g = c["inv"] / m * (m * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0))
                else:
                    g = gx * c["inv"]
            grads[f"layers.{i}.W"] = c["h_in"].T @ g
            grads[f"layers.{i}.b"] = g.sum(axis=0)
            g = g @ layer["W"].T
        return grads

    def copy(self) -> "TransformationModule":
        other = TransformationModule.__new__(TransformationModule)
        other.d_in, other.n, other.normalize = self.d_in, self.n, self.normalize
        other.layers = [{k: v.copy() for k, v in layer.items()} for layer in self.layers]
        other.frame = self.frame
        return other


# -- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    module: TransformationModule
    loss_curve: list[float]
    batch_loss_curve: list[float]


class _Objective:
    """Mean total loss over a batch, with cached per-leaf targets."""

    def __init__(self, tree, idx, alpha, order):
        self.tree, self.idx, self.alpha, self.order = tree, idx, alpha, order
        self.P = {v: target_distribution(tree, idx, v, order) for v in tree.leaves}
        self.T = {v: level_targets(tree, idx, [v])[0] for v in tree.leaves}

    def __call__(self, x, leaves):
        P = np.stack([self.P[v] for v in leaves])
        T = np.stack([self.T[v] for v in leaves])
        _, _, tot, g = total_loss_batch(x, leaves, self.alpha, self.tree, self.idx, P=P, targets=T)
        return float(tot.mean()), g / len(leaves)


def dataset_loss(module, data: Dataset, objective) -> float:
    """Mean loss over the whole dataset with whole-dataset normalisation statistics."""
    with np.errstate(over="ignore", invalid="ignore"):
        x = module.forward(data.z, training=True, update_stats=False)
    if not np.all(np.isfinite(x)):
        return float("nan")
    return objective(x, data.leaves)[0]


def train(module: TransformationModule, data: Dataset, config: TrainConfig, tree: HierarchyTree,
          idx: SubspaceIndex) -> TrainResult:
    """Plain minibatch SGD on the total loss; fully determined by ``config.seed``.

    ``loss_curve[e]`` is the full-dataset loss after epoch ``e`` (a function
    of the parameters alone), ``batch_loss_curve[e]`` the mean minibatch loss
    seen during that epoch.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    module = module.copy()
    objective = _Objective(tree, idx, config.alpha, config.weight_order)
    rng = np.random.default_rng(config.seed)
    params = dict(module.parameters())
    curve, batch_curve = [], []
    N = len(data)
    for epoch in range(config.epochs):
        order = rng.permutation(N)
        total, count = 0.0, 0
        for start in range(0, N, config.batch_size):
            rows = order[start:start + config.batch_size]
            if module.normalize and len(rows) < 2:
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                x, cache = module._forward(data.z[rows], training=True, update_stats=True)
            if not np.all(np.isfinite(x)):
                raise DivergenceDetected(f"non-finite activations at epoch {epoch}")
            leaves = [data.leaves[i] for i in rows]
            loss, gx = objective(x, leaves)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            grads = module.backward(gx, cache)
            for name, p in params.items():
                p -= config.lr * grads[name]
            total += loss * len(rows)
            count += len(rows)
        full = dataset_loss(module, data, objective)
        if not np.isfinite(full):
            raise DivergenceDetected(f"non-finite loss after epoch {epoch}")
        curve.append(full)
        batch_curve.append(total / max(count, 1))
        log.debug("epoch %d loss %.6f", epoch, full)
    return TrainResult(module, curve, batch_curve)


def module_gradient_check(module: TransformationModule, z, leaf, alpha: float, step: float, tree: HierarchyTree,
                          idx: SubspaceIndex, n_params: int = 64, seed: int = 0, order: str = "increasing") -> float:
    """Max relative error between backprop and central differences.

    ``z`` may be one input (evaluated with running statistics) together with
    a single ``leaf``, or a ``B x d_in`` batch with a list of leaves
    (evaluated with batch statistics).  At least ``min(n_params, total)``
    scalar parameters, and never fewer than 50 when available, are probed.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    batch = z.ndim == 2
    leaves = list(leaf) if batch else [leaf]
    objective = _Objective(tree, idx, alpha, order)

    def loss_at():
        x = module.forward(z, training=batch, update_stats=False)
        return objective(np.atleast_2d(x), leaves)[0]

    x, cache = module._forward(z, training=batch, update_stats=False)
    _, gx = objective(np.atleast_2d(x), leaves)
    grads = module.backward(gx, cache)

    params = dict(module.parameters())
    flat = [(name, j) for name, p in params.items() for j in range(p.size)]
    rng = np.random.default_rng(seed)
    k = min(len(flat), max(n_params, 50))
    picks = rng.choice(len(flat), size=k, replace=False)
    worst = 0.0
    for i in sorted(picks):
        name, j = flat[i]
        p = params[name].reshape(-1)
        old = p[j]
        p[j] = old + step
        up = loss_at()
        p[j] = old - step
        down = loss_at()
        p[j] = old
        fd = (up - down) / (2 * step)
        an = grads[name].reshape(-1)[j]
        worst = max(worst, relative_error(an, fd))
    return worst


def smoothness_margin(module: TransformationModule, z) -> float:
    """Distance of ``z`` from the nearest kink of PReLU or of ``|x|``.

    A 2-D ``z`` is evaluated with batch statistics, a 1-D one in eval mode,
    matching :func:`module_gradient_check`.  Finite differences are only
    meaningful when this margin dwarfs the step.
    """
    z = np.asarray(z, dtype=float)
    x, cache = module._forward(z, training=z.ndim == 2, update_stats=False)
    pre = min(float(np.min(np.abs(c["pre"]))) for c in cache)
    return min(pre, float(np.min(np.abs(x))))


def relative_error(a, b, floor: float = 1e-6) -> float:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``, maximised.

    The floor keeps gradients that are exactly zero (a bias feeding batch
    normalisation) from turning finite-difference round-off into error.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, module: TransformationModule, idx: SubspaceIndex, config: TrainConfig | None = None):
    blob = {
        "format": "hiercos-checkpoint",
        "schema_version": CHECKPOINT_SCHEMA,
        "hyperparameters": {"bn_eps": BN_EPS, "bn_momentum": BN_MOMENTUM, "prelu_init": PRELU_INIT,
                            "init": "uniform(+-sqrt(1/fan_in))"},
        "config": asdict(config) if config is not None else None,
        "d_in": module.d_in,
        "n": module.n,
        "normalize": module.normalize,
        "axis": idx.axis,
        "frame": module.frame.tolist(),
        "layers": [{k: v.tolist() for k, v in layer.items()} for layer in module.layers],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(blob, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TransformationModule, dict]:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("format") != "hiercos-checkpoint" or blob.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_SCHEMA} hiercos checkpoint")
    frame = np.array(blob["frame"], dtype=float)
    if frame.shape != (blob["n"], blob["n"]) or not np.allclose(frame.T @ frame, np.eye(blob["n"]), atol=1e-10):
        raise ValueError(f"{path}: output frame is not orthonormal")
    m = TransformationModule.__new__(TransformationModule)
    m.d_in, m.n, m.normalize = blob["d_in"], blob["n"], blob["normalize"]
    m.layers = [{k: np.array(v, dtype=float) for k, v in layer.items()} for layer in blob["layers"]]
    m.frame = frame
    m.frame.setflags(write=False)
    return m, blob
