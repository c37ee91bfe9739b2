import json

import numpy as np
import pytest

from hiercos.errors import DimensionMismatch, DivergenceDetected
from hiercos.trainer import (
    SyntheticSpec,
    TrainConfig,
    TransformationModule,
    generate_synthetic,
    load_checkpoint,
    module_gradient_check,
    nearest_mean_error,
    save_checkpoint,
    smoothness_margin,
    split_per_leaf,
    train,
)


def smooth_draw(module, rng, shape, margin=1e-3):
    while True:
        z = rng.standard_normal(shape)
        if smoothness_margin(module, z) > margin:
            return z


def test_synthetic_counts_and_determinism(t1):
    spec = SyntheticSpec(t1, d_in=16, samples_per_leaf=50, seed=3)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert len(a) == 250 and a.z.shape == (250, 16)
    assert np.array_equal(a.z, b.z) and a.leaves == b.leaves


def test_zero_noise_collapses_to_means(t1):
    d = generate_synthetic(SyntheticSpec(t1, d_in=4, samples_per_leaf=3, sigma_obs=0.0))
    for z, leaf in zip(d.z, d.leaves):
        assert np.array_equal(z, d.means[leaf])
    assert nearest_mean_error(d) == 0


def test_split_per_leaf(t1):
    d = generate_synthetic(SyntheticSpec(t1, d_in=4, samples_per_leaf=7))
    tr, te = split_per_leaf(d, 5)
    assert len(tr) == 25 and len(te) == 10
    assert all(tr.leaves.count(v) == 5 for v in t1.leaves)


def test_forward_shapes_and_batch_consistency(t1, rng):
    m = TransformationModule(8, t1.n, seed=1)
    Z = rng.standard_normal((5, 8))
    X = m.forward(Z)
    assert X.shape == (5, 7) and np.all(np.isfinite(X))
    for i in range(5):
        assert np.allclose(m.forward(Z[i]), X[i], rtol=1e-12, atol=1e-14)
    with pytest.raises(DimensionMismatch):
        m.forward(np.zeros(3))


def test_identity_module(rng):
    m = TransformationModule.identity(6)
    z = rng.standard_normal(6)
    assert np.array_equal(m.forward(z), z)


def test_gradient_check_default_module(t1, t1_idx, rng):
    m = TransformationModule(8, t1.n, seed=2)
    z = smooth_draw(m, rng, 8)
    assert module_gradient_check(m, z, "a1", 0.05, 1e-5, t1, t1_idx) <= 1e-4
    Z = smooth_draw(m, rng, (6, 8))
    leaves = [t1.leaves[i % 5] for i in range(6)]
    assert module_gradient_check(m, Z, leaves, 0.05, 1e-5, t1, t1_idx) <= 1e-4


def test_gradient_check_plain_single_layer(t1, t1_idx, rng):
    m = TransformationModule(8, t1.n, depth=1, normalize=False, seed=4)
    z = smooth_draw(m, rng, 8)
    assert module_gradient_check(m, z, "b2", 0.05, 1e-5, t1, t1_idx) <= 1e-6


def test_gradient_check_rejects_bad_step(t1, t1_idx):
    m = TransformationModule(8, t1.n)
    with pytest.raises(ValueError):
        module_gradient_check(m, np.ones(8), "a1", 0.05, 0.0, t1, t1_idx)


@pytest.fixture
def small_data(t1):
    return generate_synthetic(SyntheticSpec(t1, d_in=8, samples_per_leaf=20, sigma_obs=0.2, seed=5))


def test_training_reduces_loss(t1, t1_idx, small_data):
    m = TransformationModule(8, t1.n, seed=0)
    res = train(m, small_data, TrainConfig(lr=0.05, epochs=200, seed=0), t1, t1_idx)
    assert len(res.loss_curve) == 200
    assert np.all(np.isfinite(res.loss_curve))
    assert res.loss_curve[-1] < res.loss_curve[0]
    assert np.array_equal(res.module.frame, m.frame)


def test_zero_learning_rate_changes_nothing(t1, t1_idx, small_data):
    m = TransformationModule(8, t1.n, seed=0)
    res = train(m, small_data, TrainConfig(lr=0.0, epochs=5), t1, t1_idx)
    assert len(set(res.loss_curve)) == 1
    for (name, a), (_, b) in zip(m.parameters(), res.module.parameters()):
        assert np.array_equal(a, b), name


def test_training_is_deterministic(t1, t1_idx, small_data):
    m = TransformationModule(8, t1.n, seed=0)
    cfg = TrainConfig(lr=0.05, epochs=5, seed=9)
    a = train(m, small_data, cfg, t1, t1_idx)
    b = train(m, small_data, cfg, t1, t1_idx)
    assert a.loss_curve == b.loss_curve


def test_divergence_detected(t1, t1_idx, small_data):
    m = TransformationModule(8, t1.n, seed=0)
    with pytest.raises(DivergenceDetected):
        train(m, small_data, TrainConfig(lr=1e30, epochs=3), t1, t1_idx)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(alpha=-1)
    with pytest.raises(ValueError):
        TrainConfig(weight_order="sideways")


def test_checkpoint_roundtrip(t1, t1_idx, small_data, tmp_path, rng):
    m = train(TransformationModule(8, t1.n, seed=0), small_data, TrainConfig(epochs=2), t1, t1_idx).module
    path = tmp_path / "ck.json"
    save_checkpoint(path, m, t1_idx, TrainConfig(epochs=2))
    m2, blob = load_checkpoint(path)
    assert blob["axis"] == t1_idx.axis and blob["hyperparameters"]["bn_eps"] == 1e-5
    Z = rng.standard_normal((4, 8))
    assert np.array_equal(m.forward(Z), m2.forward(Z))
    blob["frame"][0][0] = 2.0
    path.write_text(json.dumps(blob))
    with pytest.raises(ValueError, match="orthonormal"):
        load_checkpoint(path)
