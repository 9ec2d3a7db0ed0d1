import numpy as np
import pytest

from explagree.io import read_checkpoint, write_checkpoint
from explagree.rng import make_rng
from explagree.shapes import BACKGROUND, ShapesDataset, gen_shapes_dataset
from explagree.vit import (ToyViT, ViTConfig, accuracy, forward, init_params,
                           param_layout, predict_proba, train)

GOLDEN_LOGITS = [-0.2955954047183278, -0.35407466978653374, -1.1763552900497594, -0.015295925583943604]


@pytest.fixture(scope="module")
def fresh_model():
    return ToyViT(init_params(ViTConfig(seed=3)))


@pytest.mark.parametrize("kwargs", [
    dict(image_size=30), dict(embed_dim=15), dict(n_heads=0), dict(seed=-1), dict(seed=2 ** 32),
])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        ViTConfig(**kwargs)


def test_default_token_count():
    cfg = ViTConfig()
    assert (cfg.n_patches, cfg.n_tokens, cfg.head_dim, cfg.mlp_dim) == (16, 17, 8, 64)


def test_param_layout_order_is_stable():
    names = [n for n, _, _ in param_layout(ViTConfig())]
    assert names[0] == "patch_w"
    assert len(names) == len(set(names))
    assert names == [n for n, _, _ in param_layout(ViTConfig(seed=9))]


def test_init_is_seeded_and_bounded():
    a, b = init_params(ViTConfig(seed=4)), init_params(ViTConfig(seed=4))
    assert a.equals(b)
    assert not a.equals(init_params(ViTConfig(seed=5)))
    for name, shape, fan_in in param_layout(ViTConfig()):
        if fan_in:
            assert np.all(np.abs(a.arrays[name]) <= 1 / np.sqrt(fan_in))


# --- dataset ----------------------------------------------------------------------


def test_small_dataset_is_one_of_each_class():
    ds = gen_shapes_dataset(4, 7)
    assert sorted(ds.labels.tolist()) == [0, 1, 2, 3]


def test_dataset_is_deterministic():
    a, b = gen_shapes_dataset(12, 3), gen_shapes_dataset(12, 3)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, gen_shapes_dataset(12, 4).images)


def test_dataset_balance_and_range():
    ds = gen_shapes_dataset(203, 5)
    assert np.bincount(ds.labels).tolist() in ([51, 51, 51, 50], [51, 51, 50, 51], [51, 50, 51, 51], [50, 51, 51, 51])
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert ds.images.shape == (203, 32, 32)


def test_dataset_mean_pixel_value():
    mean = gen_shapes_dataset(200, 1).images.mean()
    assert 0.1 <= mean <= 0.5
    assert mean == pytest.approx(0.20402249704129471, abs=1e-12)


def test_dataset_values_survive_float32():
    imgs = gen_shapes_dataset(8, 2).images
    assert np.array_equal(imgs.astype(np.float32).astype(np.float64), imgs)


def test_dataset_background_dominates():
    imgs = gen_shapes_dataset(40, 6).images
    assert np.median(imgs) == pytest.approx(BACKGROUND, abs=0.1)


def test_dataset_rejects_empty():
    with pytest.raises(ValueError):
        gen_shapes_dataset(0, 1)


# --- forward ----------------------------------------------------------------------


def test_golden_logits(fresh_model):
    image = make_rng(5, "golden-image").uniform(0, 1, (32, 32))
    logits = fresh_model.forward(image).logits
    assert np.max(np.abs(logits - GOLDEN_LOGITS)) <= 1e-12


def test_trace_invariants(fresh_model, rng):
    trace = fresh_model.forward(rng.uniform(0, 1, (32, 32)))
    assert trace.attention.shape == (2, 2, 17, 17)
    assert np.all(trace.attention >= 0)
    assert np.max(np.abs(trace.attention.sum(axis=-1) - 1)) <= 1e-9
    assert abs(trace.probabilities.sum() - 1) <= 1e-12
    assert trace.predicted == int(np.argmax(trace.probabilities))


def test_forward_is_bit_deterministic(fresh_model, rng):
    x = rng.uniform(0, 1, (32, 32))
    a, b = fresh_model.forward(x), fresh_model.forward(x.copy())
    assert np.array_equal(a.attention, b.attention) and np.array_equal(a.logits, b.logits)


def test_module_level_forward_matches_wrapper(fresh_model, rng):
    x = rng.uniform(0, 1, (32, 32))
    assert np.array_equal(forward(fresh_model.params, x).logits, fresh_model.forward(x).logits)


@pytest.mark.parametrize("shape", [(31, 32), (2, 2, 32, 32), (16, 16)])
def test_forward_shape_mismatch(fresh_model, shape):
    with pytest.raises(ValueError):
        fresh_model.forward(np.zeros(shape))


def test_forward_rejects_nan(fresh_model):
    x = np.zeros((32, 32))
    x[3, 3] = np.nan
    with pytest.raises(ValueError):
        fresh_model.forward(x)


def test_batch_equals_loop(fresh_model, rng):
    batch = rng.uniform(0, 1, (7, 32, 32))
    batch[4] = batch[1]
    rows = fresh_model.predict_proba(batch)
    assert np.array_equal(rows[4], rows[1])
    assert np.max(np.abs(rows.sum(axis=1) - 1)) <= 1e-12
    for img, row in zip(batch, rows):
        assert np.max(np.abs(fresh_model.predict_proba(img[None])[0] - row)) <= 1e-12
    assert np.array_equal(predict_proba(fresh_model.params, batch), rows)


def test_class_gradient_bad_class(fresh_model):
    with pytest.raises(ValueError):
        fresh_model.class_gradient(np.zeros((1, 32, 32)), 4)


def test_attention_gradients_shape(fresh_model, rng):
    trace, grads = fresh_model.attention_gradients(rng.uniform(0, 1, (32, 32)), 1)
    assert grads.shape == trace.attention.shape
    assert np.any(grads != 0)


# --- training ---------------------------------------------------------------------


def _tiny():
    return gen_shapes_dataset(8, 3)


@pytest.mark.parametrize("epochs, lr", [(0, 0.1), (3, 0.0)])
def test_train_identity_cases(epochs, lr):
    p = init_params(ViTConfig(seed=2))
    assert train(p, _tiny(), epochs=epochs, learning_rate=lr).equals(p)


def test_train_returns_new_params_and_is_reproducible():
    p = init_params(ViTConfig(seed=2))
    snapshot = p.copy()
    a = train(p, _tiny(), epochs=2, learning_rate=0.05, batch_size=4, momentum=0.9)
    b = train(p, _tiny(), epochs=2, learning_rate=0.05, batch_size=4, momentum=0.9)
    assert p.equals(snapshot)
    assert a.equals(b) and not a.equals(p)


def test_train_rejects_empty():
    empty = ShapesDataset(np.zeros((0, 32, 32)), np.zeros(0, dtype=np.int64))
    with pytest.raises(ValueError):
        train(init_params(ViTConfig()), empty, epochs=1, learning_rate=0.1)


@pytest.mark.slow
def test_reference_training_accuracy(trained_params):
    ds = gen_shapes_dataset(600, 1)
    acc = accuracy(trained_params, ds.images, ds.labels)
    # pinned 0.92 at these settings; 0.05 slack
    assert acc >= 0.90
    assert acc >= 0.92 - 0.05


@pytest.mark.slow
def test_trained_model_generalizes(trained_model):
    ds = gen_shapes_dataset(100, 2)
    assert accuracy(trained_model.params, ds.images, ds.labels) >= 0.8


def test_checkpoint_round_trip(tmp_path):
    p = init_params(ViTConfig(seed=8, embed_dim=8, n_heads=4))
    path = tmp_path / "m.xvit"
    write_checkpoint(path, p)
    raw = path.read_bytes()
    assert raw.startswith(b"XVIT1\n")
    q = read_checkpoint(path)
    assert q.config == p.config and q.equals(p)
    write_checkpoint(tmp_path / "again.xvit", q)
    assert (tmp_path / "again.xvit").read_bytes() == raw
