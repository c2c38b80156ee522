import dataclasses

import numpy as np
import pytest

from helpers import model_gradient_error
from yatt import lstm, model, pipeline
from yatt.model import ConfigError, ModelConfig
from yatt.numcore import ShapeError


def toy_cfg(kind="stacked", **kw):
    enc = lstm.EncoderConfig(input_dim=9, h1=6, h2=4, dropout_rate=0.0, T_x=30)
    return ModelConfig(kind=kind, encoder=enc, **kw)


def test_default_parameter_counts():
    stacked = ModelConfig(kind="stacked")
    attn = ModelConfig(kind="attention")
    assert model.count_params(stacked) == 106_509
    assert model.count_params(attn) - model.count_params(stacked) == 51
    assert model.build(attn, 0).n_params() == 106_560


def test_parameter_count_formula_by_hand():
    cfg = toy_cfg(static_mode="every_step")
    cfg.validate()
    by_hand = 4 * 6 * (6 + 9 + 1) + 4 * 4 * (4 + 6 + 1) + (4 + 1)
    assert model.count_params(cfg) == by_hand


@pytest.mark.parametrize("kind", model.KINDS)
@pytest.mark.parametrize("mode", ["both", "after_encoder", "every_step"])
def test_model_gradients(kind, mode):
    assert model_gradient_error(kind, seed=4, static_mode=mode) < 1e-6


def test_input_dims_follow_flags():
    cfg = ModelConfig(use_mg=False, use_cluster=False, static_mode="none")
    cfg.encoder.input_dim = 7
    cfg.validate()
    with pytest.raises(ConfigError):
        ModelConfig(use_mg=False, use_cluster=False, static_mode="none").validate()
    with pytest.raises(ConfigError):
        ModelConfig(static_mode="none").validate()
    with pytest.raises(ConfigError):
        ModelConfig(kind="transformer").validate()
    cfg = ModelConfig(static_mode="after_encoder")
    cfg.encoder.input_dim = 7
    assert cfg.validate().head_inputs() == 52


def test_config_dict_round_trip_and_unknown_keys():
    cfg = toy_cfg("attention")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"kind": "stacked", "colour": "red"})
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"encoder": {"h3": 1}})


def test_build_is_seeded():
    cfg = toy_cfg()
    a, b, c = model.build(cfg, 1), model.build(cfg, 1), model.build(cfg, 2)
    for k in a.tensors():
        np.testing.assert_array_equal(a.tensors()[k], b.tensors()[k])
    assert not np.array_equal(a.l1.W, c.l1.W)


def test_from_tensors_checks_shapes():
    cfg = toy_cfg()
    t = model.build(cfg, 0).tensors()
    t["head.W"] = np.zeros((1, 3))
    with pytest.raises(ShapeError):
        model.from_tensors(cfg, t)


def test_assemble_layouts(small_split):
    cfg = toy_cfg()
    seq, after = model.assemble(cfg, small_split.train)
    n = len(small_split.train)
    assert seq.shape == (n, 30, 9) and after.shape == (n, 2)
    np.testing.assert_array_equal(seq[:, 5, 7], small_split.train.mg)
    cfg = toy_cfg(use_weather=False)
    cfg.encoder.input_dim = 2
    seq, _ = model.assemble(cfg.validate(), small_split.train)
    assert seq.shape == (n, 30, 2)


def test_forward_shape_errors(small_split):
    cfg = toy_cfg()
    w = model.build(cfg, 0)
    seq, after = model.assemble(cfg, small_split.train)
    with pytest.raises(ShapeError):
        model.forward(w, cfg, seq[:, :, :8], after)
    with pytest.raises(ShapeError):
        model.forward(w, cfg, seq, after[:, :1])


def test_predict_requires_scaled_features(small_features, small_split):
    cfg = toy_cfg()
    w = model.build(cfg, 0)
    with pytest.raises(ValueError):
        model.predict(w, cfg, small_features, small_split.scaler)


@pytest.mark.parametrize("kind", model.KINDS)
def test_training_reduces_loss_and_is_deterministic(kind, small_split):
    cfg = toy_cfg(kind, epochs=6, learning_rate=0.01, batch_size=16)
    w1, h1 = model.train(cfg, small_split, seed=3)
    w2, h2 = model.train(cfg, small_split, seed=3)
    assert h1.train_loss[-1] < h1.train_loss[0]
    assert h1.train_loss == h2.train_loss and h1.val_rmse == h2.val_rmse
    assert h1.val_rmse[h1.best_epoch] == min(h1.val_rmse)
    p1 = model.predict(w1, cfg, small_split.test, small_split.scaler)
    p2 = model.predict(w2, cfg, small_split.test, small_split.scaler)
    np.testing.assert_array_equal(p1, p2)


def test_attention_maps_are_distributions(small_split):
    cfg = toy_cfg("attention")
    w = model.build(cfg, 0)
    maps = model.attention_maps(w, cfg, small_split.test)
    assert len(maps) == len(small_split.test)
    assert maps[0].record_id == small_split.test.record_ids[0]
    for m in maps:
        assert abs(m.weights.sum() - 1) < 1e-12
    with pytest.raises(ConfigError):
        model.attention_maps(model.build(toy_cfg(), 0), toy_cfg(), small_split.test)


def test_non_finite_loss_raises(small_split):
    cfg = toy_cfg(epochs=1)
    w = model.build(cfg, 0)
    w.head_b[:] = np.inf
    with pytest.raises(model.NumericError):
        model.train(cfg, small_split, initial=w)


def test_gradient_clipping_bounds_update(small_split):
    cfg = toy_cfg(epochs=2, max_grad_norm=1e-3)
    _, hist = model.train(cfg, small_split, seed=0)
    assert np.all(np.isfinite(hist.train_loss))


def test_empty_validation_returns_final_weights(small_split):
    ds = dataclasses.replace(small_split, val=small_split.val.subset([]))
    cfg = toy_cfg(epochs=2)
    _, hist = model.train(cfg, ds, seed=0)
    assert hist.val_rmse == [] and hist.best_epoch == 1
