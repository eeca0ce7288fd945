"""Model assembly: init rules, composed forward, persistence, rollout."""

import dataclasses

import numpy as np
import pytest

from vitalslice import ops
from vitalslice.errors import ConfigError, DataFormatError, NumericError, ShapeError
from vitalslice.model import (
    MODEL_FORMAT_VERSION,
    Model,
    ModelConfig,
    attention_map,
    forward,
    forward_cached,
    model_init,
    predict_rollout,
)

SMALL = ModelConfig(
    channels=3,
    conv1_filters=4,
    conv1_kernel=3,
    conv2_filters=4,
    conv2_kernel=2,
    lstm_layers=2,
    hidden_units=5,
    attention_heads=2,
    attn_dim=3,
    window=12,
    seed=7,
)


def small_window(seed=0, config=SMALL):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(config.channels, config.window))


class TestModelConfig:
    def test_context_size(self):
        assert SMALL.context_size == 2 * 5

    def test_conv_output_lengths(self):
        assert SMALL.conv1_out_len == 12 - 3 + 1
        assert SMALL.conv2_out_len == SMALL.conv1_out_len - 2 + 1

    def test_rejects_nonpositive_extents(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, hidden_units=0)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, lam=-0.1)

    def test_rejects_window_shorter_than_kernels(self):
        # conv stack must leave at least two timesteps for normalization
        with pytest.raises(ShapeError):
            dataclasses.replace(SMALL, window=3)


class TestModelInit:
    def test_deterministic(self):
        a, b = model_init(SMALL), model_init(SMALL)
        for (name, pa), (_, pb) in zip(a.param_items(), b.param_items()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)

    def test_seed_changes_weights(self):
        a = model_init(SMALL)
        b = model_init(dataclasses.replace(SMALL, seed=8))
        assert not np.array_equal(a.conv1.weights, b.conv1.weights)

    def test_forget_gate_bias_is_one(self):
        m = model_init(SMALL)
        for layer in m.lstm:
            np.testing.assert_array_equal(layer.b_f, np.ones(SMALL.hidden_units))
            np.testing.assert_array_equal(layer.b_i, np.zeros(SMALL.hidden_units))

    def test_weight_bounds(self):
        m = model_init(SMALL)
        assert np.all(np.abs(m.conv1.weights) <= 1.0 / np.sqrt(3 * 3))
        assert np.all(np.abs(m.dense.weight) <= 1.0 / np.sqrt(SMALL.context_size))
        fan = SMALL.hidden_units + SMALL.conv2_filters
        assert np.all(np.abs(m.lstm[0].W_f) <= 1.0 / np.sqrt(fan))

    def test_batchnorm_starts_as_identity(self):
        m = model_init(SMALL)
        np.testing.assert_array_equal(m.bn.gamma, np.ones(4))
        np.testing.assert_array_equal(m.bn.beta, np.zeros(4))
        np.testing.assert_array_equal(m.bn.running_mean, np.zeros(4))
        np.testing.assert_array_equal(m.bn.running_var, np.ones(4))

    def test_layer_count_mismatch_rejected(self):
        m = model_init(SMALL)
        with pytest.raises(ShapeError):
            Model(SMALL, m.conv1, m.bn, m.conv2, m.lstm[:1], m.attention, m.dense)


class TestForward:
    def test_output_length(self):
        m = model_init(SMALL)
        y = forward(m, small_window())
        assert y.shape == (SMALL.channels,)

    def test_deterministic(self):
        m = model_init(SMALL)
        w = small_window(3)
        np.testing.assert_array_equal(forward(m, w), forward(m, w))

    def test_zero_parameters_yield_output_bias(self):
        m = model_init(SMALL)
        for _, arr in m.param_items():
            arr[:] = 0.0
        m.dense.bias[:] = [0.5, -2.0, 3.25]
        np.testing.assert_array_equal(forward(m, small_window()), [0.5, -2.0, 3.25])

    def test_matches_manual_op_composition(self):
        m = model_init(SMALL)
        w = small_window(5)
        z1, _ = ops.conv1d_forward(w, m.conv1)
        a1 = ops.relu(z1)
        bn_out, _ = ops.batchnorm_forward(a1.T, m.bn, train=False)
        z2, _ = ops.conv1d_forward(bn_out.T, m.conv2)
        hs, _ = ops.lstm_forward(z2.T, m.lstm)
        context, _, _ = ops.attention_forward(hs, m.attention)
        expected, _ = ops.dense_forward(context, m.dense)
        np.testing.assert_allclose(forward(m, w), expected, rtol=0.0, atol=1e-12)

    def test_shape_mismatch(self):
        m = model_init(SMALL)
        with pytest.raises(ShapeError):
            forward(m, np.zeros((SMALL.channels, SMALL.window + 1)))

    def test_train_mode_differs_from_inference(self):
        # inference normalizes with the untouched running stats, not the batch
        m = model_init(SMALL)
        w = small_window(9)
        y_train, _, _ = forward_cached(m, w, train=True)
        y_infer, _, _ = forward_cached(m, w, train=False)
        assert not np.allclose(y_train, y_infer)

    def test_update_running_moves_stats(self):
        m = model_init(SMALL)
        w = small_window(2)
        before = m.bn.running_mean.copy()
        forward_cached(m, w, train=True, update_running=False)
        np.testing.assert_array_equal(m.bn.running_mean, before)
        forward_cached(m, w, train=True, update_running=True)
        assert not np.array_equal(m.bn.running_mean, before)

    def test_non_finite_parameters_name_the_layer(self):
        m = model_init(SMALL)
        m.conv1.weights[0, 0, 0] = np.inf
        with pytest.raises(NumericError, match="convolution"):
            forward(m, small_window())


class TestAttentionMap:
    def test_shape_and_normalization(self):
        m = model_init(SMALL)
        alpha = attention_map(m, small_window())
        assert alpha.shape == (SMALL.attention_heads, SMALL.conv2_out_len)
        np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(alpha >= 0)


class TestPersistence:
    def test_round_trip_bitwise(self):
        m = model_init(SMALL)
        # give the running stats a non-default value so they are exercised too
        forward_cached(m, small_window(1), train=True, update_running=True)
        back = Model.from_json(m.to_json())
        for (name, a), (_, b) in zip(m.param_items(), back.param_items()):
            np.testing.assert_array_equal(a, b, err_msg=name)
        np.testing.assert_array_equal(m.bn.running_mean, back.bn.running_mean)
        np.testing.assert_array_equal(m.bn.running_var, back.bn.running_var)
        assert back.config == m.config

    def test_same_predictions_after_round_trip(self):
        m = model_init(SMALL)
        back = Model.from_json(m.to_json())
        w = small_window(4)
        np.testing.assert_array_equal(forward(m, w), forward(back, w))

    def test_rejects_invalid_json(self):
        with pytest.raises(DataFormatError, match="not valid JSON"):
            Model.from_json("{nope")

    def test_rejects_missing_version(self):
        with pytest.raises(DataFormatError, match="format_version"):
            Model.from_json("{}")

    def test_rejects_unknown_version(self):
        import json

        doc = json.loads(model_init(SMALL).to_json())
        doc["format_version"] = MODEL_FORMAT_VERSION + 1
        with pytest.raises(DataFormatError, match="version"):
            Model.from_json(json.dumps(doc))

    def test_rejects_missing_layer(self):
        import json

        doc = json.loads(model_init(SMALL).to_json())
        doc["layers"] = [l for l in doc["layers"] if l["name"] != "dense.bias"]
        with pytest.raises(DataFormatError, match="dense.bias"):
            Model.from_json(json.dumps(doc))


class TestParamAccess:
    def test_get_set_round_trip(self):
        m = model_init(SMALL)
        v = m.get_param("dense.bias")
        m.set_param("dense.bias", v + 1.0)
        np.testing.assert_array_equal(m.get_param("dense.bias"), v + 1.0)

    def test_set_param_rejects_wrong_shape(self):
        m = model_init(SMALL)
        with pytest.raises(ShapeError):
            m.set_param("dense.bias", np.zeros(SMALL.channels + 1))

    def test_unknown_name(self):
        m = model_init(SMALL)
        with pytest.raises(KeyError):
            m.get_param("nope.bias")

    def test_zero_gradients_cover_parameters(self):
        m = model_init(SMALL)
        grads = m.zero_gradients()
        names = {name for name, _ in m.param_items()}
        assert set(grads) == names
        for name, _ in m.param_items():
            assert grads[name].shape == m.get_param(name).shape
            assert not grads[name].any()

    def test_copy_is_independent(self):
        m = model_init(SMALL)
        c = m.copy()
        c.dense.bias[:] = 99.0
        assert not np.array_equal(m.dense.bias, c.dense.bias)
        c.bn.running_mean[:] = 5.0
        assert not np.array_equal(m.bn.running_mean, c.bn.running_mean)


class TestRollout:
    def test_shape(self):
        m = model_init(SMALL)
        out = predict_rollout(m, small_window(), horizon=4)
        assert out.shape == (4, SMALL.channels)

    def test_first_step_is_plain_forward(self):
        m = model_init(SMALL)
        w = small_window(6)
        np.testing.assert_array_equal(predict_rollout(m, w, 1)[0], forward(m, w))

    def test_second_step_uses_shifted_window(self):
        m = model_init(SMALL)
        w = small_window(6)
        y1 = forward(m, w)
        shifted = np.concatenate([w[:, 1:], y1[:, None]], axis=1)
        np.testing.assert_array_equal(predict_rollout(m, w, 2)[1], forward(m, shifted))

    def test_rejects_bad_horizon(self):
        m = model_init(SMALL)
        with pytest.raises(ConfigError):
            predict_rollout(m, small_window(), horizon=0)

    def test_rejects_bad_window(self):
        m = model_init(SMALL)
        with pytest.raises(ShapeError):
            predict_rollout(m, np.zeros((1, 2)), horizon=1)
