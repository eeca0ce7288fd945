"""Symmetric int8 quantization accuracy and bookkeeping."""

import numpy as np
import pytest

from vitalslice.errors import NumericError
from vitalslice.model import ModelConfig, forward, forward_cached, model_init
from vitalslice.quantize import quantize_int8

SMALL = ModelConfig(
    channels=2,
    conv1_filters=3,
    conv1_kernel=3,
    conv2_filters=3,
    conv2_kernel=2,
    lstm_layers=1,
    hidden_units=4,
    attention_heads=2,
    attn_dim=3,
    window=10,
    seed=1,
)


def test_extremal_mapping():
    model = model_init(SMALL)
    model.dense.bias[:] = [-1.0, 1.0]
    q = quantize_int8(model)
    values, scale = q.tensors["dense.bias"]
    assert scale == 1.0 / 127.0
    np.testing.assert_array_equal(values, [-127, 127])


def test_three_point_tensor():
    model = model_init(SMALL)
    model.conv1.bias[:] = [-1.0, 0.0, 1.0]
    q = quantize_int8(model)
    values, scale = q.tensors["conv1.bias"]
    assert scale == 1.0 / 127.0
    np.testing.assert_array_equal(values, [-127, 0, 127])


def test_all_zero_tensor_gets_unit_scale():
    model = model_init(SMALL)
    model.conv2.bias[:] = 0.0
    q = quantize_int8(model)
    values, scale = q.tensors["conv2.bias"]
    assert scale == 1.0
    assert not values.any()
    np.testing.assert_array_equal(q.dequantized().conv2.bias, np.zeros(3))


def test_int8_range_and_dtype():
    model = model_init(SMALL)
    q = quantize_int8(model)
    for name, (values, scale) in q.tensors.items():
        assert values.dtype == np.int8, name
        assert np.all(np.abs(values.astype(int)) <= 127), name
        assert scale > 0, name


def test_round_trip_error_bound():
    model = model_init(SMALL)
    q = quantize_int8(model)
    deq = q.dequantized()
    for name, arr in model.param_items():
        scale = q.tensors[name][1]
        err = np.max(np.abs(arr - deq.get_param(name)))
        assert err <= scale / 2.0 + 1e-12, name


def test_running_stats_carried_over_unquantized():
    model = model_init(SMALL)
    rng = np.random.default_rng(0)
    forward_cached(model, rng.normal(size=(2, 10)), train=True, update_running=True)
    q = quantize_int8(model)
    assert "bn.running_mean" not in q.tensors
    deq = q.dequantized()
    np.testing.assert_array_equal(deq.bn.running_mean, model.bn.running_mean)
    np.testing.assert_array_equal(deq.bn.running_var, model.bn.running_var)


def test_predict_matches_dequantized_forward():
    model = model_init(SMALL)
    q = quantize_int8(model)
    w = np.random.default_rng(3).normal(size=(2, 10))
    np.testing.assert_array_equal(q.predict(w), forward(q.dequantized(), w))


def test_prediction_drift_bounded_by_scales():
    # empirical bound from the build contract: mean |float - int8| prediction
    # gap over a set of windows stays within 5x the largest tensor scale
    model = model_init(SMALL)
    q = quantize_int8(model)
    rng = np.random.default_rng(11)
    gaps = []
    for _ in range(20):
        w = rng.normal(size=(2, 10))
        gaps.append(np.mean(np.abs(forward(model, w) - q.predict(w))))
    assert np.mean(gaps) <= 5.0 * q.max_scale()


def test_quantize_source_model_untouched():
    model = model_init(SMALL)
    before = {name: arr.copy() for name, arr in model.param_items()}
    quantize_int8(model)
    for name, arr in model.param_items():
        np.testing.assert_array_equal(arr, before[name], err_msg=name)


def test_non_finite_weights_rejected():
    model = model_init(SMALL)
    model.dense.weight[0, 0] = np.inf
    with pytest.raises(NumericError, match="dense.weight"):
        quantize_int8(model)
