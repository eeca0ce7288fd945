"""Model assembly: configuration, init, composed forward/backward, rollout.

A model is two convolution stages with a nonlinearity and per-filter
normalization between them, a stacked LSTM over the time-major feature
sequence, multi-head additive attention pooling, and a dense affine head
that emits one next-sample prediction per channel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, DataFormatError, NumericError, ShapeError
from . import ops
from .ops import (
    AttentionParams,
    BatchNormParams,
    Conv1dParams,
    DenseParams,
    LstmParams,
)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults are desk scale; the larger
    published operating point (hidden 256, window 500) is reachable by
    overriding fields."""

    channels: int = 4
    conv1_filters: int = 8
    conv1_kernel: int = 5
    conv2_filters: int = 8
    conv2_kernel: int = 3
    lstm_layers: int = 2
    hidden_units: int = 32
    attention_heads: int = 4
    attn_dim: int = 16
    lam: float = 0.0
    window: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in (
            "channels",
            "conv1_filters",
            "conv1_kernel",
            "conv2_filters",
            "conv2_kernel",
            "lstm_layers",
            "hidden_units",
            "attention_heads",
            "attn_dim",
            "window",
        ):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        # both convolutions are valid (no padding); the time axis must survive
        t1 = self.window - self.conv1_kernel + 1
        t2 = t1 - self.conv2_kernel + 1
        if t1 < 2:
            raise ShapeError(
                f"window {self.window} leaves {t1} steps after the first "
                "convolution; need at least 2 for normalization"
            )
        if t2 < 1:
            raise ShapeError(
                f"window {self.window} too short for kernels "
                f"{self.conv1_kernel} and {self.conv2_kernel}"
            )

    @property
    def conv1_out_len(self) -> int:
        return self.window - self.conv1_kernel + 1

    @property
    def conv2_out_len(self) -> int:
        return self.conv1_out_len - self.conv2_kernel + 1

    @property
    def context_size(self) -> int:
        return self.attention_heads * self.hidden_units


class Model:
    """Parameter bundle with inter-layer shape congruence checked up front."""

    def __init__(
        self,
        config: ModelConfig,
        conv1: Conv1dParams,
        bn: BatchNormParams,
        conv2: Conv1dParams,
        lstm: list,
        attention: AttentionParams,
        dense: DenseParams,
    ):
        if conv1.in_channels != config.channels or conv1.filters != config.conv1_filters:
            raise ShapeError("first convolution disagrees with config")
        if conv1.kernel != config.conv1_kernel:
            raise ShapeError("first convolution kernel disagrees with config")
        if bn.n_features != config.conv1_filters:
            raise ShapeError("normalization width must match first-stage filters")
        if conv2.in_channels != config.conv1_filters or conv2.filters != config.conv2_filters:
            raise ShapeError("second convolution disagrees with config")
        if conv2.kernel != config.conv2_kernel:
            raise ShapeError("second convolution kernel disagrees with config")
        lstm = list(lstm)
        if len(lstm) != config.lstm_layers:
            raise ShapeError(f"expected {config.lstm_layers} recurrent layers")
        expect_in = config.conv2_filters
        for layer in lstm:
            if layer.hidden_size != config.hidden_units or layer.input_size != expect_in:
                raise ShapeError("recurrent layer shapes disagree with config")
            expect_in = config.hidden_units
        if (
            attention.heads != config.attention_heads
            or attention.attn_dim != config.attn_dim
            or attention.hidden_size != config.hidden_units
        ):
            raise ShapeError("attention shapes disagree with config")
        if dense.weight.shape != (config.channels, config.context_size):
            raise ShapeError("output layer shape disagrees with config")
        self.config = config
        self.conv1 = conv1
        self.bn = bn
        self.conv2 = conv2
        self.lstm = lstm
        self.attention = attention
        self.dense = dense

    # Canonical parameter ordering used by the optimizer, quantization,
    # serialization, and the finite-difference oracle.
    def param_items(self):
        items = [
            ("conv1.weights", self.conv1.weights),
            ("conv1.bias", self.conv1.bias),
            ("bn.gamma", self.bn.gamma),
            ("bn.beta", self.bn.beta),
            ("conv2.weights", self.conv2.weights),
            ("conv2.bias", self.conv2.bias),
        ]
        for i, layer in enumerate(self.lstm):
            for field in ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o"):
                items.append((f"lstm{i}.{field}", getattr(layer, field)))
        items.extend(
            [
                ("attn.V", self.attention.V),
                ("attn.w", self.attention.w),
                ("dense.weight", self.dense.weight),
                ("dense.bias", self.dense.bias),
            ]
        )
        return items

    def get_param(self, name: str) -> np.ndarray:
        owner, field = self._resolve(name)
        return getattr(owner, field)

    def set_param(self, name: str, value: np.ndarray) -> None:
        owner, field = self._resolve(name)
        current = getattr(owner, field)
        value = np.asarray(value, dtype=np.float64)
        if value.shape != current.shape:
            raise ShapeError(f"{name}: expected shape {current.shape}, got {value.shape}")
        setattr(owner, field, value)

    def _resolve(self, name: str):
        prefix, _, field = name.partition(".")
        if prefix == "conv1":
            return self.conv1, field
        if prefix == "conv2":
            return self.conv2, field
        if prefix == "bn":
            return self.bn, field
        if prefix == "attn":
            return self.attention, field
        if prefix == "dense":
            return self.dense, field
        if prefix.startswith("lstm"):
            return self.lstm[int(prefix[4:])], field
        raise KeyError(name)

    def zero_gradients(self) -> dict:
        return {name: np.zeros_like(arr) for name, arr in self.param_items()}

    def copy(self) -> "Model":
        return Model(
            self.config,
            Conv1dParams(self.conv1.weights.copy(), self.conv1.bias.copy()),
            BatchNormParams(
                self.bn.gamma.copy(),
                self.bn.beta.copy(),
                epsilon=self.bn.epsilon,
                momentum=self.bn.momentum,
                running_mean=self.bn.running_mean.copy(),
                running_var=self.bn.running_var.copy(),
            ),
            Conv1dParams(self.conv2.weights.copy(), self.conv2.bias.copy()),
            [
                LstmParams(
                    l.W_f.copy(), l.W_i.copy(), l.W_c.copy(), l.W_o.copy(),
                    l.b_f.copy(), l.b_i.copy(), l.b_c.copy(), l.b_o.copy(),
                )
                for l in self.lstm
            ],
            AttentionParams(self.attention.V.copy(), self.attention.w.copy()),
            DenseParams(self.dense.weight.copy(), self.dense.bias.copy()),
        )

    # -- persistence ------------------------------------------------------

    def to_json(self) -> str:
        layers = [
            {"name": name, "shape": list(arr.shape), "values": arr.reshape(-1).tolist()}
            for name, arr in self.param_items()
        ]
        layers.append(
            {
                "name": "bn.running_mean",
                "shape": list(self.bn.running_mean.shape),
                "values": self.bn.running_mean.tolist(),
            }
        )
        layers.append(
            {
                "name": "bn.running_var",
                "shape": list(self.bn.running_var.shape),
                "values": self.bn.running_var.tolist(),
            }
        )
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "config": asdict(self.config),
            "layers": layers,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"model document is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or "format_version" not in doc:
            raise DataFormatError("model document missing format_version")
        if doc["format_version"] != MODEL_FORMAT_VERSION:
            raise DataFormatError(
                f"unsupported model format version {doc['format_version']!r}"
            )
        try:
            config = ModelConfig(**doc["config"])
            entries = {
                layer["name"]: np.asarray(layer["values"], dtype=np.float64).reshape(
                    layer["shape"]
                )
                for layer in doc["layers"]
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed model document: {exc}") from exc
        model = model_init(config)
        for name, _ in model.param_items():
            if name not in entries:
                raise DataFormatError(f"model document missing layer {name!r}")
            model.set_param(name, entries[name])
        if "bn.running_mean" in entries:
            model.bn.running_mean = entries["bn.running_mean"]
        if "bn.running_var" in entries:
            model.bn.running_var = entries["bn.running_var"]
        return model


def model_init(config: ModelConfig) -> Model:
    """Seeded initialization: weights uniform in (-1/sqrt(fan_in),
    +1/sqrt(fan_in)), biases zero except the forget-gate bias at 1."""
    rng = np.random.default_rng(config.seed)

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    conv1 = Conv1dParams(
        uniform(
            (config.conv1_filters, config.channels, config.conv1_kernel),
            config.channels * config.conv1_kernel,
        ),
        np.zeros(config.conv1_filters),
    )
    bn = BatchNormParams(np.ones(config.conv1_filters), np.zeros(config.conv1_filters))
    conv2 = Conv1dParams(
        uniform(
            (config.conv2_filters, config.conv1_filters, config.conv2_kernel),
            config.conv1_filters * config.conv2_kernel,
        ),
        np.zeros(config.conv2_filters),
    )
    layers = []
    in_size = config.conv2_filters
    for _ in range(config.lstm_layers):
        h = config.hidden_units
        fan = h + in_size
        layers.append(
            LstmParams(
                uniform((h, fan), fan),
                uniform((h, fan), fan),
                uniform((h, fan), fan),
                uniform((h, fan), fan),
                np.ones(h),  # forget gate open at init so memory survives early training
                np.zeros(h),
                np.zeros(h),
                np.zeros(h),
            )
        )
        in_size = h
    attention = AttentionParams(
        uniform(
            (config.attention_heads, config.attn_dim, config.hidden_units),
            config.hidden_units,
        ),
        uniform((config.attention_heads, config.attn_dim), config.attn_dim),
    )
    dense = DenseParams(
        uniform((config.channels, config.context_size), config.context_size),
        np.zeros(config.channels),
    )
    return Model(config, conv1, bn, conv2, layers, attention, dense)


def _check_finite(arr: np.ndarray, layer: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {layer}")


def forward_cached(model: Model, window: np.ndarray, train: bool, update_running: bool = False):
    """Composed forward pass keeping every intermediate for backward."""
    window = np.asarray(window, dtype=np.float64)
    cfg = model.config
    if window.shape != (cfg.channels, cfg.window):
        raise ShapeError(
            f"window must be ({cfg.channels}, {cfg.window}), got {window.shape}"
        )
    z1, conv1_cache = ops.conv1d_forward(window, model.conv1)
    _check_finite(z1, "first convolution")
    a1 = ops.relu(z1)
    # normalize per filter over the time axis
    bn_out, bn_cache = ops.batchnorm_forward(
        a1.T, model.bn, train=train, update_running=update_running
    )
    _check_finite(bn_out, "normalization")
    z2, conv2_cache = ops.conv1d_forward(bn_out.T, model.conv2)
    _check_finite(z2, "second convolution")
    hs, lstm_cache = ops.lstm_forward(z2.T, model.lstm)
    _check_finite(hs, "recurrent stack")
    context, alpha, attn_cache = ops.attention_forward(hs, model.attention)
    _check_finite(context, "attention")
    y_hat, dense_cache = ops.dense_forward(context, model.dense)
    _check_finite(y_hat, "output layer")
    cache = (z1, conv1_cache, bn_cache, conv2_cache, lstm_cache, attn_cache, dense_cache)
    return y_hat, alpha, cache


def forward(model: Model, window: np.ndarray) -> np.ndarray:
    """Inference-mode prediction for one window (running-stat normalization)."""
    y_hat, _, _ = forward_cached(model, window, train=False)
    return y_hat


def attention_map(model: Model, window: np.ndarray) -> np.ndarray:
    """Attention weights (heads x steps) for one window, inference mode."""
    _, alpha, _ = forward_cached(model, window, train=False)
    return alpha


def _backward_window(model: Model, cache, dy: np.ndarray, grads: dict) -> None:
    z1, conv1_cache, bn_cache, conv2_cache, lstm_cache, attn_cache, dense_cache = cache
    dw, db, dcontext = ops.dense_backward(dense_cache, dy)
    grads["dense.weight"] += dw
    grads["dense.bias"] += db
    dV, dw_attn, dhs = ops.attention_backward(attn_cache, dcontext)
    grads["attn.V"] += dV
    grads["attn.w"] += dw_attn
    per_layer, dseq = ops.lstm_backward(lstm_cache, dhs)
    for i, layer_grads in enumerate(per_layer):
        for field, g in layer_grads.items():
            grads[f"lstm{i}.{field}"] += g
    dw2, db2, dbn_t = ops.conv1d_backward(conv2_cache, dseq.T)
    grads["conv2.weights"] += dw2
    grads["conv2.bias"] += db2
    dgamma, dbeta, da1_t = ops.batchnorm_backward(bn_cache, dbn_t.T)
    grads["bn.gamma"] += dgamma
    grads["bn.beta"] += dbeta
    dz1 = ops.relu_backward(z1, da1_t.T)
    dw1, db1, _ = ops.conv1d_backward(conv1_cache, dz1)
    grads["conv1.weights"] += dw1
    grads["conv1.bias"] += db1


def backward(
    model: Model,
    windows: np.ndarray,
    targets: np.ndarray,
    lam: float,
    update_running: bool = False,
):
    """Loss and gradients over a time-ordered batch of windows.

    The loss is the per-window prediction MSE averaged over the batch plus
    ``lam`` times the squared difference of consecutive windows'
    predictions. Gradients cover every parameter tensor.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[0] < 1:
        raise ShapeError("batch must be (n >= 1, channels, window)")
    if targets.shape != (windows.shape[0], model.config.channels):
        raise ShapeError("targets must be (n, channels)")
    n = windows.shape[0]
    preds = np.empty((n, model.config.channels))
    caches = []
    for k in range(n):
        preds[k], _, cache = forward_cached(
            model, windows[k], train=True, update_running=update_running
        )
        caches.append(cache)
    loss, dpreds = ops.batch_temporal_loss(preds, targets, lam)
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    grads = model.zero_gradients()
    for k in range(n):
        _backward_window(model, caches[k], dpreds[k], grads)
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name.split('.')[0]}")
    return loss, grads


def batch_loss(model: Model, windows: np.ndarray, targets: np.ndarray, lam: float) -> float:
    """Loss only (train-mode normalization), used by the gradient oracle."""
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = windows.shape[0]
    preds = np.empty((n, model.config.channels))
    for k in range(n):
        preds[k], _, _ = forward_cached(model, windows[k], train=True)
    loss, _ = ops.batch_temporal_loss(preds, targets, lam)
    return loss


def predict_rollout(model: Model, window: np.ndarray, horizon: int) -> np.ndarray:
    """Iterated one-step prediction: append each prediction as the newest
    sample, drop the oldest, and re-run. Returns (horizon, channels)."""
    if not isinstance(horizon, (int, np.integer)) or horizon < 1:
        raise ConfigError(f"horizon must be an integer >= 1, got {horizon!r}")
    window = np.asarray(window, dtype=np.float64).copy()
    cfg = model.config
    if window.shape != (cfg.channels, cfg.window):
        raise ShapeError(
            f"window must be ({cfg.channels}, {cfg.window}), got {window.shape}"
        )
    out = np.empty((horizon, cfg.channels))
    for step in range(horizon):
        y_hat = forward(model, window)
        out[step] = y_hat
        window = np.concatenate([window[:, 1:], y_hat[:, None]], axis=1)
    return out
