"""Estimator-style wrapper over the normalize/window/train/predict chain."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import InsufficientDataError, ShapeError
from .model import Model, ModelConfig, forward, model_init, predict_rollout
from .preprocessing import NormStats, denormalize_array, fit_normalizer, normalize_array
from .training import LrSchedule, train
from .validation import as_float_matrix


class VitalSignForecaster(BaseEstimator):
    """One-step-ahead multichannel forecaster with the estimator protocol.

    fit() takes a raw (T, channels) series in original units and handles
    normalization, windowing, the chronological train/validation split, and
    training internally. predict() accepts either another (T, channels)
    series (returning one prediction per complete window at stride 1) or a
    stack of (n, channels, window) raw-unit windows.
    """

    def __init__(
        self,
        window: int = 50,
        stride: int = 1,
        conv1_filters: int = 8,
        conv1_kernel: int = 5,
        conv2_filters: int = 8,
        conv2_kernel: int = 3,
        lstm_layers: int = 2,
        hidden_units: int = 32,
        attention_heads: int = 4,
        attn_dim: int = 16,
        lam: float = 0.0,
        epochs: int = 30,
        batch: int = 32,
        patience: int = 5,
        lr_min: float = 1e-5,
        lr_max: float = 1e-3,
        val_fraction: float = 0.2,
        seed: int = 0,
    ):
        self.window = window
        self.stride = stride
        self.conv1_filters = conv1_filters
        self.conv1_kernel = conv1_kernel
        self.conv2_filters = conv2_filters
        self.conv2_kernel = conv2_kernel
        self.lstm_layers = lstm_layers
        self.hidden_units = hidden_units
        self.attention_heads = attention_heads
        self.attn_dim = attn_dim
        self.lam = lam
        self.epochs = epochs
        self.batch = batch
        self.patience = patience
        self.lr_min = lr_min
        self.lr_max = lr_max
        self.val_fraction = val_fraction
        self.seed = seed

    def _config(self, channels: int) -> ModelConfig:
        return ModelConfig(
            channels=channels,
            conv1_filters=self.conv1_filters,
            conv1_kernel=self.conv1_kernel,
            conv2_filters=self.conv2_filters,
            conv2_kernel=self.conv2_kernel,
            lstm_layers=self.lstm_layers,
            hidden_units=self.hidden_units,
            attention_heads=self.attention_heads,
            attn_dim=self.attn_dim,
            lam=self.lam,
            window=self.window,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        X = as_float_matrix(X, "X")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(
                f"val_fraction must lie in (0, 1), got {self.val_fraction}"
            )
        stats = fit_normalizer(X)
        normalized = normalize_array(X, stats)
        windows, targets = _window_stack(normalized, self.window, self.stride)
        n = windows.shape[0]
        n_train = int(n * (1.0 - self.val_fraction))
        if n_train < 1 or n - n_train < 1:
            raise InsufficientDataError(
                f"{n} windows cannot cover a train/validation split; "
                "provide a longer series or a smaller window"
            )
        config = self._config(X.shape[1])
        model = model_init(config)
        schedule = LrSchedule(
            lr_min=min(self.lr_min, self.lr_max), lr_max=self.lr_max,
            period=max(self.epochs, 1),
        )
        best, history = train(
            model,
            windows[:n_train],
            targets[:n_train],
            windows[n_train:],
            targets[n_train:],
            epochs=self.epochs,
            schedule=schedule,
            batch=self.batch,
            patience=self.patience,
            denorm=stats,
        )
        self.model_ = best
        self.stats_ = stats
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this forecaster is not fitted yet; call fit() first"
            )

    def predict(self, X) -> np.ndarray:
        """Next-sample predictions in original units, one row per window."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != self.n_features_in_:
                raise ShapeError(
                    f"expected {self.n_features_in_} channels, got {X.shape[1]}"
                )
            normalized = normalize_array(X, self.stats_)
            windows = _window_stack_all(normalized, self.window)
        elif X.ndim == 3:
            if X.shape[1] != self.n_features_in_ or X.shape[2] != self.window:
                raise ShapeError(
                    f"windows must be (n, {self.n_features_in_}, {self.window}), "
                    f"got {X.shape}"
                )
            mean = self.stats_.mean[:, None]
            std = np.where(self.stats_.std == 0.0, 1.0, self.stats_.std)[:, None]
            windows = (X - mean) / std
        else:
            raise ShapeError(f"X must be 2-D or 3-D, got ndim={X.ndim}")
        preds = np.stack([forward(self.model_, w) for w in windows])
        return denormalize_array(preds, self.stats_)

    def predict_rollout(self, window: np.ndarray, horizon: int) -> np.ndarray:
        """Iterated multi-step forecast from one raw-unit (channels, window)
        block; returns (horizon, channels) in original units."""
        self._check_fitted()
        window = np.asarray(window, dtype=np.float64)
        mean = self.stats_.mean[:, None]
        std = np.where(self.stats_.std == 0.0, 1.0, self.stats_.std)[:, None]
        normalized = (window - mean) / std
        out = predict_rollout(self.model_, normalized, horizon)
        return denormalize_array(out, self.stats_)

    def score(self, X, y=None) -> float:
        """Mean per-channel R^2 of one-step-ahead predictions over a raw
        (T, channels) series."""
        from .metrics import r2

        self._check_fitted()
        X = as_float_matrix(X, "X")
        preds = self.predict(X)
        actual = X[self.window :]
        # the last window's prediction has no observed next sample yet
        preds = preds[: actual.shape[0]]
        scores = [r2(actual[:, c], preds[:, c]) for c in range(actual.shape[1])]
        return float(np.mean(scores))


def _window_stack(data: np.ndarray, window: int, stride: int):
    """Windows (n, channels, window) and next-sample targets (n, channels)
    from a (T, channels) array."""
    t_len = data.shape[0]
    if t_len < window + 1:
        raise InsufficientDataError(
            f"series length {t_len} cannot yield any window of {window} "
            "samples plus a target"
        )
    starts = np.arange(0, t_len - window, stride)
    windows = np.stack([data[s : s + window].T for s in starts])
    targets = data[starts + window]
    return windows, targets


def _window_stack_all(data: np.ndarray, window: int) -> np.ndarray:
    t_len = data.shape[0]
    if t_len < window:
        raise InsufficientDataError(
            f"series length {t_len} is shorter than the window {window}"
        )
    starts = np.arange(0, t_len - window + 1)
    return np.stack([data[s : s + window].T for s in starts])
