"""Normalization, sliding-window segmentation, and chronological splitting.

The functional API operates on :class:`~vitalslice.series.VitalSeries` and
plain arrays; ``ZScoreNormalizer`` and ``SlidingWindows`` wrap it in the
scikit-learn estimator protocol so the steps compose into pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, InsufficientDataError
from .series import VitalSeries
from .validation import as_float_matrix, check_windows


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ConfigError("mean and std must be 1-D arrays of equal length")
        if np.any(std < 0):
            raise ConfigError("std must be >= 0")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]


def fit_normalizer(series: VitalSeries | np.ndarray) -> NormStats:
    """Per-channel mean and population std of the input; needs >= 2 samples."""
    data = series.data if isinstance(series, VitalSeries) else as_float_matrix(series)
    if data.shape[0] < 2:
        raise InsufficientDataError(
            f"normalizer needs at least 2 samples, got {data.shape[0]}"
        )
    return NormStats(mean=data.mean(axis=0), std=data.std(axis=0))


def _check_channel_match(stats: NormStats, d: int):
    if stats.n_channels != d:
        raise ConfigError(
            f"normalizer fitted on {stats.n_channels} channels, input has {d}"
        )


def normalize_array(data: np.ndarray, stats: NormStats) -> np.ndarray:
    """(x - mean) / std per channel; channels with std == 0 map to zero."""
    data = as_float_matrix(data)
    _check_channel_match(stats, data.shape[1])
    safe_std = np.where(stats.std > 0, stats.std, 1.0)
    out = (data - stats.mean) / safe_std
    out[:, stats.std == 0] = 0.0
    return out


def denormalize_array(data: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of :func:`normalize_array`: x * std + mean."""
    data = as_float_matrix(data)
    _check_channel_match(stats, data.shape[1])
    return data * stats.std + stats.mean


def apply_normalizer(series: VitalSeries, stats: NormStats) -> VitalSeries:
    return series.with_data(normalize_array(series.data, stats))


def invert_normalizer(series: VitalSeries, stats: NormStats) -> VitalSeries:
    return series.with_data(denormalize_array(series.data, stats))


class ZScoreNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel z-score standardization with zero-variance channels
    mapped to zero. Accepts (n_samples, n_channels) arrays."""

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        self.stats_ = fit_normalizer(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        self._check_fitted()
        return normalize_array(X, self.stats_)

    def inverse_transform(self, X):
        self._check_fitted()
        return denormalize_array(X, self.stats_)

    def _check_fitted(self):
        if not hasattr(self, "stats_"):
            raise NotFittedError("ZScoreNormalizer is not fitted; call fit first")


def window_count(n_samples: int, window: int, stride: int) -> int:
    """Number of windows that still leave a one-step-ahead target sample."""
    if window < 1 or stride < 1:
        raise ConfigError(f"window and stride must be >= 1, got {window}, {stride}")
    if n_samples < window + 1:
        return 0
    return (n_samples - window - 1) // stride + 1


@dataclass(frozen=True)
class WindowSet:
    """Contiguous windows of shape (n, d, window) with one-step-ahead targets.

    The target of the window starting at sample ``i`` is the full vital-sign
    vector at sample ``i + window``.
    """

    windows: np.ndarray
    targets: np.ndarray
    window: int
    stride: int

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if w.ndim != 3:
            raise ConfigError("windows must have shape (n, channels, window)")
        if t.shape != (w.shape[0], w.shape[1]):
            raise ConfigError("targets must have shape (n, channels)")
        if w.shape[0] and w.shape[2] != self.window:
            raise ConfigError("window length mismatch")
        w.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "targets", t)

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    def take(self, indices) -> "WindowSet":
        idx = np.asarray(indices, dtype=np.intp)
        return WindowSet(self.windows[idx], self.targets[idx], self.window, self.stride)


def make_windows(series: VitalSeries | np.ndarray, window: int, stride: int) -> WindowSet:
    """Slice a series into overlapping windows with next-sample targets.

    Series shorter than ``window + 1`` yield an empty set so streaming
    callers can keep accumulating.
    """
    data = series.data if isinstance(series, VitalSeries) else as_float_matrix(series)
    n, d = data.shape
    count = window_count(n, window, stride)
    if count == 0:
        return WindowSet(
            windows=np.empty((0, d, window)),
            targets=np.empty((0, d)),
            window=window,
            stride=stride,
        )
    starts = np.arange(count) * stride
    windows = np.stack([data[s : s + window].T for s in starts])
    targets = data[starts + window]
    return WindowSet(windows=windows, targets=targets, window=window, stride=stride)


class SlidingWindows(BaseEstimator, TransformerMixin):
    """Stateless transformer turning a (T, d) series into (n, d, window)
    windows; ``transform_with_targets`` also returns the next-sample targets."""

    def __init__(self, window: int = 500, stride: int = 100):
        self.window = window
        self.stride = stride

    def fit(self, X, y=None):
        window_count(0, self.window, self.stride)  # validates the parameters
        return self

    def transform(self, X):
        return make_windows(as_float_matrix(X), self.window, self.stride).windows

    def transform_with_targets(self, X) -> tuple[np.ndarray, np.ndarray]:
        ws = make_windows(as_float_matrix(X), self.window, self.stride)
        return ws.windows, ws.targets


def split(
    windowset: WindowSet,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int | None = None,
    shuffle: bool = False,
) -> tuple[WindowSet, WindowSet, WindowSet]:
    """Partition windows into (train, validation, test).

    Chronological by default: the first ``floor(f1*n)`` windows train, the
    next ``floor(f2*n)`` validate, the remainder tests. ``shuffle=True``
    permutes indices with ``seed`` first (leaks across time; off by default).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigError("fractions must be three non-negative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(windowset)
    indices = np.arange(n)
    if shuffle:
        rng = np.random.default_rng(seed)
        indices = rng.permutation(n)
    n_train = int(np.floor(fractions[0] * n))
    n_val = int(np.floor(fractions[1] * n))
    return (
        windowset.take(indices[:n_train]),
        windowset.take(indices[n_train : n_train + n_val]),
        windowset.take(indices[n_train + n_val :]),
    )


def check_split_windows(n: int, fractions) -> tuple[int, int, int]:
    """Split sizes without materializing data (used for reporting)."""
    n_train = int(np.floor(fractions[0] * n))
    n_val = int(np.floor(fractions[1] * n))
    return n_train, n_val, n - n_train - n_val
