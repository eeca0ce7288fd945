"""Input validation helpers used by the estimators and the functional API."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a 2-D float64 array of shape (n_samples, n_channels)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (samples x channels), got ndim={arr.ndim}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or infinite values")
    return arr


def check_positive(value, name: str):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def check_non_negative(value, name: str):
    if value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value!r}")
    return value


def check_probability(value, name: str):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_windows(windows, name: str = "windows") -> np.ndarray:
    """Coerce to a 3-D float64 array of shape (n_windows, n_channels, width)."""
    arr = np.asarray(windows, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-D (windows x channels x width), got ndim={arr.ndim}")
    return arr
