"""Central finite-difference gradients, the oracle for every backward pass."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import Model, batch_loss


def finite_diff_scalar(fn, theta: float, step: float = 1e-5) -> float:
    """Central difference of a scalar function at theta."""
    if not step > 0:
        raise ConfigError(f"step must be > 0, got {step}")
    return (fn(theta + step) - fn(theta - step)) / (2.0 * step)


def finite_diff_gradient(
    model: Model,
    windows: np.ndarray,
    targets: np.ndarray,
    lam: float,
    step: float = 1e-5,
) -> dict:
    """Numerical gradient of the batch loss per scalar parameter.

    Perturbs each entry of each parameter tensor in place by +/- step and
    evaluates the loss twice. Slow by design; use only on tiny models.
    """
    if not step > 0:
        raise ConfigError(f"step must be > 0, got {step}")
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    grads = {}
    for name, arr in model.param_items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            loss_plus = batch_loss(model, windows, targets, lam)
            flat[i] = orig - step
            loss_minus = batch_loss(model, windows, targets, lam)
            flat[i] = orig
            gflat[i] = (loss_plus - loss_minus) / (2.0 * step)
        grads[name] = g
    return grads


def gradient_rel_errors(analytic: dict, numeric: dict) -> dict:
    """Per-tensor relative L2 error between two gradient sets.

    The denominator is floored at 1e-6: central differences at step 1e-5
    carry roundoff noise around eps * |loss| / step ~ 1e-11, so for a tensor
    whose gradient norm sits below the floor a pure ratio would measure
    oracle noise instead of correctness. Under the floor the check becomes
    absolute agreement below 1e-10, which a wrong formula cannot satisfy.
    """
    if set(analytic) != set(numeric):
        raise KeyError("gradient sets cover different parameters")
    errors = {}
    for name, a in analytic.items():
        n = numeric[name]
        denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-6)
        errors[name] = float(np.linalg.norm(a - n)) / denom
    return errors


def max_rel_error(analytic: dict, numeric: dict) -> float:
    return max(gradient_rel_errors(analytic, numeric).values())
