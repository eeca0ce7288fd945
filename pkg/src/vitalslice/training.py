"""Training loop: Adam with cosine-annealed learning rate, early stopping,
and seeded random hyperparameter search."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InsufficientDataError, NumericError, ShapeError
from .model import Model, ModelConfig, backward, forward, model_init
from .preprocessing import NormStats, denormalize_array


@dataclass(frozen=True)
class LrSchedule:
    """Cosine annealing from lr_max down to lr_min over `period` epochs."""

    lr_min: float = 1e-5
    lr_max: float = 1e-3
    period: int = 50

    def __post_init__(self):
        if not 0 <= self.lr_min <= self.lr_max:
            raise ConfigError(
                f"need 0 <= lr_min <= lr_max, got {self.lr_min}, {self.lr_max}"
            )
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")


def cosine_lr(t: int, schedule: LrSchedule) -> float:
    """Learning rate at epoch t; epochs past the period clamp to lr_min."""
    if t < 0:
        raise ConfigError(f"epoch must be >= 0, got {t}")
    if t == 0:
        # the formula lands within an ulp here; the contract is exact
        return schedule.lr_max
    if t > schedule.period:
        return schedule.lr_min
    span = schedule.lr_max - schedule.lr_min
    return schedule.lr_min + 0.5 * span * (1.0 + math.cos(math.pi * t / schedule.period))


class AdamState:
    """First/second moment tensors per parameter plus the step counter."""

    def __init__(self, model: Model, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("moment decay rates must lie in [0, 1)")
        if not eps > 0:
            raise ConfigError("eps must be > 0")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in model.param_items()}


def adam_step(model: Model, grads: dict, state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias-corrected moments."""
    if set(grads) != set(state.m):
        raise ShapeError("gradient set does not match the optimizer state")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, arr in model.param_items():
        g = grads[name]
        if g.shape != arr.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        arr -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_mae_pct: float


def _val_mae_pct(model: Model, windows, targets, denorm: NormStats | None) -> float:
    preds = np.stack([forward(model, w) for w in windows])
    truths = np.asarray(targets, dtype=np.float64)
    if denorm is not None:
        preds = denormalize_array(preds, denorm)
        truths = denormalize_array(truths, denorm)
    denom = float(np.mean(truths))
    if denom == 0.0:
        raise NumericError("validation targets average to zero; MAE% undefined")
    return 100.0 * float(np.mean(np.abs(truths - preds))) / denom


def train(
    model: Model,
    train_windows: np.ndarray,
    train_targets: np.ndarray,
    val_windows: np.ndarray,
    val_targets: np.ndarray,
    epochs: int,
    schedule: LrSchedule,
    batch: int = 32,
    patience: int = 5,
    denorm: NormStats | None = None,
):
    """Mini-batch training with early stopping on validation MAE%.

    Batches are consecutive chronological slices (no shuffling), which both
    keeps runs bit-reproducible and keeps the temporal-consistency penalty
    meaningful. Stops once validation MAE% has failed to improve for
    `patience` consecutive epochs; patience 0 therefore runs exactly one
    epoch. Returns (best-validation model snapshot, list of EpochRecord).
    Validation MAE% is computed in original units when `denorm` is given.
    """
    train_windows = np.asarray(train_windows, dtype=np.float64)
    val_windows = np.asarray(val_windows, dtype=np.float64)
    if train_windows.shape[0] < 1 or val_windows.shape[0] < 1:
        raise InsufficientDataError("training and validation sets must be non-empty")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if batch < 1:
        raise ConfigError(f"batch must be >= 1, got {batch}")
    if patience < 0:
        raise ConfigError(f"patience must be >= 0, got {patience}")
    lam = model.config.lam
    n = train_windows.shape[0]
    state = AdamState(model)
    history: list[EpochRecord] = []
    best_val = math.inf
    best_model = model.copy()
    stall = 0
    for epoch in range(epochs):
        lr = cosine_lr(epoch, schedule)
        losses = []
        for start in range(0, n, batch):
            bw = train_windows[start : start + batch]
            bt = train_targets[start : start + batch]
            loss, grads = backward(model, bw, bt, lam, update_running=True)
            adam_step(model, grads, state, lr)
            losses.append(loss)
        val = _val_mae_pct(model, val_windows, val_targets, denorm)
        history.append(EpochRecord(epoch, lr, float(np.mean(losses)), val))
        if val < best_val:
            best_val = val
            best_model = model.copy()
            stall = 0
        else:
            stall += 1
        if stall >= patience:
            break
    return best_model, history


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Candidate values for the searched hyperparameters.

    Integer dimensions are finite choice lists; lam and lr_max are sampled
    uniformly from closed intervals.
    """

    hidden_units: tuple = (16, 32)
    lstm_layers: tuple = (1, 2)
    attention_heads: tuple = (2, 4)
    lam: tuple = (0.0, 0.1)
    lr_max: tuple = (1e-4, 5e-3)

    def __post_init__(self):
        for name in ("hidden_units", "lstm_layers", "attention_heads"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values or any(int(v) < 1 for v in values):
                raise ConfigError(f"{name} must list integers >= 1")
        for name in ("lam", "lr_max"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ConfigError(f"{name} range must satisfy 0 <= lo <= hi")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    hidden_units: int
    lstm_layers: int
    attention_heads: int
    lam: float
    lr_max: float
    val_mae_pct: float
    epochs_run: int
    wall_time_s: float

    def __post_init__(self):
        if self.val_mae_pct < 0:
            raise ConfigError("validation MAE% cannot be negative")


def _sample_trial(space: SearchSpace, seed: int, trial: int):
    # one independent stream per trial, so evaluation order cannot matter
    rng = np.random.default_rng((seed, trial))
    return {
        "hidden_units": int(space.hidden_units[rng.integers(len(space.hidden_units))]),
        "lstm_layers": int(space.lstm_layers[rng.integers(len(space.lstm_layers))]),
        "attention_heads": int(
            space.attention_heads[rng.integers(len(space.attention_heads))]
        ),
        "lam": float(rng.uniform(space.lam[0], space.lam[1])),
        "lr_max": float(rng.uniform(space.lr_max[0], space.lr_max[1])),
    }


def hyperparameter_search(
    space: SearchSpace,
    base_config: ModelConfig,
    train_windows: np.ndarray,
    train_targets: np.ndarray,
    val_windows: np.ndarray,
    val_targets: np.ndarray,
    n_trials: int,
    seed: int,
    epochs: int = 10,
    batch: int = 32,
    patience: int = 3,
    lr_min: float = 1e-5,
    denorm: NormStats | None = None,
):
    """Seeded uniform random search over the space.

    Each trial trains a fresh model from `base_config` with the sampled
    dimensions substituted. Returns (best config, records); best is the
    lowest validation MAE% with ties broken by lower trial index.
    """
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    records = []
    configs = []
    for trial in range(n_trials):
        sampled = _sample_trial(space, seed, trial)
        cfg = replace(
            base_config,
            hidden_units=sampled["hidden_units"],
            lstm_layers=sampled["lstm_layers"],
            attention_heads=sampled["attention_heads"],
            lam=sampled["lam"],
        )
        schedule = LrSchedule(lr_min=min(lr_min, sampled["lr_max"]),
                              lr_max=sampled["lr_max"], period=max(epochs, 1))
        started = time.perf_counter()
        model = model_init(cfg)
        _, history = train(
            model,
            train_windows,
            train_targets,
            val_windows,
            val_targets,
            epochs=epochs,
            schedule=schedule,
            batch=batch,
            patience=patience,
            denorm=denorm,
        )
        elapsed = time.perf_counter() - started
        best_epoch_val = min(rec.val_mae_pct for rec in history)
        records.append(
            TrialRecord(
                trial=trial,
                hidden_units=sampled["hidden_units"],
                lstm_layers=sampled["lstm_layers"],
                attention_heads=sampled["attention_heads"],
                lam=sampled["lam"],
                lr_max=sampled["lr_max"],
                val_mae_pct=best_epoch_val,
                epochs_run=len(history),
                wall_time_s=elapsed,
            )
        )
        configs.append(cfg)
    best = min(records, key=lambda r: (r.val_mae_pct, r.trial))
    return configs[best.trial], records


def history_to_csv(history) -> str:
    lines = ["epoch,lr,train_loss,val_mae_pct"]
    for rec in history:
        lines.append(
            f"{rec.epoch},{rec.lr!r},{rec.train_loss!r},{rec.val_mae_pct!r}"
        )
    return "\n".join(lines) + "\n"


def trials_to_csv(records) -> str:
    """Trial table as CSV. Wall time stays in memory only: writing it would
    make otherwise-identical runs differ byte for byte."""
    lines = [
        "trial,hidden_units,lstm_layers,attention_heads,lam,lr_max,val_mae_pct,epochs_run"
    ]
    for r in records:
        lines.append(
            f"{r.trial},{r.hidden_units},{r.lstm_layers},{r.attention_heads},"
            f"{r.lam!r},{r.lr_max!r},{r.val_mae_pct!r},{r.epochs_run}"
        )
    return "\n".join(lines) + "\n"
