"""Layer primitives with hand-written reverse-mode gradients.

Everything is float64 and operates on plain numpy arrays. Each forward
function returns its output together with a cache tuple; the matching
backward consumes the cache and the upstream gradient. No autodiff
framework is involved, so every backward here is checkable against
central finite differences (see gradcheck.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (branch form, no overflow)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, shifted by the max for stability."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


# ---------------------------------------------------------------------------
# 1-D convolution (valid, no padding)
# ---------------------------------------------------------------------------


@dataclass
class Conv1dParams:
    """weights: (filters, in_channels, kernel); bias: (filters,)"""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3:
            raise ShapeError("conv weights must be (filters, in_channels, kernel)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("conv bias length must equal filter count")
        if self.kernel < 1 or self.filters < 1:
            raise ShapeError("conv needs kernel >= 1 and filters >= 1")

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]


def conv1d_forward(x: np.ndarray, params: Conv1dParams):
    """Valid cross-correlation along time.

    x: (in_channels, T) -> out: (filters, T - kernel + 1), with
    out[f, t] = bias[f] + sum_{c,k} w[f, c, k] * x[c, t + k].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"conv input must be (channels, time), got ndim={x.ndim}")
    if x.shape[0] != params.in_channels:
        raise ShapeError(
            f"conv expects {params.in_channels} input channels, got {x.shape[0]}"
        )
    if x.shape[1] < params.kernel:
        raise ShapeError(
            f"input length {x.shape[1]} shorter than kernel {params.kernel}"
        )
    # wins[c, t, k] = x[c, t + k]
    wins = sliding_window_view(x, params.kernel, axis=1)
    out = np.einsum("fck,ctk->ft", params.weights, wins) + params.bias[:, None]
    cache = (x, wins, params)
    return out, cache


def conv1d_backward(cache, dout: np.ndarray):
    """Returns (dweights, dbias, dx) for the cached forward pass."""
    x, wins, params = cache
    dweights = np.einsum("ft,ctk->fck", dout, wins)
    dbias = dout.sum(axis=1)
    dx = np.zeros_like(x)
    t_out = dout.shape[1]
    for k in range(params.kernel):
        # x[c, t + k] received weight w[f, c, k] for output position t
        dx[:, k : k + t_out] += params.weights[:, :, k].T @ dout
    return dweights, dbias, dx


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


@dataclass
class BatchNormParams:
    """Learnable scale/shift plus running statistics for inference mode."""

    gamma: np.ndarray
    beta: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    running_mean: np.ndarray = None
    running_var: np.ndarray = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.gamma.shape != self.beta.shape or self.gamma.ndim != 1:
            raise ShapeError("gamma and beta must be 1-D vectors of equal length")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        n = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = np.zeros(n)
        if self.running_var is None:
            self.running_var = np.ones(n)
        self.running_mean = np.asarray(self.running_mean, dtype=np.float64)
        self.running_var = np.asarray(self.running_var, dtype=np.float64)
        if self.running_mean.shape != (n,) or self.running_var.shape != (n,):
            raise ShapeError("running statistics must match feature count")

    @property
    def n_features(self) -> int:
        return self.gamma.shape[0]


def batchnorm_forward(
    x: np.ndarray,
    params: BatchNormParams,
    train: bool,
    update_running: bool = False,
):
    """Per-feature normalization of an (N, F) batch.

    Train mode uses the batch mean and (biased) variance and requires
    N >= 2; inference mode uses the stored running statistics. With
    ``update_running`` the running stats move by exponential average.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise ShapeError(
            f"batchnorm input must be (N, {params.n_features}), got {x.shape}"
        )
    if train:
        if x.shape[0] < 2:
            raise ShapeError("train-mode batchnorm needs a batch of at least 2 rows")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        if update_running:
            m = params.momentum
            params.running_mean = (1 - m) * params.running_mean + m * mean
            params.running_var = (1 - m) * params.running_var + m * var
    else:
        mean = params.running_mean
        var = params.running_var
    inv_std = 1.0 / np.sqrt(var + params.epsilon)
    x_hat = (x - mean) * inv_std
    out = params.gamma * x_hat + params.beta
    cache = (x_hat, inv_std, params.gamma, train, x.shape[0])
    return out, cache


def batchnorm_backward(cache, dout: np.ndarray):
    """Returns (dgamma, dbeta, dx); accounts for the batch statistics'
    dependence on the inputs in train mode."""
    x_hat, inv_std, gamma, train, n = cache
    dgamma = (dout * x_hat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dx_hat = dout * gamma
    if train:
        dx = (
            inv_std
            / n
            * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))
        )
    else:
        dx = dx_hat * inv_std
    return dgamma, dbeta, dx


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmParams:
    """Gate weights over the concatenation [h_prev, x]; all four matrices
    are (hidden, hidden + input)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for name in ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        shape = self.W_f.shape
        if len(shape) != 2:
            raise ShapeError("gate matrices must be 2-D")
        for name in ("W_i", "W_c", "W_o"):
            if getattr(self, name).shape != shape:
                raise ShapeError("all four gate matrices must share one shape")
        hidden = shape[0]
        if shape[1] <= hidden:
            raise ShapeError("gate matrices must be (hidden, hidden + input)")
        for name in ("b_f", "b_i", "b_c", "b_o"):
            if getattr(self, name).shape != (hidden,):
                raise ShapeError("gate biases must have length hidden")

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]


def lstm_step(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams):
    """One LSTM cell update; returns (h_t, c_t)."""
    (h_t, c_t), _ = lstm_step_cached(x_t, h_prev, c_prev, params)
    return h_t, c_t


def lstm_step_cached(x_t, h_prev, c_prev, params: LstmParams):
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    hidden = params.hidden_size
    if x_t.shape != (params.input_size,):
        raise ShapeError(f"x_t must have length {params.input_size}, got {x_t.shape}")
    if h_prev.shape != (hidden,) or c_prev.shape != (hidden,):
        raise ShapeError(f"h_prev and c_prev must have length {hidden}")
    v = np.concatenate([h_prev, x_t])
    f = sigmoid(params.W_f @ v + params.b_f)
    i = sigmoid(params.W_i @ v + params.b_i)
    c_bar = np.tanh(params.W_c @ v + params.b_c)
    o = sigmoid(params.W_o @ v + params.b_o)
    c_t = f * c_prev + i * c_bar
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    cache = (v, f, i, c_bar, o, c_prev, tanh_c)
    return (h_t, c_t), cache


def lstm_step_backward(cache, params: LstmParams, dh: np.ndarray, dc: np.ndarray, grads: dict):
    """Backward through one cell update.

    ``grads`` accumulates the parameter gradients under keys matching the
    LstmParams field names. Returns (dh_prev, dc_prev, dx_t).
    """
    v, f, i, c_bar, o, c_prev, tanh_c = cache
    hidden = params.hidden_size
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c**2)
    df = dc_total * c_prev
    di = dc_total * c_bar
    dc_bar = dc_total * i
    dc_prev = dc_total * f

    dz_f = df * f * (1.0 - f)
    dz_i = di * i * (1.0 - i)
    dz_c = dc_bar * (1.0 - c_bar**2)
    dz_o = do * o * (1.0 - o)

    grads["W_f"] += np.outer(dz_f, v)
    grads["W_i"] += np.outer(dz_i, v)
    grads["W_c"] += np.outer(dz_c, v)
    grads["W_o"] += np.outer(dz_o, v)
    grads["b_f"] += dz_f
    grads["b_i"] += dz_i
    grads["b_c"] += dz_c
    grads["b_o"] += dz_o

    dv = (
        params.W_f.T @ dz_f
        + params.W_i.T @ dz_i
        + params.W_c.T @ dz_c
        + params.W_o.T @ dz_o
    )
    return dv[:hidden], dc_prev, dv[hidden:]


def lstm_forward(sequence: np.ndarray, layers):
    """Run a stack of LSTM layers over (T, input_dim); h0 = c0 = 0.

    Returns the top layer's hidden sequence (T, hidden) and a cache for
    backpropagation through time.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise ShapeError("sequence must be (T >= 1, input_dim)")
    layers = list(layers)
    if not layers:
        raise ShapeError("at least one LSTM layer is required")
    t_len = sequence.shape[0]
    layer_caches = []
    inputs = sequence
    for params in layers:
        if inputs.shape[1] != params.input_size:
            raise ShapeError(
                f"layer expects input size {params.input_size}, got {inputs.shape[1]}"
            )
        h = np.zeros(params.hidden_size)
        c = np.zeros(params.hidden_size)
        hs = np.empty((t_len, params.hidden_size))
        caches = []
        for t in range(t_len):
            (h, c), cache = lstm_step_cached(inputs[t], h, c, params)
            hs[t] = h
            caches.append(cache)
        layer_caches.append((params, caches))
        inputs = hs
    return inputs, (layer_caches, t_len)


def lstm_backward(forward_cache, dh_seq: np.ndarray):
    """Backprop through the stacked, unrolled LSTM.

    ``dh_seq`` is the upstream gradient on the top layer's hidden sequence.
    Returns (per_layer_grads, dsequence) where per_layer_grads is a list of
    dicts keyed like LstmParams fields, bottom layer first.
    """
    layer_caches, t_len = forward_cache
    per_layer = [None] * len(layer_caches)
    dout = np.asarray(dh_seq, dtype=np.float64)
    for idx in range(len(layer_caches) - 1, -1, -1):
        params, caches = layer_caches[idx]
        grads = {
            "W_f": np.zeros_like(params.W_f),
            "W_i": np.zeros_like(params.W_i),
            "W_c": np.zeros_like(params.W_c),
            "W_o": np.zeros_like(params.W_o),
            "b_f": np.zeros_like(params.b_f),
            "b_i": np.zeros_like(params.b_i),
            "b_c": np.zeros_like(params.b_c),
            "b_o": np.zeros_like(params.b_o),
        }
        dx_seq = np.empty((t_len, params.input_size))
        dh_next = np.zeros(params.hidden_size)
        dc_next = np.zeros(params.hidden_size)
        for t in range(t_len - 1, -1, -1):
            dh = dout[t] + dh_next
            dh_next, dc_next, dx_seq[t] = lstm_step_backward(
                caches[t], params, dh, dc_next, grads
            )
        per_layer[idx] = grads
        dout = dx_seq
    return per_layer, dout


# ---------------------------------------------------------------------------
# Additive attention (multi-head, concatenated contexts)
# ---------------------------------------------------------------------------


@dataclass
class AttentionParams:
    """Per-head projection V: (heads, attn_dim, hidden) and scoring vector
    w: (heads, attn_dim). Head contexts are concatenated."""

    V: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.V.ndim != 3 or self.w.ndim != 2:
            raise ShapeError("V must be (heads, attn_dim, hidden), w (heads, attn_dim)")
        if self.V.shape[:2] != self.w.shape:
            raise ShapeError("V and w disagree on head count or attention dim")
        if self.heads < 1:
            raise ShapeError("at least one attention head is required")

    @property
    def heads(self) -> int:
        return self.V.shape[0]

    @property
    def attn_dim(self) -> int:
        return self.V.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.V.shape[2]

    @property
    def context_size(self) -> int:
        return self.heads * self.hidden_size


def attention_forward(hidden_seq: np.ndarray, params: AttentionParams):
    """Additive attention over a (T, hidden) sequence.

    Per head: score_t = w . tanh(V h_t); alpha = softmax over t;
    context_head = sum_t alpha_t h_t. Returns (context, weights, cache)
    with context of length heads * hidden and weights of shape (heads, T).
    """
    hs = np.asarray(hidden_seq, dtype=np.float64)
    if hs.ndim != 2 or hs.shape[0] < 1:
        raise ShapeError("attention needs a (T >= 1, hidden) sequence")
    if hs.shape[1] != params.hidden_size:
        raise ShapeError(
            f"attention expects hidden size {params.hidden_size}, got {hs.shape[1]}"
        )
    # u[h, t, a] = tanh(sum_j V[h, a, j] hs[t, j])
    u = np.tanh(np.einsum("haj,tj->hta", params.V, hs))
    scores = np.einsum("hta,ha->ht", u, params.w)
    alpha = softmax(scores)
    contexts = np.einsum("ht,tj->hj", alpha, hs)
    context = contexts.reshape(-1)
    cache = (hs, u, alpha, params)
    return context, alpha, cache


def attention_backward(cache, dcontext: np.ndarray):
    """Returns (dV, dw, dhidden_seq) for the cached attention pass."""
    hs, u, alpha, params = cache
    dctx = dcontext.reshape(params.heads, params.hidden_size)
    # context_h = sum_t alpha[h, t] * hs[t]
    dalpha = np.einsum("hj,tj->ht", dctx, hs)
    dhs = np.einsum("ht,hj->tj", alpha, dctx)
    # softmax over t per head
    dscores = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
    dw = np.einsum("hta,ht->ha", u, dscores)
    du = np.einsum("ht,ha->hta", dscores, params.w)
    dz = du * (1.0 - u**2)
    dV = np.einsum("hta,tj->haj", dz, hs)
    dhs += np.einsum("hta,haj->tj", dz, params.V)
    return dV, dw, dhs


# ---------------------------------------------------------------------------
# Dense output layer
# ---------------------------------------------------------------------------


@dataclass
class DenseParams:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("dense needs weight (out, in) and bias (out,)")


def dense_forward(x: np.ndarray, params: DenseParams):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.weight.shape[1],):
        raise ShapeError(
            f"dense expects input of length {params.weight.shape[1]}, got {x.shape}"
        )
    out = params.weight @ x + params.bias
    return out, (x, params)


def dense_backward(cache, dout: np.ndarray):
    x, params = cache
    dweight = np.outer(dout, x)
    dbias = dout.copy()
    dx = params.weight.T @ dout
    return dweight, dbias, dx


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def loss_temporal_mse(y_true: np.ndarray, y_pred_seq: np.ndarray, lam: float) -> float:
    """Prediction error plus temporal-consistency penalty.

    MSE is taken between ``y_true`` and the final prediction of the ordered
    sequence; the penalty is ``lam * sum_t ||y_t - y_{t-1}||^2`` over
    consecutive predictions.
    """
    if lam < 0:
        raise ConfigError(f"temporal weight must be >= 0, got {lam}")
    y_true = np.asarray(y_true, dtype=np.float64)
    preds = np.asarray(y_pred_seq, dtype=np.float64)
    if preds.ndim == 1:
        preds = preds[np.newaxis, :]
    if preds.shape[0] < 1 or preds.shape[1] != y_true.shape[0]:
        raise ShapeError("predictions must be (K >= 1, d) matching y_true")
    mse = float(np.mean((preds[-1] - y_true) ** 2))
    penalty = float(np.sum(np.diff(preds, axis=0) ** 2)) if preds.shape[0] > 1 else 0.0
    return mse + lam * penalty


def batch_temporal_loss(predictions: np.ndarray, targets: np.ndarray, lam: float):
    """Training loss over a time-ordered mini-batch of windows.

    Per-window MSE averaged over the batch, plus the temporal penalty over
    consecutive windows' predictions. Returns (loss, dL/dpredictions).
    """
    if lam < 0:
        raise ConfigError(f"temporal weight must be >= 0, got {lam}")
    preds = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 2 or preds.shape[0] < 1:
        raise ShapeError("predictions and targets must both be (K >= 1, d)")
    k, d = preds.shape
    err = preds - targets
    loss = float(np.mean(err**2))
    dpreds = 2.0 * err / (k * d)
    if k > 1:
        diffs = np.diff(preds, axis=0)
        loss += lam * float(np.sum(diffs**2))
        dpreds[1:] += 2.0 * lam * diffs
        dpreds[:-1] -= 2.0 * lam * diffs
    return loss, dpreds
