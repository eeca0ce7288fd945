"""Simulated int8 quantization: symmetric per-tensor scales, float math on
the dequantized weights. Deployment-side concerns (operator fusion, target
latency budgets) are out of scope; this measures accuracy cost only."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .model import Model, forward


class QuantizedModel:
    """Int8 parameter tensors with one symmetric scale each.

    Inference dequantizes (scale * q) and runs the ordinary forward pass.
    Normalization running statistics are carried over unquantized: they are
    data statistics, not learned weights.
    """

    def __init__(self, config, tensors: dict, reference: Model):
        self.config = config
        self.tensors = tensors  # name -> (int8 array, float scale)
        self._model = reference.copy()
        for name, (q, scale) in tensors.items():
            self._model.set_param(name, q.astype(np.float64) * scale)

    def dequantized(self) -> Model:
        return self._model.copy()

    def predict(self, window: np.ndarray) -> np.ndarray:
        return forward(self._model, window)

    def max_scale(self) -> float:
        return max(scale for _, scale in self.tensors.values())


def quantize_int8(model: Model) -> QuantizedModel:
    """Per-tensor symmetric quantization.

    scale = max|w| / 127 (an all-zero tensor gets scale 1, mapping to all
    zeros); q = round(w / scale) clamped to [-127, 127].
    """
    tensors = {}
    for name, arr in model.param_items():
        if not np.isfinite(arr).all():
            raise NumericError(f"cannot quantize non-finite values in {name}")
        peak = float(np.max(np.abs(arr))) if arr.size else 0.0
        scale = peak / 127.0 if peak > 0.0 else 1.0
        q = np.clip(np.round(arr / scale), -127, 127).astype(np.int8)
        tensors[name] = (q, scale)
    return QuantizedModel(model.config, tensors, model)
