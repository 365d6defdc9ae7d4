"""Weighted binary cross entropy."""

from __future__ import annotations

import numpy as np

# predicted probabilities are clamped to this interval before taking logs
CLAMP = 1e-7


def weighted_bce(pred, target, weight=1.0) -> float:
    """Mean over samples of -w * (y*log(p) + (1-y)*log(1-p)).

    ``pred`` is clamped to [CLAMP, 1-CLAMP].  Accepts scalars or arrays;
    arrays are flattened, so a batch contributes the plain mean of its
    per-sample weighted losses (scaling every weight by c scales the loss by
    c, which is what makes class-weight bookkeeping linear).
    """
    p = np.clip(np.asarray(pred, dtype=np.float64).reshape(-1), CLAMP, 1.0 - CLAMP)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64).reshape(-1), p.shape)
    per_sample = -w * (y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(per_sample.mean())


def weighted_bce_grad(pred, target, weight=1.0) -> np.ndarray:
    """Gradient of ``weighted_bce`` w.r.t. ``pred`` (zero in clamped regions)."""
    pred = np.asarray(pred)
    shape = pred.shape
    p_raw = pred.astype(np.float64).reshape(-1)
    p = np.clip(p_raw, CLAMP, 1.0 - CLAMP)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64).reshape(-1), p.shape)
    grad = -w * (y / p - (1.0 - y) / (1.0 - p)) / p.size
    grad = np.where((p_raw > CLAMP) & (p_raw < 1.0 - CLAMP), grad, 0.0)
    return grad.reshape(shape).astype(pred.dtype, copy=False)
