from __future__ import annotations

import numpy as np

from ..errors import ShapeError

BCE_EPS = 1e-7


def loss_bce(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. ``pred``.

    Predictions are clamped to [eps, 1 - eps] before the logs.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    grad = (p - target) / (p * (1.0 - p)) / pred.size
    return float(loss), grad
