"""Forecast error metrics."""

from __future__ import annotations

import numpy as np


def mse(pred, target) -> float:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


def mae(pred, target) -> float:
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))))


def mape_per_step(predictions, actuals) -> np.ndarray:
    """Mean absolute percentage error for each step ahead (columns)."""
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {a.shape}")
    if a.ndim == 1:
        p, a = p[:, None], a[:, None]
    if np.any(a == 0):
        raise ZeroDivisionError("MAPE undefined for zero actual values")
    if np.any(a < 0):
        raise ValueError("MAPE expects strictly positive actual values")
    return 100.0 * np.mean(np.abs(a - p) / a, axis=0)
