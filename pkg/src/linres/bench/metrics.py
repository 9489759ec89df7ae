"""Error and capacity metrics."""

from __future__ import annotations

import numpy as np


def rmse(pred, target) -> float:
    """Root mean square error over all entries."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("rmse of an empty sequence is undefined")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def determination_coefficient(x, y) -> float:
    """Squared correlation ``cov(x, y)^2 / (var(x) var(y))``; 0 if either variance is 0."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise ValueError("x and y must be nonempty and of equal length")
    xc, yc = x - x.mean(), y - y.mean()
    vx, vy = xc @ xc, yc @ yc
    if vx == 0 or vy == 0:
        return 0.0
    return float((xc @ yc) ** 2 / (vx * vy))
