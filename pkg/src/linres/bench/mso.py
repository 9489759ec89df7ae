"""Multiple superimposed oscillators: one-step-ahead prediction of a sum of sines."""

from __future__ import annotations

import numpy as np

from ..esn import TaskDataset

FREQUENCIES = (0.2, 0.331, 0.42, 0.51, 0.63, 0.74, 0.85, 0.97, 1.08, 1.19, 1.27, 1.32)
WASHOUT = 100
TRAIN_END = 400
VALID_END = 700
LENGTH = 1000


def mso_signal(K: int, t) -> np.ndarray:
    """``U_K(t) = sum_{k<=K} sin(alpha_k t)``."""
    if not 1 <= K <= len(FREQUENCIES):
        raise ValueError(f"K must lie in [1, {len(FREQUENCIES)}], got {K}")
    t = np.asarray(t, dtype=float)
    return np.sin(np.multiply.outer(t, FREQUENCIES[:K])).sum(axis=-1)


def gen_mso(K: int, T: int = LENGTH) -> TaskDataset:
    """Inputs ``U_K(t)`` and targets ``U_K(t+1)`` for t = 1..T.

    The default length splits as 100 washout, 300 training, 300 validation and
    300 test steps. Shorter series keep the same boundaries, clipped to T.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    U = mso_signal(K, np.arange(1, T + 2))
    train_end = min(TRAIN_END, T)
    return TaskDataset(inputs=U[:-1], targets=U[1:], washout=min(WASHOUT, train_end),
                       train_end=train_end, valid_end=min(VALID_END, T), name=f"MSO{K}")
