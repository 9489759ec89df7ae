"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which derives an
independent counter-based (Philox) generator from ``(seed, name, *extra)``.
Each weight matrix or spectral component owns one stream name, so adding a new
draw never perturbs an existing one and the dense and DPG paths can share a
seed without sharing samples.

Stream derivation: ``SeedSequence(seed, spawn_key=(STREAMS[name], *extra))``.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "reservoir_mask": 0,
    "reservoir_values": 1,
    "input_mask": 2,
    "input_values": 3,
    "feedback_mask": 4,
    "feedback_values": 5,
    "eigenvalues": 10,
    "golden_phase": 11,
    "golden_noise": 12,
    "eigenvectors": 13,
    "mc_signal": 20,
}

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return the generator for stream ``name`` under ``seed``.

    ``extra`` integers extend the spawn key, e.g. a resample attempt counter.
    """
    key = (STREAMS[name],) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
