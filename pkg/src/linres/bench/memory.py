"""Short-term memory capacity of linear reservoirs.

The input is i.i.d. uniform(-1, 1). One reservoir run is shared by every
delay: a single multi-output ridge fit reconstructs ``u(t-k)`` for all
``k <= k_max`` and each delay is scored by its determination coefficient on
held-out steps. Reservoirs use spectral radius 1, no leak and unit input
scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import rng as _rng
from ..dpg import DEFAULT_SIGMA, build_dpg
from ..esn import (DivergenceError, ESNConfig, ESNError, RegenerationError, design_matrix,
                   draw_dense, generate_dense, ridge_path, run_reservoir)
from ..spectral import diagonalize, eet_factor, run_diagonal
from .grid import canonical_method
from .metrics import determination_coefficient

WASHOUT = 200
TRAIN = 2000
TEST = 1000
DEFAULT_ALPHA = 1e-8


@dataclass
class MCCurve:
    """Capacity per delay, averaged over seeds (``per_seed`` keeps the raw rows)."""

    units: int
    method: str
    delays: np.ndarray
    per_seed: np.ndarray
    connectivity: float = 1.0
    errors: List[str] = field(default_factory=list)

    @property
    def mc(self) -> np.ndarray:
        if len(self.per_seed) == 0:
            return np.full(len(self.delays), np.nan)
        return self.per_seed.mean(axis=0)

    @property
    def total(self) -> float:
        return float(np.nansum(self.mc))

    def crossing(self, level: float = 0.5) -> Optional[int]:
        """First delay whose capacity falls below ``level`` (None if it never does)."""
        below = np.flatnonzero(self.mc < level)
        return int(self.delays[below[0]]) if below.size else None


def mc_signal(seed: int, length: int) -> np.ndarray:
    return _rng.stream(seed, "mc_signal").uniform(-1.0, 1.0, length)


def delayed_targets(u: np.ndarray, k_max: int) -> np.ndarray:
    """Column ``k - 1`` holds ``u(t - k)``, zero before the series starts."""
    Y = np.zeros((len(u), k_max))
    for k in range(1, k_max + 1):
        Y[k:, k - 1] = u[:-k]
    return Y


def _reservoir_states(method: str, N: int, seed: int, u: np.ndarray, connectivity: float,
                      sigma: float):
    """States and ridge factor (None for the dense path) at radius 1."""
    config = ESNConfig(units=N, spectral_radius=1.0, seed=seed, connectivity_r=connectivity)
    if method in ("normal", "diag"):
        try:
            res = generate_dense(config)
        except RegenerationError:
            res = draw_dense(config)
            if res.W.count_nonzero() if hasattr(res.W, "count_nonzero") else np.any(res.W):
                raise
            # An empty draw has no radius to set; keep it as a stateless reservoir.
    if method == "normal":
        return run_reservoir(res, u).states, None
    if method == "diag":
        spec = diagonalize(res)
    else:
        spec = build_dpg(config, method[len("dpg-"):], sigma=sigma)
    return run_diagonal(spec, u).states, eet_factor(spec, 1)


def capacity_curve(states, u, k_max: int, washout: int, train: int, alpha: float,
                   factor=None) -> np.ndarray:
    """Determination coefficient per delay for one state sequence."""
    Y = delayed_targets(u, k_max)
    X = design_matrix(states, None, use_bias=True)
    tr = slice(washout, washout + train)
    te = slice(washout + train, len(u))
    (W, _), = ridge_path(X[tr], Y[tr], [alpha], factor)
    with np.errstate(over="ignore", invalid="ignore"):
        pred = X[te] @ W
    if not np.isfinite(pred).all():
        raise DivergenceError("test predictions overflow; the reservoir diverged")
    return np.array([determination_coefficient(Y[te, k], pred[:, k]) for k in range(k_max)])


def memory_capacity(method: str, N: int, k_max: int, seeds: Sequence[int] = (0,), *,
                    alpha: float = DEFAULT_ALPHA, connectivity: float = 1.0,
                    sigma: float = DEFAULT_SIGMA, train: int = TRAIN,
                    test: int = TEST) -> MCCurve:
    """Capacity curve ``MC_k`` for k = 1..k_max.

    The washout is ``max(200, k_max)`` so every delayed target is defined on
    the training span. Seeds whose reservoir cannot be built (zero spectral
    radius, near-defective eigenbasis, states that diverge) are recorded in
    ``errors`` and skipped.
    """
    method = canonical_method(method)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    washout = max(WASHOUT, k_max)
    rows, errors = [], []
    for seed in seeds:
        u = mc_signal(int(seed), washout + train + test)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                states, factor = _reservoir_states(method, N, int(seed), u[:, None],
                                                   connectivity, sigma)
            rows.append(capacity_curve(states, u, k_max, washout, train, alpha, factor))
        except ESNError as exc:
            errors.append(f"seed {seed}: {exc}")
    per_seed = np.array(rows) if rows else np.empty((0, k_max))
    return MCCurve(units=N, method=method, delays=np.arange(1, k_max + 1), per_seed=per_seed,
                   connectivity=connectivity, errors=errors)


@dataclass
class ConnectivityRow:
    connectivity: float
    mc: Dict[str, float]
    errors: Dict[str, str]

    @property
    def difference(self) -> float:
        """``normal - diag`` capacity at the probe delay (NaN if either failed)."""
        return self.mc.get("normal", np.nan) - self.mc.get("diag", np.nan)


def probe_delay(N: int, seeds: Sequence[int] = (0,), *, alpha: float = DEFAULT_ALPHA,
                level: float = 0.5) -> int:
    """Delay at which the full-connectivity dense reservoir's capacity reaches ``level``."""
    curve = memory_capacity("normal", N, 2 * N, seeds, alpha=alpha)
    k = curve.crossing(level)
    return k if k is not None else 2 * N


def connectivity_sweep(N: int, connectivities: Sequence[float], seeds: Sequence[int] = (0,), *,
                       delay: Optional[int] = None, alpha: float = DEFAULT_ALPHA,
                       methods: Sequence[str] = ("normal", "diag")):
    """Capacity at one probe delay across reservoir connectivities.

    Returns ``(delay, rows)``. Failures at a connectivity (for example an
    all-zero W, whose radius cannot be set, or a near-defective basis) appear
    as NaN entries with the error text, never as exceptions.
    """
    if delay is None:
        delay = probe_delay(N, seeds, alpha=alpha)
    rows = []
    for c in connectivities:
        mc, errors = {}, {}
        for m in methods:
            try:
                curve = memory_capacity(m, N, delay, seeds, alpha=alpha, connectivity=c)
            except Exception as exc:  # reported per cell by design
                mc[m], errors[m] = np.nan, str(exc)
                continue
            mc[m] = float(curve.mc[-1])
            if curve.errors:
                errors[m] = "; ".join(curve.errors)
        rows.append(ConnectivityRow(float(c), mc, errors))
    return delay, rows

