"""Direct parameter generation: sample a spectrum and an eigenbasis, never W.

The spectrum generators return ``(lambda_real, lambda_cpx)`` where
``lambda_cpx`` holds one member per conjugate pair with positive imaginary part;
the conjugates are implied.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg

from . import rng as _rng
from .esn import ESNConfig, draw_input_weights, generate_dense
from .spectral import (COND_LIMIT, NearDefectiveError, SpectralReservoir, factor_basis,
                       interleave, partition_eigenvalues)

log = logging.getLogger(__name__)

DISTRIBUTIONS = ("uniform", "golden", "noisy-golden", "sim")
GOLDEN_STEP = 3.0 - math.sqrt(5.0)
DEFAULT_SIGMA = 0.2
MAX_BASIS_ATTEMPTS = 16


def real_count(N: int) -> int:
    """Number of real eigenvalues: floor(sqrt(2N/pi)), bumped to N's parity."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    n_r = math.floor(math.sqrt(2 * N / math.pi))
    if n_r % 2 != N % 2:
        n_r += 1
    return n_r


def _canonical(lam_c: np.ndarray) -> np.ndarray:
    # A pair is stored by its upper-half-plane member.
    return np.where(lam_c.imag < 0, lam_c.conj(), lam_c)


def uniform_eigenvalues(N: int, sr: float, seed: int):
    if not sr > 0:
        raise ValueError("sr must be > 0")
    n_r = real_count(N)
    n_c = (N - n_r) // 2
    g = _rng.stream(seed, "eigenvalues")
    lam_r = g.uniform(-sr, sr, n_r)
    radius = sr * np.sqrt(g.random(n_c))
    theta = math.pi * (1.0 - g.random(n_c))  # (0, pi]
    return lam_r, radius * np.exp(1j * theta)


def golden_eigenvalues(N: int, sr: float, sigma: float, seed: int):
    """Phyllotaxis spiral of pair members, rescaled to ``sr``, plus complex noise.

    Magnitudes follow ``sqrt(k / (2 n_cpx))`` where ``k`` counts every phase
    step, accepted or not; only phases ``v < 1`` (upper half plane) are kept.
    """
    if not sr > 0:
        raise ValueError("sr must be > 0")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    n_r = real_count(N)
    n_c = (N - n_r) // 2
    lam_r = _rng.stream(seed, "eigenvalues").uniform(-1.0, 1.0, n_r)
    lam_c = np.empty(n_c, dtype=complex)
    v = _rng.stream(seed, "golden_phase").uniform(0.0, 2.0)
    i = k = 0
    while i < n_c:
        k += 1
        v = (v + GOLDEN_STEP) % 2.0
        if v < 1.0:
            lam_c[i] = math.sqrt(k / (2 * n_c)) * complex(math.cos(math.pi * v),
                                                          math.sin(math.pi * v))
            i += 1
    peak = max(np.abs(lam_r).max(initial=0.0), np.abs(lam_c).max(initial=0.0))
    lam_r = lam_r * (sr / peak)
    lam_c = lam_c * (sr / peak)
    if sigma > 0 and n_c:
        g = _rng.stream(seed, "golden_noise")
        lam_c = lam_c + g.normal(0.0, sigma, n_c) + 1j * g.normal(0.0, sigma, n_c)
    return lam_r, _canonical(lam_c)


def sim_eigenvalues(N: int, sr: float, seed: int, connectivity: float = 1.0):
    """Spectrum of a genuine dense draw (same streams as :func:`generate_dense`)."""
    res = generate_dense(ESNConfig(units=N, spectral_radius=sr, seed=seed,
                                   connectivity_r=connectivity))
    lam = scipy.linalg.eigvals(res.dense_W(), check_finite=False)
    real_idx, pair_idx = partition_eigenvalues(lam)
    return lam[real_idx].real, lam[pair_idx]


def _sample_basis(N: int, n_r: int, seed: int, cond_limit: float = COND_LIMIT):
    """Draw unit-norm eigenvector columns; returns ``(Q, lu, cond, attempt)``.

    Resamples from the next substream while the condition estimate exceeds
    ``cond_limit``.
    """
    if (N - n_r) % 2 or not 0 <= n_r <= N:
        raise ValueError(f"N - n_r must be even and nonnegative, got N={N}, n_r={n_r}")
    n_c = (N - n_r) // 2
    for attempt in range(MAX_BASIS_ATTEMPTS):
        g = _rng.stream(seed, "eigenvectors", attempt)
        real = g.standard_normal((N, n_r))
        real /= np.linalg.norm(real, axis=0)
        vr = g.standard_normal((N, n_c))
        vi = g.standard_normal((N, n_c))
        norm = np.sqrt((vr * vr).sum(axis=0) + (vi * vi).sum(axis=0))
        Q = np.hstack([real, interleave(vr / norm, vi / norm)])
        lu, cond = factor_basis(Q)
        if cond <= cond_limit:
            if attempt:
                log.info("eigenvector basis resampled %d time(s)", attempt)
            return Q, lu, cond, attempt
    raise NearDefectiveError(f"no basis with condition below {cond_limit:.0e} after "
                             f"{MAX_BASIS_ATTEMPTS} attempts")


def random_eigenvectors(N: int, n_r: int, seed: int) -> np.ndarray:
    """Complex eigenvector matrix in block layout ``[u.., v_1..v_k, conj(v_1)..conj(v_k)]``."""
    Q, _, _, _ = _sample_basis(N, n_r, seed)
    v = Q[:, n_r::2] + 1j * Q[:, n_r + 1::2]
    return np.hstack([Q[:, :n_r].astype(complex), v, v.conj()])


def dpg_spectrum(distribution: str, N: int, sr: float, seed: int, *, sigma: float = DEFAULT_SIGMA,
                 connectivity: float = 1.0):
    if distribution == "uniform":
        return uniform_eigenvalues(N, sr, seed)
    if distribution == "golden":
        return golden_eigenvalues(N, sr, 0.0, seed)
    if distribution == "noisy-golden":
        return golden_eigenvalues(N, sr, sigma, seed)
    if distribution == "sim":
        return sim_eigenvalues(N, sr, seed, connectivity)
    raise ValueError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")


def build_dpg(config: ESNConfig, distribution: str, *,
              sigma: float = DEFAULT_SIGMA) -> SpectralReservoir:
    """Spectral reservoir from a sampled spectrum and a random eigenbasis.

    Input and feedback weights are drawn in the original basis from the same
    streams as the dense path and mapped through Q. No leak is applied.
    """
    lam_r, lam_c = dpg_spectrum(distribution, config.units, config.spectral_radius, config.seed,
                                sigma=sigma, connectivity=config.connectivity_r)
    Q, lu, cond, _ = _sample_basis(config.units, len(lam_r), config.seed)
    W_in, W_fb = draw_input_weights(config)
    spec = SpectralReservoir(lambda_real=lam_r, lambda_cpx=lam_c, w_in_Q=W_in @ Q,
                             w_fb_Q=None if W_fb is None else W_fb @ Q, basis_Q=Q,
                             cond_P=cond)
    spec.__dict__["_Q_lu"] = lu
    return spec
