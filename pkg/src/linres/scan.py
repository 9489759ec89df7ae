"""Time-parallel evaluation of the diagonal recurrence.

Each lane obeys ``x(t) = a * x(t-1) + b(t)``. Pairs ``(a, b)`` compose
associatively as

    (a2, b2) o (a1, b1) = (a2 * a1, b2 + a2 * b1),

so every prefix can be formed by a parallel scan. The time axis is cut into
chunks (default 1024). Pass 1 runs an inclusive Brent-Kung scan inside each
chunk independently; the chunk totals are then folded sequentially into
carries; pass 2 applies each carry to its chunk. Bracketing depends only on
the chunking, so results do not depend on the number of workers.

Work is counted in lane multiplies: one multiply of two lane values, a
complex lane counting once. Brent-Kung needs fewer than ``2 n`` combines per
chunk of ``n`` steps, each costing two multiplies, and pass 2 adds one more
per step, so a run over ``T`` steps and ``L <= N`` lanes stays below
``5 T L`` multiplies.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .esn import _check_inputs
from .postponed import FeedbackNotSupportedError
from .spectral import SpectralReservoir, pairs_view, run_diagonal

DEFAULT_CHUNK = 1024
ENGINES = ("sequential", "scan")


@dataclass
class ScanStats:
    """Work counters filled in by :func:`scan_states`."""

    multiplies: int = 0
    combines: int = 0
    chunks: int = 0


def combine(later, earlier):
    """``later o earlier`` for ``(a, b)`` pairs: apply ``earlier`` first."""
    a2, b2 = later
    a1, b1 = earlier
    return a2 * a1, b2 + a2 * b1


def _combine_into(A, B, i: slice, j: slice) -> int:
    # Position i absorbs the prefix held at position j.
    B[i] += A[i] * B[j]
    A[i] *= A[j]
    return A[i].size


def _brent_kung(A: np.ndarray, B: np.ndarray) -> int:
    """In-place inclusive scan along axis 0; length must be a power of two.

    Returns the number of lane-level combines performed.
    """
    n = len(A)
    count = 0
    s = 1
    while s < n:
        count += _combine_into(A, B, slice(2 * s - 1, n, 2 * s), slice(s - 1, n, 2 * s))
        s *= 2
    s = n // 4
    while s >= 1:
        m = len(range(3 * s - 1, n, 2 * s))
        if m:
            j0 = 2 * s - 1
            count += _combine_into(A, B, slice(3 * s - 1, n, 2 * s),
                                   slice(j0, j0 + 2 * s * m, 2 * s))
        s //= 2
    return count


def _scan_chunk(lam: np.ndarray, b: np.ndarray):
    """Inclusive prefixes of one chunk; returns ``(A, B, combines)`` trimmed to ``len(b)``."""
    n = len(b)
    size = 1 << max(0, math.ceil(math.log2(n))) if n else 0
    A = np.ones((size, b.shape[1]), dtype=b.dtype)
    A[:n] = lam
    B = np.zeros((size, b.shape[1]), dtype=b.dtype)
    B[:n] = b
    count = _brent_kung(A, B)
    return A[:n], B[:n], count


def scan_lanes(lam: np.ndarray, b: np.ndarray, chunk: int = DEFAULT_CHUNK, jobs: int = 1,
               stats: Optional[ScanStats] = None) -> np.ndarray:
    """Solve ``x(t) = lam * x(t-1) + b(t)``, ``x(0) = 0``, for ``b`` of shape ``(T, L)``."""
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    b = np.asarray(b)
    T = len(b)
    if T == 0 or b.shape[1] == 0:
        return b.copy()
    lam = np.asarray(lam, dtype=b.dtype)
    bounds = [(s, min(s + chunk, T)) for s in range(0, T, chunk)]

    def pass1(bound):
        s, e = bound
        return _scan_chunk(lam, b[s:e])

    if jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(bounds))) as pool:
            parts = list(pool.map(pass1, bounds))
    else:
        parts = [pass1(bd) for bd in bounds]

    # Sequential fold of chunk totals into carries (the barrier between passes).
    carries = [None]
    carry = parts[0][1][-1]
    for A, B, _ in parts[1:]:
        carries.append(carry)
        carry = B[-1] + A[-1] * carry

    out = np.empty_like(b)

    def pass2(k):
        s, e = bounds[k]
        A, B, _ = parts[k]
        if carries[k] is None:
            out[s:e] = B
        else:
            np.multiply(A, carries[k], out=out[s:e])
            out[s:e] += B

    if jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(bounds))) as pool:
            list(pool.map(pass2, range(len(bounds))))
    else:
        for k in range(len(bounds)):
            pass2(k)

    if stats is not None:
        L = b.shape[1]
        combines = sum(p[2] for p in parts)
        stats.combines += combines
        stats.chunks += len(bounds)
        # Two multiplies per combine, one per carried step, one per carry fold.
        stats.multiplies += 2 * combines + (T - (bounds[0][1] - bounds[0][0])) * L \
            + (len(bounds) - 1) * L
    return out


def scan_states(spec: SpectralReservoir, inputs, chunk: int = DEFAULT_CHUNK, jobs: int = 1,
                stats: Optional[ScanStats] = None) -> np.ndarray:
    """Q-basis states for t = 1..T via the chunked scan; matches :func:`run_diagonal`."""
    if spec.w_fb_Q is not None:
        raise FeedbackNotSupportedError("the scan needs input-independent dynamics; "
                                        "output feedback is not supported")
    u = _check_inputs(inputs, spec.d_in)
    n_r = spec.n_r
    drive = u @ spec.w_in_Q
    out = np.empty_like(drive)
    out[:, :n_r] = scan_lanes(spec.lambda_real, drive[:, :n_r], chunk, jobs, stats)
    pairs_view(out, n_r)[...] = scan_lanes(spec.lambda_cpx, pairs_view(drive, n_r), chunk,
                                           jobs, stats)
    return out


def batch_powers(lam, t_max: int) -> np.ndarray:
    """Table of ``lam**k`` for k = 0..t_max, shape ``(t_max + 1, L)``.

    The table is filled by doubling: rows ``[m, 2m)`` are rows ``[0, m)``
    times ``lam**m``, with ``lam**m`` obtained by repeated squaring. Entries
    that overflow are saturated to the largest finite magnitude (keeping the
    exact phase) and a RuntimeWarning names the first affected power.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    lam = np.atleast_1d(np.asarray(lam))
    dtype = np.result_type(lam.dtype, float)
    P = np.empty((t_max + 1, lam.size), dtype=dtype)
    P[0] = 1
    sq = lam.astype(dtype).ravel()
    m = 1
    with np.errstate(over="ignore", invalid="ignore"):
        while m <= t_max:
            n = min(m, t_max + 1 - m)
            P[m:m + n] = P[:n] * sq
            sq = sq * sq
            m *= 2
    bad = ~np.isfinite(P)
    if bad.any():
        k_first = int(np.argmax(bad.any(axis=1)))
        warnings.warn(f"lam**k overflowed from k={k_first}; {int(bad.sum())} entries saturated",
                      RuntimeWarning, stacklevel=2)
        ks = np.broadcast_to(np.arange(t_max + 1)[:, None], P.shape)[bad]
        lanes = np.broadcast_to(lam.ravel(), P.shape)[bad]
        big = np.finfo(float).max
        if np.iscomplexobj(P):
            P[bad] = big * np.exp(1j * ks * np.angle(lanes))
        else:
            P[bad] = big * np.where((lanes < 0) & (ks % 2 == 1), -1.0, 1.0)
    return P


def closed_form_states(spec: SpectralReservoir, inputs) -> np.ndarray:
    """``x(t) = sum_{i<=t} u(i) W_in Lambda^(t-i)`` evaluated directly (O(T^2) spot check)."""
    u = _check_inputs(inputs, spec.d_in)
    T, n_r = len(u), spec.n_r
    drive = u @ spec.w_in_Q
    P = batch_powers(spec.lanes, max(T - 1, 0))
    lanes = np.concatenate([drive[:, :n_r].astype(complex), pairs_view(drive, n_r)], axis=1)
    out = np.empty_like(drive)
    for t in range(T):
        x = (lanes[:t + 1] * P[t::-1]).sum(axis=0)
        out[t, :n_r] = x[:n_r].real
        pairs_view(out[t], n_r)[...] = x[n_r:]
    return out


def run_states(spec: SpectralReservoir, inputs, engine: str = "sequential",
               chunk: int = DEFAULT_CHUNK, jobs: int = 1) -> np.ndarray:
    if engine == "sequential":
        return run_diagonal(spec, inputs).states
    if engine == "scan":
        return scan_states(spec, inputs, chunk=chunk, jobs=jobs)
    raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
