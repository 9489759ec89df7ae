"""Postponed input weighting.

For a linear reservoir without feedback started from zero, the P-basis state
is ``r(t) = sum_d w_in[d] * R_d(t)`` with the echo matrix

    R_d(t) = R_d(t-1) * lambda + u_d(t),

which does not depend on the input weights. One pass over the data therefore
serves every input scaling, and for one input and one output the readout can
be trained on R directly.

Storage follows the Q layout used by :mod:`linres.spectral`: real lanes first,
then interleaved ``(re, im)`` pairs. The injected vector is ``u_d`` on real
lanes and ``(u_d, 0)`` on pair lanes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .esn import (DimensionError, ESNError, Readout, _as_2d, _check_inputs, design_matrix,
                  solve_ridge)
from .spectral import SpectralReservoir, pairs_view


class FeedbackNotSupportedError(ESNError):
    """The echo matrix needs input-independent dynamics (no output feedback)."""


class ZeroInputWeightError(ESNError):
    """A zero input weight makes the gamma <-> w_out map non-invertible."""


def ones_Q(n_r: int, n_i: int) -> np.ndarray:
    """Q-layout vector that injects 1 on every lane: ``[1..1, (1, 0)..]``."""
    v = np.zeros(n_r + 2 * n_i)
    v[:n_r] = 1.0
    v[n_r::2] = 1.0
    return v


def _reject_feedback(spec: SpectralReservoir):
    if spec.w_fb_Q is not None:
        raise FeedbackNotSupportedError("echo matrix requires a reservoir without output feedback")


def iter_echo_matrix(spec: SpectralReservoir, inputs) -> Iterator[np.ndarray]:
    """Yield ``R(t)`` of shape ``(D_in, N)`` for t = 1..T.

    The yielded array is reused between steps; copy it to keep it.
    """
    _reject_feedback(spec)
    u = _check_inputs(inputs, spec.d_in)
    n_r = spec.n_r
    R = np.zeros((spec.d_in, spec.units))
    Rr, Rc = R[:, :n_r], pairs_view(R, n_r)
    lr, lc = spec.lambda_real, spec.lambda_cpx
    for t in range(len(u)):
        Rr *= lr
        Rc *= lc
        ut = u[t][:, None]
        Rr += ut
        R[:, n_r::2] += ut
        yield R


def run_echo_matrix(spec: SpectralReservoir, inputs) -> np.ndarray:
    """Materialized echo matrix, shape ``(T, D_in, N)``.

    The input dimensions evolve independently, so each row is an ordinary
    diagonal run driven by a single input channel through :func:`ones_Q`.
    """
    _reject_feedback(spec)
    u = _check_inputs(inputs, spec.d_in)
    T, D, N, n_r = len(u), spec.d_in, spec.units, spec.n_r
    out = np.empty((T, D, N))
    if T == 0:
        return out
    inject = ones_Q(spec.n_r, spec.n_i)
    lr, lc = spec.lambda_real, spec.lambda_cpx
    for d in range(D):
        drive = u[:, d, None] * inject
        O = out[:, d, :]
        Or, Oc = O[:, :n_r], pairs_view(O, n_r)
        O[0] = drive[0]
        for t in range(1, T):
            np.multiply(Or[t - 1], lr, out=Or[t])
            np.multiply(Oc[t - 1], lc, out=Oc[t])
            O[t] += drive[t]
    return out


def recover_state(w_in_Q, R, n_r: int, out: Optional[np.ndarray] = None) -> np.ndarray:
    """States from echo matrices: ``sum_d w_in[d] (*) R_d`` with complex pair products.

    ``R`` is ``(D_in, N)`` for one step or ``(T, D_in, N)`` for a sequence.
    With one input channel ``out`` may alias ``R[..., 0, :]``.
    """
    w = np.atleast_2d(np.asarray(w_in_Q, dtype=float))
    R = np.ascontiguousarray(R, dtype=float)
    if R.shape[-2:] != w.shape:
        raise DimensionError(f"echo matrix trailing shape {R.shape[-2:]} != weights {w.shape}")
    wc = np.ascontiguousarray(w[:, n_r:]).view(np.complex128)
    if out is None:
        out = np.empty(R.shape[:-2] + (R.shape[-1],))
    if w.shape[0] == 1:
        R0 = R[..., 0, :]
        np.multiply(R0[..., :n_r], w[0, :n_r], out=out[..., :n_r])
        np.multiply(pairs_view(R0, n_r), wc[0], out=pairs_view(out, n_r))
        return out
    np.sum(R[..., :n_r] * w[:, :n_r], axis=-2, out=out[..., :n_r])
    np.sum(pairs_view(R, n_r) * wc, axis=-2, out=pairs_view(out, n_r))
    return out


def scan_input_scalings(spec: SpectralReservoir, inputs, scalings: Sequence[float]):
    """Q-basis states for every input scaling from a single echo-matrix pass.

    ``spec.w_in_Q`` is the unit-scaling input matrix; scaling ``s`` uses ``s * w_in_Q``.
    Returns a list aligned with ``scalings``.
    """
    scalings = list(scalings)
    R = run_echo_matrix(spec, inputs)
    if not scalings:
        return []
    # One channel: recover into the echo buffer itself and reuse it for the last scaling.
    base = recover_state(spec.w_in_Q, R, spec.n_r, out=R[:, 0, :] if spec.d_in == 1 else None)
    states = [s * base for s in scalings[:-1]]
    states.append(np.multiply(base, scalings[-1], out=base))
    return states


def accumulate_gram(spec: SpectralReservoir, inputs, targets, rows: slice, *,
                    w_in_Q=None, use_bias: bool = True):
    """Streamed ``(X^T X, X^T Y)`` over ``rows`` without storing the state sequence.

    ``X`` holds ``[1, state]`` rows, where the state is recovered with
    ``w_in_Q`` or, when it is None, the flattened echo matrix itself.
    """
    Y = _as_2d(targets)
    start, stop, _ = rows.indices(len(Y))
    lead = 1 if use_bias else 0
    width = lead + (spec.units if w_in_Q is not None else spec.d_in * spec.units)
    G = np.zeros((width, width))
    B = np.zeros((width, Y.shape[1]))
    x = np.ones(width)
    for t, R in enumerate(iter_echo_matrix(spec, inputs)):
        if t >= stop:
            break
        if t < start:
            continue
        x[lead:] = recover_state(w_in_Q, R, spec.n_r) if w_in_Q is not None else R.ravel()
        G += np.outer(x, x)
        B += np.outer(x, Y[t])
    return G, B


@dataclass
class CompositeReadout:
    """Readout trained on unweighted echo-matrix states (one input, one output).

    Predictions are ``bias + R_Q(t) . gamma``. ``recovered`` is the equivalent
    Q-basis readout for the reservoir's input weights, when requested.
    """

    gamma: np.ndarray
    bias: Optional[float] = None
    recovered: Optional[Readout] = None
    fallback: bool = False

    def predict(self, R) -> np.ndarray:
        R = np.asarray(R)
        y = R.reshape(len(R), -1) @ self.gamma
        return y if self.bias is None else y + self.bias


def gamma_to_readout(gamma, w_in_Q, n_r: int, bias=None) -> Readout:
    """Invert ``gamma`` lane-wise: real ``w_out = gamma / w``; pairs ``g = gamma / conj(w)``."""
    gamma = np.asarray(gamma, dtype=float)
    w = np.asarray(w_in_Q, dtype=float).reshape(-1)
    wc = w[n_r:].view(np.complex128)
    if np.any(w[:n_r] == 0) or np.any(wc == 0):
        raise ZeroInputWeightError("input weights have a zero lane; w_out cannot be recovered")
    res = np.empty_like(gamma)
    res[:n_r] = gamma[:n_r] / w[:n_r]
    res[n_r:] = (np.ascontiguousarray(gamma[n_r:]).view(np.complex128) / wc.conj()).view(float)
    return Readout(res_block=res[:, None],
                   bias_block=None if bias is None else np.array([[bias]]), basis="Q")


def readout_to_gamma(readout: Readout, w_in_Q, n_r: int) -> np.ndarray:
    """Forward map of :func:`gamma_to_readout` for a Q-basis readout."""
    if readout.basis != "Q":
        raise ESNError("gamma is defined against a Q-basis readout")
    g = readout.res_block[:, 0].astype(float)
    w = np.asarray(w_in_Q, dtype=float).reshape(-1)
    out = np.empty_like(g)
    out[:n_r] = g[:n_r] * w[:n_r]
    gc = np.ascontiguousarray(g[n_r:]).view(np.complex128)
    out[n_r:] = (gc * w[n_r:].view(np.complex128).conj()).view(float)
    return out


def train_gamma(R, targets, alpha: float, *, w_in_Q=None, n_r: Optional[int] = None,
                use_bias: bool = False) -> CompositeReadout:
    """Ridge on the echo matrix for D_in = D_out = 1.

    The penalty is ``alpha * |gamma|^2``, which is not the same model as
    penalizing ``w_out`` once alpha > 0. Pass ``w_in_Q`` and ``n_r`` to also
    recover the equivalent readout; a zero weight lane raises
    :class:`ZeroInputWeightError`.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 3 or R.shape[1] != 1:
        raise DimensionError("gamma training needs an echo matrix of shape (T, 1, N)")
    Y = _as_2d(targets)
    if Y.shape[1] != 1:
        raise DimensionError("gamma training supports a single output")
    if w_in_Q is not None and n_r is None:
        raise ValueError("n_r is required to recover w_out")
    X = design_matrix(R[:, 0, :], None, use_bias)
    W, fallback = solve_ridge(X.T @ X, X.T @ Y, alpha, X=X, Y=Y)
    bias = float(W[0, 0]) if use_bias else None
    gamma = W[1:, 0] if use_bias else W[:, 0]
    recovered = None
    if w_in_Q is not None:
        recovered = gamma_to_readout(gamma, w_in_Q, n_r, bias)
        recovered.fallback = fallback
    return CompositeReadout(gamma=gamma, bias=bias, recovered=recovered, fallback=fallback)

