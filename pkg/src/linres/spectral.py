"""Linear reservoirs in the eigenbasis of W.

A :class:`SpectralReservoir` keeps the eigenvalues split into ``n_r`` real
values and ``n_i`` conjugate pairs (one canonical member per pair, positive
imaginary part), plus the real basis

    Q = [u_1 .. u_nr, Re v_1, Im v_1, .., Re v_ni, Im v_ni]

built from the unit-norm eigenvectors. States live in the Q basis as real
vectors ``[real lanes | (re, im) pairs]``. The update multiplies the real lanes
by the real eigenvalues and the pair region, viewed in place as complex128, by
the complex eigenvalues: O(N) per step instead of O(N^2).
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .esn import (BasisMismatchError, DenseReservoir, DimensionError, ESNError, Readout,
                  Trajectory, _as_2d, _check_inputs, _feedback_source, design_matrix,
                  readout_step, shift_down, train_ridge)

COND_LIMIT = 1e12


class NearDefectiveError(ESNError):
    """The eigenvector basis is too ill-conditioned to be trusted."""


def estimate_cond(lu_piv, A) -> float:
    """One-norm condition number estimate from an LU factorization of ``A``."""
    lu, _ = lu_piv
    anorm = np.abs(A).sum(axis=0).max()
    gecon = lapack.zgecon if np.iscomplexobj(lu) else lapack.dgecon
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return np.inf
    return float(1.0 / rcond)


def factor_basis(Q):
    """``(lu_factor(Q), condition estimate)``; a singular Q gives an infinite estimate."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(Q, check_finite=False)
    return lu, estimate_cond(lu, Q)


def pairs_view(a: np.ndarray, n_r: int) -> np.ndarray:
    """Complex view of the interleaved pair region along the last axis."""
    return a[..., n_r:].view(np.complex128)


def interleave(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """Columns ``[re_0, im_0, re_1, im_1, ..]``."""
    out = np.empty(re.shape[:-1] + (2 * re.shape[-1],), dtype=float)
    out[..., 0::2] = re
    out[..., 1::2] = im
    return out


@dataclass(frozen=True)
class SpectralReservoir:
    """Diagonalized linear reservoir with real Q-basis storage.

    ``w_in_Q = W_in Q`` and ``w_fb_Q = W_fb Q``. ``basis_Q`` may be absent for
    reservoirs that are only ever run (never trained with EET or mapped back).
    """

    lambda_real: np.ndarray
    lambda_cpx: np.ndarray
    w_in_Q: np.ndarray
    w_fb_Q: Optional[np.ndarray] = None
    basis_Q: Optional[np.ndarray] = None
    cond_P: float = float("nan")

    def __post_init__(self):
        lr = np.asarray(self.lambda_real, dtype=float).reshape(-1)
        lc = np.asarray(self.lambda_cpx, dtype=complex).reshape(-1)
        object.__setattr__(self, "lambda_real", lr)
        object.__setattr__(self, "lambda_cpx", lc)
        N = len(lr) + 2 * len(lc)
        object.__setattr__(self, "w_in_Q", np.atleast_2d(np.asarray(self.w_in_Q, dtype=float)))
        if self.w_in_Q.shape[1] != N:
            raise DimensionError(f"w_in_Q has {self.w_in_Q.shape[1]} columns, spectrum has N={N}")
        if self.w_fb_Q is not None and np.shape(self.w_fb_Q)[1] != N:
            raise DimensionError("w_fb_Q width does not match the spectrum")
        if self.basis_Q is not None and np.shape(self.basis_Q) != (N, N):
            raise DimensionError(f"basis_Q must be {N}x{N}")

    @property
    def n_r(self) -> int:
        return len(self.lambda_real)

    @property
    def n_i(self) -> int:
        return len(self.lambda_cpx)

    @property
    def units(self) -> int:
        return self.n_r + 2 * self.n_i

    @property
    def d_in(self) -> int:
        return self.w_in_Q.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Full spectrum in P layout ``(l_1..l_nr, mu_1, conj(mu_1), ..)``."""
        pairs = np.empty(2 * self.n_i, dtype=complex)
        pairs[0::2] = self.lambda_cpx
        pairs[1::2] = self.lambda_cpx.conj()
        return np.concatenate([self.lambda_real.astype(complex), pairs])

    @property
    def lanes(self) -> np.ndarray:
        """One eigenvalue per independent lane: reals then canonical pair members."""
        return np.concatenate([self.lambda_real.astype(complex), self.lambda_cpx])

    def _require_basis(self):
        if self.basis_Q is None:
            raise ESNError("this spectral reservoir was stored without its basis")
        return self.basis_Q

    @property
    def basis_P(self) -> np.ndarray:
        """Complex eigenvector matrix ``[u.., v_1, conj(v_1), ..]`` rebuilt from Q."""
        Q = self._require_basis()
        n_r = self.n_r
        v = Q[:, n_r::2] + 1j * Q[:, n_r + 1::2]
        P = np.empty(Q.shape, dtype=complex)
        P[:, :n_r] = Q[:, :n_r]
        P[:, n_r::2] = v
        P[:, n_r + 1::2] = v.conj()
        return P

    @cached_property
    def _Q_lu(self):
        return scipy.linalg.lu_factor(self._require_basis(), check_finite=False)

    @cached_property
    def gram_Q(self) -> np.ndarray:
        """``Q^T Q``, the reservoir block of the EET regularizer (computed once)."""
        Q = self._require_basis()
        return Q.T @ Q

    @cached_property
    def _Q_r(self) -> np.ndarray:
        # Triangular factor of Q^T Q without forming it: Q = O R.
        return scipy.linalg.qr(self._require_basis(), mode="r", check_finite=False)[0]

    def to_original(self, q_states) -> np.ndarray:
        """Map Q-basis states back: ``r = [r]_Q Q^-1``."""
        q = np.asarray(q_states)
        # r Q = q  <=>  Q^T r^T = q^T
        return scipy.linalg.lu_solve(self._Q_lu, q.T, trans=1, check_finite=False).T

    def from_original(self, states) -> np.ndarray:
        return np.asarray(states) @ self._require_basis()

    def to_P(self, q_states) -> np.ndarray:
        """Full complex P-basis states (pair members and their conjugates)."""
        q = np.asarray(q_states, dtype=float)
        n_r = self.n_r
        out = np.empty(q.shape, dtype=complex)
        out[..., :n_r] = q[..., :n_r]
        c = np.ascontiguousarray(q[..., n_r:]).view(np.complex128)
        out[..., n_r::2] = c
        out[..., n_r + 1::2] = c.conj()
        return out

    def _derive(self, **changes) -> "SpectralReservoir":
        # Same basis: keep the cached factorization and Gram matrix.
        out = dataclasses.replace(self, **changes)
        for key in ("_Q_lu", "_Q_r", "gram_Q"):
            if key in self.__dict__:
                out.__dict__[key] = self.__dict__[key]
        return out

    def with_leak(self, lr: float) -> "SpectralReservoir":
        """Eigenvalues ``lr*l + (1-lr)`` and input/feedback weights times ``lr``."""
        if not 0 < lr <= 1:
            raise ValueError(f"leak rate must lie in (0, 1], got {lr}")
        if lr == 1:
            return self
        return self._derive(
            lambda_real=lr * self.lambda_real + (1 - lr),
            lambda_cpx=lr * self.lambda_cpx + (1 - lr), w_in_Q=lr * self.w_in_Q,
            w_fb_Q=None if self.w_fb_Q is None else lr * self.w_fb_Q)

    def with_spectrum(self, lambda_real, lambda_cpx) -> "SpectralReservoir":
        out = self._derive(lambda_real=lambda_real, lambda_cpx=lambda_cpx)
        if len(out.lambda_real) != self.n_r or len(out.lambda_cpx) != self.n_i:
            raise DimensionError("replacement spectrum must keep the real/pair partition")
        return out

    def scaled(self, factor: float) -> "SpectralReservoir":
        """Spectrum multiplied by ``factor`` (W -> factor * W)."""
        return self.with_spectrum(factor * self.lambda_real, factor * self.lambda_cpx)

    def with_input_weights(self, w_in_Q) -> "SpectralReservoir":
        return self._derive(w_in_Q=w_in_Q)

    def step(self, q: np.ndarray, drive: np.ndarray,
             out: Optional[np.ndarray] = None) -> np.ndarray:
        """One update ``[r]_Q <- [r]_Q [W]_Q + drive`` using the complex view."""
        if out is None:
            out = np.empty_like(q)
        n_r = self.n_r
        np.multiply(q[:n_r], self.lambda_real, out=out[:n_r])
        np.multiply(pairs_view(q, n_r), self.lambda_cpx, out=pairs_view(out, n_r))
        out += drive
        return out


# --- construction -----------------------------------------------------------

def partition_eigenvalues(lam: np.ndarray):
    """Split a real matrix's spectrum into sorted reals and canonical pair members.

    Returns ``(real_idx, pair_idx)`` index arrays into ``lam``. Reals are
    ordered by modulus descending then value ascending; pairs (positive
    imaginary member) by modulus descending then phase ascending.
    """
    lam = np.asarray(lam)
    real_idx = np.flatnonzero(lam.imag == 0)
    pair_idx = np.flatnonzero(lam.imag > 0)
    n_neg = int(np.count_nonzero(lam.imag < 0))
    if n_neg != len(pair_idx):
        raise ESNError(f"spectrum is not conjugate-symmetric ({len(pair_idx)} vs {n_neg} members)")
    lr, lc = lam[real_idx].real, lam[pair_idx]
    real_idx = real_idx[np.lexsort((lr, -np.abs(lr)))]
    pair_idx = pair_idx[np.lexsort((np.angle(lc), -np.abs(lc)))]
    return real_idx, pair_idx


def _worst_cluster(lam: np.ndarray) -> str:
    lam = np.asarray(lam)
    if len(lam) < 2:
        return "n/a"
    d = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    members = int(np.count_nonzero(np.abs(lam - lam[i]) <= max(10 * d[i, j], 1e-8)))
    return f"{members} eigenvalues near {lam[i]:.6g} (closest pair {d[i, j]:.3g} apart)"


def diagonalize(res: DenseReservoir, cond_limit: float = COND_LIMIT) -> SpectralReservoir:
    """Eigendecompose W and express the reservoir in the real Q basis."""
    W = res.dense_W()
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError("W must be square")
    if np.iscomplexobj(W):
        raise ESNError("diagonalize expects a real reservoir matrix")
    lam, V = scipy.linalg.eig(W, check_finite=False)
    real_idx, pair_idx = partition_eigenvalues(lam)
    Q = np.hstack([V[:, real_idx].real, interleave(V[:, pair_idx].real, V[:, pair_idx].imag)])
    lu, cond = factor_basis(Q)
    if not cond <= cond_limit:
        raise NearDefectiveError(
            f"near-defective matrix: eigenvector basis condition estimate {cond:.3g} exceeds "
            f"{cond_limit:.0e}; offending cluster: {_worst_cluster(lam)}")
    spec = SpectralReservoir(
        lambda_real=lam[real_idx].real, lambda_cpx=lam[pair_idx], w_in_Q=res.W_in @ Q,
        w_fb_Q=None if res.W_fb is None else res.W_fb @ Q, basis_Q=Q, cond_P=cond)
    spec.__dict__["_Q_lu"] = lu
    return spec


# --- dynamics ---------------------------------------------------------------

def run_diagonal(spec: SpectralReservoir, inputs, readout: Optional[Readout] = None,
                 teacher=None) -> Trajectory:
    """Sequential Q-basis run from a zero state. States are ``[r(t)]_Q``.

    Feedback follows :func:`linres.esn.run_reservoir`: teacher-forced when
    ``teacher`` is given, closed loop through ``readout`` otherwise.
    """
    u = _check_inputs(inputs, spec.d_in)
    T, N, n_r = len(u), spec.units, spec.n_r
    if readout is not None and readout.basis != "Q":
        raise BasisMismatchError(f"Q-basis states need a Q-basis readout, got {readout.basis!r}")
    y_prev_seq = _feedback_source(spec.w_fb_Q, readout, teacher, T)
    drive = u @ spec.w_in_Q
    if spec.w_fb_Q is not None and y_prev_seq is not None:
        drive += y_prev_seq @ spec.w_fb_Q
    closed_loop = spec.w_fb_Q is not None and y_prev_seq is None
    teacher_prev = None if teacher is None else shift_down(_as_2d(teacher))

    S = np.empty((T, N))
    outputs = None if readout is None else np.empty((T, readout.d_out))
    Sr, Sc = S[:, :n_r], pairs_view(S, n_r)
    lr, lc = spec.lambda_real, spec.lambda_cpx
    y = np.zeros(readout.d_out) if readout is not None else None
    for t in range(T):
        if t == 0:
            S[0] = drive[0]
        else:
            np.multiply(Sr[t - 1], lr, out=Sr[t])
            np.multiply(Sc[t - 1], lc, out=Sc[t])
            S[t] += drive[t]
        if closed_loop:
            S[t] += y @ spec.w_fb_Q
        if readout is not None:
            y_in = y if teacher_prev is None else teacher_prev[t]
            y = readout_step(readout, S[t], y_in, basis="Q")
            outputs[t] = y
    return Trajectory(S, outputs)


# --- readout in the eigenbasis ------------------------------------------------

def ewt_transform(readout: Readout, spec: SpectralReservoir) -> Readout:
    """Map an original-basis readout into the Q basis: ``res_block -> Q^-1 res_block``."""
    if readout.basis != "original":
        raise BasisMismatchError(f"EWT expects an original-basis readout, got {readout.basis!r}")
    res_Q = scipy.linalg.lu_solve(spec._Q_lu, readout.res_block, check_finite=False)
    return Readout(res_block=res_Q, bias_block=readout.bias_block, out_block=readout.out_block,
                   basis="Q", fallback=readout.fallback)


def eet_regularizer(spec: SpectralReservoir, n_lead: int) -> np.ndarray:
    """``blockdiag(I_{n_lead}, Q^T Q)``."""
    N = spec.units
    R = np.zeros((n_lead + N, n_lead + N))
    R[:n_lead, :n_lead] = np.eye(n_lead)
    R[n_lead:, n_lead:] = spec.gram_Q
    return R


def eet_factor(spec: SpectralReservoir, n_lead: int) -> np.ndarray:
    """Upper-triangular ``L`` with ``L^T L = blockdiag(I_{n_lead}, Q^T Q)``."""
    N = spec.units
    L = np.zeros((n_lead + N, n_lead + N))
    L[:n_lead, :n_lead] = np.eye(n_lead)
    L[n_lead:, n_lead:] = spec._Q_r
    return L


def eet_train(q_states, y_prev, targets, alpha: float, spec: SpectralReservoir, *,
              use_bias: bool = True) -> Readout:
    """Ridge readout trained directly on Q-basis states.

    Solves ``([X]_Q^T [X]_Q + alpha blockdiag(I, Q^T Q)) W = [X]_Q^T Y``, which
    reproduces ``ewt_transform(train_ridge(original states))``. Pass the training
    rows only; ``y_prev`` is None when the readout has no previous-output block.
    """
    targets = _as_2d(targets)
    X = design_matrix(q_states, y_prev, use_bias)
    n_lead = X.shape[1] - spec.units
    return train_ridge(X, targets, alpha, use_bias=use_bias, use_feedback=y_prev is not None,
                       basis="Q", factor=eet_factor(spec, n_lead))


# --- arbitrary change of basis (used as an equivalence oracle) ----------------

def change_basis(res: DenseReservoir, P: np.ndarray) -> DenseReservoir:
    """Express a reservoir in an arbitrary invertible basis ``P`` (possibly complex).

    ``[W]_P = P^-1 W P``, ``[W_in]_P = W_in P``, ``[W_fb]_P = W_fb P``.
    """
    P = np.asarray(P)
    W = res.dense_W()
    W_P = np.linalg.solve(P, W @ P)
    return DenseReservoir(W=W_P, W_in=res.W_in @ P,
                          W_fb=None if res.W_fb is None else res.W_fb @ P)


def transform_readout(readout: Readout, P: np.ndarray, basis: str = "P") -> Readout:
    """``[W_out,res]_P = P^-1 W_out,res``; bias and previous-output blocks unchanged."""
    return Readout(res_block=np.linalg.solve(P, readout.res_block), bias_block=readout.bias_block,
                   out_block=readout.out_block, basis=basis, fallback=readout.fallback)
