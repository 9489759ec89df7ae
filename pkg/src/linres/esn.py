"""Baseline linear echo state network.

Row-vector convention throughout: a state ``r`` has shape ``(N,)``, a batch of
states ``(T, N)``, and the reservoir step is ``r(t) = r(t-1) W + u(t) W_in +
y(t-1) W_fb``. This dense path is the reference every diagonal path is checked
against.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import rng as _rng

log = logging.getLogger(__name__)

BASES = ("original", "P", "Q")
SPARSE_THRESHOLD = 0.5


class ESNError(Exception):
    """Base class for errors raised by this package."""


class RegenerationError(ESNError):
    """The random draw cannot be scaled to the requested spectral radius."""


class DimensionError(ESNError, ValueError):
    pass


class DivergenceError(ESNError):
    """States grew past floating-point range, so no readout can be fitted."""


class BasisMismatchError(ESNError, ValueError):
    pass


@dataclass(frozen=True)
class ESNConfig:
    """Hyperparameters of a linear ESN.

    ``units`` is N, ``d_in``/``d_out`` the signal widths. Connectivities are the
    Bernoulli keep-probabilities of the weight masks.
    """

    units: int = 100
    d_in: int = 1
    d_out: int = 1
    spectral_radius: float = 0.9
    leak_rate: float = 1.0
    input_scaling: float = 1.0
    connectivity_r: float = 1.0
    connectivity_in: float = 1.0
    connectivity_fb: float = 1.0
    ridge_alpha: float = 1e-8
    use_bias: bool = True
    use_feedback: bool = False
    seed: int = 0
    washout: int = 100

    def __post_init__(self):
        if int(self.units) < 1:
            raise ValueError(f"units must be >= 1, got {self.units}")
        if int(self.d_in) < 1 or int(self.d_out) < 1:
            raise ValueError("d_in and d_out must be >= 1")
        if not self.spectral_radius > 0:
            raise ValueError(f"spectral_radius must be > 0, got {self.spectral_radius}")
        if not 0 < self.leak_rate <= 1:
            raise ValueError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not self.input_scaling > 0:
            raise ValueError(f"input_scaling must be > 0, got {self.input_scaling}")
        # An empty W is a valid (stateless) draw; it just cannot be rescaled.
        if not 0 <= self.connectivity_r <= 1:
            raise ValueError(f"connectivity_r must lie in [0, 1], got {self.connectivity_r}")
        for name in ("connectivity_in", "connectivity_fb"):
            c = getattr(self, name)
            if not 0 < c <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {c}")
        if self.ridge_alpha < 0:
            raise ValueError(f"ridge_alpha must be >= 0, got {self.ridge_alpha}")
        if self.washout < 0:
            raise ValueError(f"washout must be >= 0, got {self.washout}")
        _rng.check_seed(self.seed)

    @property
    def extended_width(self) -> int:
        """N' = N + bias column + previous-output columns."""
        return self.units + int(self.use_bias) + (self.d_out if self.use_feedback else 0)

    def replace(self, **changes) -> "ESNConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DenseReservoir:
    """Weights of a linear reservoir in the original basis.

    ``W`` is a dense ``ndarray`` or a ``scipy.sparse.csr_array``.
    """

    W: object
    W_in: np.ndarray
    W_fb: Optional[np.ndarray] = None

    @property
    def units(self) -> int:
        return self.W.shape[0]

    @property
    def d_in(self) -> int:
        return self.W_in.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.W)

    def dense_W(self) -> np.ndarray:
        return self.W.toarray() if self.is_sparse else np.asarray(self.W)

    @cached_property
    def _W_T(self):
        # r @ W computed as W.T @ r on a row-compressed transpose.
        return self.W.T.tocsr() if self.is_sparse else None

    def step(self, r: np.ndarray, drive: np.ndarray) -> np.ndarray:
        """One reservoir update ``r W + drive``; ``drive`` holds the input terms."""
        if self._W_T is not None:
            return self._W_T @ r + drive
        return r @ self.W + drive


@dataclass
class Readout:
    """Trained output weights split into bias / previous-output / reservoir blocks.

    ``fallback`` is set when the ridge system was singular and a minimum-norm
    least-squares solution was used instead.
    """

    res_block: np.ndarray
    bias_block: Optional[np.ndarray] = None
    out_block: Optional[np.ndarray] = None
    basis: str = "original"
    fallback: bool = False

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        self.res_block = np.atleast_2d(self.res_block)
        if self.bias_block is not None:
            self.bias_block = np.asarray(self.bias_block).reshape(1, -1)
        if self.out_block is not None:
            self.out_block = np.atleast_2d(self.out_block)

    @property
    def d_out(self) -> int:
        return self.res_block.shape[1]

    @property
    def use_bias(self) -> bool:
        return self.bias_block is not None

    @property
    def use_feedback(self) -> bool:
        return self.out_block is not None

    @property
    def W_out(self) -> np.ndarray:
        """Stacked ``[bias; out; res]`` matrix of shape ``(N', D_out)``."""
        blocks = [b for b in (self.bias_block, self.out_block) if b is not None]
        return np.vstack(blocks + [self.res_block])

    @classmethod
    def from_stacked(cls, W_out, *, use_bias, use_feedback, d_out, basis="original",
                     fallback=False) -> "Readout":
        W_out = np.atleast_2d(W_out)
        i = 0
        bias = out = None
        if use_bias:
            bias, i = W_out[:1], 1
        if use_feedback:
            out, i = W_out[i:i + d_out], i + d_out
        return cls(res_block=W_out[i:], bias_block=bias, out_block=out, basis=basis,
                   fallback=fallback)


@dataclass
class TaskDataset:
    """Input/target sequences with split boundaries.

    Rows ``[0, washout)`` are discarded, ``[washout, train_end)`` fit the readout,
    ``[train_end, valid_end)`` select hyperparameters and ``[valid_end, T)`` test.
    """

    inputs: np.ndarray
    targets: np.ndarray
    washout: int = 0
    train_end: Optional[int] = None
    valid_end: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        self.inputs = _as_2d(self.inputs)
        self.targets = _as_2d(self.targets)
        T = len(self.inputs)
        if len(self.targets) != T:
            raise DimensionError(f"inputs have {T} rows but targets have {len(self.targets)}")
        if self.train_end is None:
            self.train_end = T
        if self.valid_end is None:
            self.valid_end = self.train_end
        if not 0 <= self.washout <= self.train_end <= self.valid_end <= T:
            raise ValueError(
                f"split boundaries must satisfy 0 <= washout <= train_end <= valid_end <= T, "
                f"got {self.washout}, {self.train_end}, {self.valid_end}, {T}")

    def __len__(self):
        return len(self.inputs)

    @property
    def train(self) -> slice:
        return slice(self.washout, self.train_end)

    @property
    def valid(self) -> slice:
        return slice(self.train_end, self.valid_end)

    @property
    def test(self) -> slice:
        return slice(self.valid_end, len(self))

    def previous_targets(self) -> np.ndarray:
        """Teacher-forced ``y(t-1)`` sequence with ``y(0) = 0``."""
        return shift_down(self.targets)


class Trajectory(NamedTuple):
    states: np.ndarray
    outputs: Optional[np.ndarray] = None


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def shift_down(y: np.ndarray) -> np.ndarray:
    """Sequence delayed by one step, zero-filled at t=1."""
    out = np.zeros_like(y)
    out[1:] = y[:-1]
    return out


# --- generation -------------------------------------------------------------

def spectral_radius(W) -> float:
    """Maximum eigenvalue modulus by full eigendecomposition."""
    W = W.toarray() if sp.issparse(W) else np.asarray(W)
    if W.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(W, check_finite=False))))


def _masked(rng_mask, rng_vals, shape, p, sampler):
    mask = rng_mask.random(shape) < p
    out = np.zeros(shape)
    out[mask] = sampler(rng_vals, int(mask.sum()))
    return out


_normal = lambda g, n: g.standard_normal(n)  # noqa: E731
_uniform = lambda g, n: g.uniform(-1.0, 1.0, n)  # noqa: E731


def draw_input_weights(config: ESNConfig):
    """Sample ``(W_in, W_fb)``; nonzeros uniform(-1, 1), W_in times input_scaling."""
    N, seed = config.units, config.seed
    W_in = config.input_scaling * _masked(
        _rng.stream(seed, "input_mask"), _rng.stream(seed, "input_values"),
        (config.d_in, N), config.connectivity_in, _uniform)
    W_fb = None
    if config.use_feedback:
        W_fb = _masked(_rng.stream(seed, "feedback_mask"), _rng.stream(seed, "feedback_values"),
                       (config.d_out, N), config.connectivity_fb, _uniform)
    return W_in, W_fb


def draw_dense(config: ESNConfig) -> DenseReservoir:
    """Sample W (unscaled, standard normal nonzeros) and the input/feedback weights."""
    N, seed = config.units, config.seed
    W = _masked(_rng.stream(seed, "reservoir_mask"), _rng.stream(seed, "reservoir_values"),
                (N, N), config.connectivity_r, _normal)
    if config.connectivity_r < SPARSE_THRESHOLD:
        W = sp.csr_array(W)
    W_in, W_fb = draw_input_weights(config)
    return DenseReservoir(W=W, W_in=W_in, W_fb=W_fb)


def scale_spectral_radius(W, rho: float):
    """Return ``W`` rescaled so its spectral radius equals ``rho``."""
    current = spectral_radius(W)
    if current == 0.0:
        nnz = W.nnz if sp.issparse(W) else int(np.count_nonzero(W))
        raise RegenerationError(
            f"spectral radius of the {W.shape[0]}x{W.shape[0]} draw is exactly 0 "
            f"({nnz} nonzeros); cannot rescale to {rho}, draw again with another seed "
            f"or higher connectivity")
    return W * (rho / current)


def generate_dense(config: ESNConfig) -> DenseReservoir:
    """Draw a reservoir and scale W to ``config.spectral_radius`` (no leak applied)."""
    res = draw_dense(config)
    return dataclasses.replace(res, W=scale_spectral_radius(res.W, config.spectral_radius))


def apply_leak(res: DenseReservoir, lr: float) -> DenseReservoir:
    """Fold the leaking rate into the weights: ``lr W + (1-lr) I``, ``lr W_in``, ``lr W_fb``."""
    if not 0 < lr <= 1:
        raise ValueError(f"leak rate must lie in (0, 1], got {lr}")
    if lr == 1:
        return res
    N = res.units
    if res.is_sparse:
        W = (lr * res.W + (1 - lr) * sp.eye_array(N, format="csr")).tocsr()
    else:
        W = lr * np.asarray(res.W) + (1 - lr) * np.eye(N)
    W_fb = None if res.W_fb is None else lr * res.W_fb
    return DenseReservoir(W=W, W_in=lr * res.W_in, W_fb=W_fb)


# --- dynamics ---------------------------------------------------------------

def _check_inputs(inputs, d_in) -> np.ndarray:
    u = _as_2d(inputs)
    if u.shape[1] != d_in:
        raise DimensionError(f"inputs have {u.shape[1]} columns, reservoir expects D_in={d_in}")
    return u


def _feedback_source(W_fb, readout, teacher, T):
    if W_fb is None:
        return None
    if teacher is not None:
        teacher = _as_2d(teacher)
        if len(teacher) != T or teacher.shape[1] != W_fb.shape[0]:
            raise DimensionError(f"teacher signal must have shape ({T}, {W_fb.shape[0]})")
        return shift_down(teacher)
    if readout is None:
        raise ESNError("feedback is enabled: pass a readout (closed loop) or a teacher signal")
    return None


def run_reservoir(res: DenseReservoir, inputs, readout: Optional[Readout] = None,
                  teacher=None, basis: str = "original") -> Trajectory:
    """Run the dense dynamics from ``r(0) = 0``, ``y(0) = 0``.

    With feedback weights present, ``y(t-1)`` comes from ``teacher`` when given
    (teacher forcing) and from the readout's own outputs otherwise. Outputs are
    returned whenever a readout is supplied. ``basis`` names the basis the
    weights are expressed in and must match the readout's.
    """
    u = _check_inputs(inputs, res.d_in)
    T, N = len(u), res.units
    drive = u @ res.W_in
    y_prev_seq = _feedback_source(res.W_fb, readout, teacher, T)
    if readout is not None and readout.basis != basis:
        raise BasisMismatchError(f"states are in basis {basis!r}, readout in {readout.basis!r}")
    if y_prev_seq is not None:
        drive = drive + y_prev_seq @ res.W_fb
    closed_loop = res.W_fb is not None and y_prev_seq is None
    teacher_prev = None if teacher is None else shift_down(_as_2d(teacher))

    dtype = np.result_type(drive.dtype, res.W.dtype)
    states = np.empty((T, N), dtype=dtype)
    outputs = None
    if readout is not None:
        outputs = np.empty((T, readout.d_out), dtype=np.result_type(dtype, readout.W_out.dtype))
    r = np.zeros(N, dtype=dtype)
    y = np.zeros(readout.d_out) if readout is not None else None
    for t in range(T):
        d = drive[t]
        if closed_loop:
            d = d + y @ res.W_fb
        r = res.step(r, d)
        states[t] = r
        if readout is not None:
            y_in = y if teacher_prev is None else teacher_prev[t]
            y = readout_step(readout, r, y_in, basis=basis)
            outputs[t] = y
    return Trajectory(states, outputs)


def readout_step(readout: Readout, r_t, y_prev=None, basis: str = "original") -> np.ndarray:
    """``y(t) = [1, y(t-1), r(t)] W_out`` with absent blocks dropped."""
    if readout.basis != basis:
        raise BasisMismatchError(f"state is in basis {basis!r}, readout in {readout.basis!r}")
    y = np.asarray(r_t) @ readout.res_block
    if readout.bias_block is not None:
        y = y + readout.bias_block[0]
    if readout.out_block is not None:
        y = y + np.asarray(y_prev) @ readout.out_block
    return y


def predict(readout: Readout, states, y_prev=None) -> np.ndarray:
    """Teacher-forced outputs for a whole state sequence."""
    X = design_matrix(states, y_prev if readout.use_feedback else None, readout.use_bias)
    return X @ readout.W_out


# --- training ---------------------------------------------------------------

def design_matrix(states, y_prev=None, use_bias: bool = True) -> np.ndarray:
    """Extended states ``[1, y(t-1), r(t)]`` row by row."""
    states = np.asarray(states)
    cols = []
    if use_bias:
        cols.append(np.ones((len(states), 1), dtype=states.dtype))
    if y_prev is not None:
        cols.append(_as_2d(y_prev))
    cols.append(states)
    return np.hstack(cols) if len(cols) > 1 else states


def solve_ridge(gram, xty, alpha: float, regularizer=None, X=None, Y=None):
    """Solve ``(gram + alpha * regularizer) W = xty``.

    ``regularizer`` defaults to the identity. Returns ``(W, fallback)``. With
    ``alpha == 0`` and ``X``/``Y`` given, the least-squares problem is solved
    directly; a rank-deficient or singular system yields the minimum-norm
    solution and ``fallback`` is True.
    """
    if not alpha and X is not None and Y is not None:
        # Unregularized: least squares on X itself avoids squaring its condition number.
        W, _, rank, _ = scipy.linalg.lstsq(X, Y, check_finite=False)
        if rank < X.shape[1]:
            log.warning("design matrix rank deficient (%d < %d); minimum-norm solution used",
                        rank, X.shape[1])
        return W, bool(rank < X.shape[1])
    A = gram.copy()
    if alpha:
        if regularizer is None:
            A[np.diag_indices_from(A)] += alpha
        else:
            A += alpha * regularizer
    with warnings.catch_warnings():
        # alpha > 0: ill-conditioning is expected on the small end of the grid.
        warnings.simplefilter("ignore" if alpha else "error", scipy.linalg.LinAlgWarning)
        for kind in ("pos", "sym") if alpha else ("pos",):
            try:
                return scipy.linalg.solve(A, xty, assume_a=kind, check_finite=False), False
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
                continue
    log.warning("ridge system singular (alpha=%g); using minimum-norm least squares", alpha)
    if X is not None and Y is not None:
        W = scipy.linalg.lstsq(X, Y, check_finite=False)[0]
    else:
        W = scipy.linalg.lstsq(A, xty, check_finite=False)[0]
    return W, True


def ridge_path(X, Y, alphas, factor=None):
    """Ridge solutions for several alphas from one SVD; list of ``(W, fallback)``.

    ``factor`` is an upper-triangular ``L`` with ``L^T L`` equal to the
    regularizer (identity when None). Substituting ``z = L W`` turns the
    problem into standard ridge on ``X L^-1``, solved through the SVD, which
    avoids squaring the condition number of ``X``. ``alpha == 0`` gives the
    minimum-norm least-squares solution; ``fallback`` marks a rank-deficient
    design in that case.
    """
    X, Y = np.asarray(X, dtype=float), _as_2d(Y)
    if not np.isfinite(X).all():
        raise DivergenceError("design matrix has non-finite entries; the reservoir diverged")
    if factor is not None:
        X = scipy.linalg.solve_triangular(factor, X.T, trans="T", check_finite=False).T
    U, sv, Vt = scipy.linalg.svd(X, full_matrices=False, check_finite=False,
                                 lapack_driver="gesdd")
    UtY = U.T @ Y
    cutoff = sv[0] * (max(X.shape) * np.finfo(float).eps) if sv.size else 0.0
    rank = int(np.count_nonzero(sv > cutoff))
    out = []
    for alpha in alphas:
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if alpha:
            # sv / (sv^2 + alpha) without squaring, so huge singular values do not overflow.
            with np.errstate(divide="ignore"):
                gain = np.where(sv > 0, 1.0 / (sv + alpha / sv), 0.0)
        else:
            gain = np.divide(1.0, sv, out=np.zeros_like(sv), where=sv > cutoff)
        Z = Vt.T @ (gain[:, None] * UtY)
        if factor is not None:
            Z = scipy.linalg.solve_triangular(factor, Z, check_finite=False)
        out.append((Z, not alpha and rank < X.shape[1]))
    return out


def regularizer_factor(regularizer) -> Optional[np.ndarray]:
    """Upper Cholesky factor of a regularizer, or None if it is not positive definite."""
    try:
        return scipy.linalg.cholesky(regularizer, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        return None


def train_ridge(X, Y, alpha: float, *, use_bias: bool = False, use_feedback: bool = False,
                basis: str = "original", regularizer=None, factor=None) -> Readout:
    """Fit ``W_out = (X^T X + alpha R)^-1 X^T Y`` on an extended-state matrix.

    ``use_bias``/``use_feedback`` describe which leading columns of ``X`` are the
    bias and previous-output blocks, so the result can be split into a
    :class:`Readout`. ``R`` is the identity unless ``regularizer`` (or its
    upper Cholesky ``factor``) is given.
    """
    X, Y = np.asarray(X, dtype=float), _as_2d(Y)
    if len(X) != len(Y):
        raise DimensionError(f"X has {len(X)} rows, Y has {len(Y)}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if factor is None and regularizer is not None:
        factor = regularizer_factor(regularizer)
        if factor is None:
            W, fallback = solve_ridge(X.T @ X, X.T @ Y, alpha, regularizer, X=X, Y=Y)
            return Readout.from_stacked(W, use_bias=use_bias, use_feedback=use_feedback,
                                        d_out=Y.shape[1], basis=basis, fallback=fallback)
    (W, fallback), = ridge_path(X, Y, [alpha], factor)
    if fallback:
        log.warning("design matrix rank deficient; minimum-norm solution used")
    return Readout.from_stacked(W, use_bias=use_bias, use_feedback=use_feedback,
                                d_out=Y.shape[1], basis=basis, fallback=fallback)


def fit_readout(states, dataset: TaskDataset, alpha: float, *, use_bias: bool = True,
                use_feedback: bool = False, basis: str = "original", regularizer=None,
                factor=None) -> Readout:
    """Train on the dataset's training rows (washout removed), teacher forced."""
    y_prev = dataset.previous_targets() if use_feedback else None
    X = design_matrix(states, y_prev, use_bias)[dataset.train]
    return train_ridge(X, dataset.targets[dataset.train], alpha, use_bias=use_bias,
                       use_feedback=use_feedback, basis=basis, regularizer=regularizer,
                       factor=factor)
