import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from helpers import dense, rel_err
from linres.bench.metrics import rmse
from linres.bench.mso import gen_mso
from linres.esn import (BasisMismatchError, DenseReservoir, ESNConfig, Readout, TaskDataset,
                        apply_leak, design_matrix, fit_readout, generate_dense, readout_step,
                        run_reservoir, train_ridge)
from linres.spectral import (NearDefectiveError, SpectralReservoir, change_basis, diagonalize,
                             eet_regularizer, eet_train, ewt_transform, partition_eigenvalues,
                             run_diagonal, transform_readout)


def _inputs(T, d=1, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, (T, d))


def _explicit_W_Q(spec):
    """[W]_Q as a dense block-diagonal matrix (row-vector convention)."""
    N, n_r = spec.units, spec.n_r
    M = np.zeros((N, N))
    M[np.arange(n_r), np.arange(n_r)] = spec.lambda_real
    for k, mu in enumerate(spec.lambda_cpx):
        i = n_r + 2 * k
        M[i:i + 2, i:i + 2] = [[mu.real, mu.imag], [-mu.imag, mu.real]]
    return M


# --- diagonalize ----------------------------------------------------------------

def test_already_diagonal():
    spec = diagonalize(DenseReservoir(W=np.diag([0.3, -0.5]), W_in=np.ones((1, 2))))
    assert sorted(spec.lambda_real) == [-0.5, 0.3]
    assert spec.n_i == 0


def test_rotation_spectrum():
    W = 0.8 * np.array([[0.0, -1.0], [1.0, 0.0]])
    spec = diagonalize(DenseReservoir(W=W, W_in=np.ones((1, 2))))
    assert spec.n_r == 0
    assert np.allclose(spec.lambda_cpx, [0.8j])


def test_radius_consistent_with_generation():
    spec = diagonalize(dense(100, seed=11))
    assert abs(np.abs(spec.eigenvalues).max() - 0.9) <= 0.9e-6


def test_canonical_ordering():
    spec = diagonalize(dense(60, seed=2))
    assert np.all(spec.lambda_cpx.imag > 0)
    mod = np.abs(spec.lambda_cpx)
    assert np.all(np.diff(mod) <= 1e-15)
    assert np.all(np.diff(np.abs(spec.lambda_real)) <= 1e-15)
    assert spec.n_r + 2 * spec.n_i == 60


def test_partition_rejects_asymmetric_spectrum():
    with pytest.raises(Exception, match="conjugate"):
        partition_eigenvalues(np.array([1j, 0.5]))


def test_near_defective_raises():
    W = np.array([[0.5, 1.0], [0.0, 0.5]])  # Jordan block
    with pytest.raises(NearDefectiveError, match="near-defective") as exc:
        diagonalize(DenseReservoir(W=W, W_in=np.ones((1, 2))))
    assert "0.5" in str(exc.value)


def test_basis_reconstructs_W():
    res = dense(30, seed=3)
    spec = diagonalize(res)
    P = spec.basis_P
    W = P @ np.diag(spec.eigenvalues) @ np.linalg.inv(P)
    assert np.max(np.abs(W.imag)) <= 1e-8
    assert rel_err(W.real, res.dense_W()) <= 1e-8
    # Pair columns are conjugates in the P layout.
    n_r = spec.n_r
    assert np.array_equal(P[:, n_r + 1::2], P[:, n_r::2].conj())
    assert np.allclose(np.linalg.norm(P, axis=0), 1.0, atol=1e-12)


def test_to_from_original_roundtrip():
    spec = diagonalize(dense(25, seed=1))
    r = np.random.default_rng(0).normal(size=(7, 25))
    assert np.allclose(spec.to_original(spec.from_original(r)), r, atol=1e-10)


# --- run_diagonal ---------------------------------------------------------------

def test_scalar_recursion():
    spec = SpectralReservoir(lambda_real=[0.5], lambda_cpx=[], w_in_Q=[[1.0]])
    assert np.allclose(run_diagonal(spec, np.ones(3)).states[:, 0], [1.0, 1.5, 1.75])


def test_quarter_rotation_cycle():
    spec = SpectralReservoir(lambda_real=[], lambda_cpx=[1j], w_in_Q=[[1.0, 0.0]])
    u = np.zeros(5)
    u[0] = 1
    S = run_diagonal(spec, u).states
    assert np.allclose(S[:4], [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)


def test_matches_dense_path_n100():
    res = dense(100, seed=21)
    spec = diagonalize(res)
    u = _inputs(400)
    assert rel_err(spec.to_original(run_diagonal(spec, u).states),
                   run_reservoir(res, u).states) <= 1e-8


@given(seed=st.integers(0, 10**6), N=st.integers(1, 40), T=st.integers(1, 60))
def test_pointwise_equals_matrix(seed, N, T):
    spec = diagonalize(dense(N, seed=seed))
    u = _inputs(T, seed=seed)
    explicit = run_reservoir(DenseReservoir(W=_explicit_W_Q(spec), W_in=spec.w_in_Q), u).states
    assert np.max(np.abs(run_diagonal(spec, u).states - explicit)) <= 1e-12


@given(seed=st.integers(0, 10**6), N=st.integers(2, 40))
def test_complex_path_conjugate_symmetry_and_reality(seed, N):
    res = dense(N, seed=seed)
    spec = diagonalize(res)
    P = spec.basis_P
    u = _inputs(50, seed=seed)
    # Complex P-basis dynamics with an explicit diagonal matrix.
    S_P = run_reservoir(DenseReservoir(W=np.diag(spec.eigenvalues), W_in=res.W_in @ P),
                        u).states
    n_r = spec.n_r
    assert np.max(np.abs(S_P[:, n_r + 1::2] - S_P[:, n_r::2].conj()), initial=0.0) <= 1e-12
    assert np.max(np.abs(S_P[:, :n_r].imag), initial=0.0) <= 1e-12
    r = np.linalg.solve(P.T, S_P.T).T  # r = [r]_P P^-1
    scale = np.max(np.abs(r))
    assert np.max(np.abs(r.imag)) <= 1e-10 * scale
    # The real Q path carries the same pair components.
    assert np.max(np.abs(spec.to_P(run_diagonal(spec, u).states) - S_P)) <= 1e-12 * max(scale, 1)


def test_with_leak_matches_diagonalized_leaky_matrix():
    res = dense(40, seed=6)
    u = _inputs(100)
    lr = 0.35
    spec = diagonalize(res).with_leak(lr)
    leaky = apply_leak(res, lr)
    assert rel_err(spec.to_original(run_diagonal(spec, u).states),
                   run_reservoir(leaky, u).states) <= 1e-8


@given(seed=st.integers(0, 10**6), N=st.integers(1, 32), lr=st.floats(0.05, 1.0))
def test_leak_commutation(seed, N, lr):
    res = dense(N, seed=seed)
    lam = diagonalize(res).with_leak(lr).eigenvalues
    lam2 = diagonalize(apply_leak(res, lr)).eigenvalues
    b = list(lam2)
    for x in lam:
        i = int(np.argmin(np.abs(np.array(b) - x)))
        assert abs(b.pop(i) - x) <= 1e-8


# --- basis equivalence ----------------------------------------------------------

def _trained(res, u, y, alpha=1e-8):
    data_S = run_reservoir(res, u).states
    X = design_matrix(data_S, None, use_bias=True)
    return train_ridge(X[20:], y[20:], alpha, use_bias=True)


@pytest.mark.parametrize("kind", ["random", "eigen", "Q"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_basis_equivalence(kind, seed):
    res = dense(30, seed=seed, d_in=2)
    g = np.random.default_rng(seed)
    u = g.uniform(-1, 1, (120, 2))
    y = np.sin(np.cumsum(u, axis=0))
    ro = _trained(res, u, y)
    ref = run_reservoir(res, u, readout=ro).outputs
    spec = diagonalize(res)
    if kind == "random":
        P = g.normal(size=(30, 30)) + 1j * g.normal(size=(30, 30))
    elif kind == "eigen":
        P = spec.basis_P
    else:
        P = spec.basis_Q
    res_P = change_basis(res, P)
    ro_P = transform_readout(ro, P, basis="P")
    out = run_reservoir(res_P, u, readout=ro_P, basis="P").outputs
    assert np.max(np.abs(out.imag)) <= 1e-8 * np.max(np.abs(ref))
    assert rel_err(out.real, ref) <= 1e-8


# --- EWT / EET --------------------------------------------------------------------

def test_ewt_scalar_basis():
    spec = SpectralReservoir(lambda_real=[0.1, 0.2, 0.3], lambda_cpx=[], w_in_Q=np.ones((1, 3)),
                             basis_Q=2.5 * np.eye(3))
    ro = Readout(res_block=np.array([[1.0], [2.0], [3.0]]), bias_block=[0.5])
    out = ewt_transform(ro, spec)
    assert out.basis == "Q"
    assert np.allclose(out.res_block, ro.res_block / 2.5)
    assert np.array_equal(out.bias_block, ro.bias_block)


def test_ewt_permutation_basis():
    perm = np.array([2, 0, 1])
    Q = np.eye(3)[:, perm]
    spec = SpectralReservoir(lambda_real=[0.1, 0.2, 0.3], lambda_cpx=[], w_in_Q=np.ones((1, 3)),
                             basis_Q=Q)
    res = np.array([[1.0], [2.0], [3.0]])
    out = ewt_transform(Readout(res_block=res), spec)
    assert np.allclose(out.res_block, Q.T @ res)
    assert np.allclose(out.res_block[:, 0], res[perm, 0])


def test_ewt_rejects_q_basis_readout():
    spec = diagonalize(dense(4))
    with pytest.raises(BasisMismatchError):
        ewt_transform(Readout(res_block=np.ones((4, 1)), basis="Q"), spec)


def test_ewt_mso1_equivalence():
    data = gen_mso(1)
    res = apply_leak(generate_dense(ESNConfig(units=100, spectral_radius=0.9, seed=0)), 0.9)
    S = run_reservoir(res, data.inputs).states
    ro = fit_readout(S, data, 1e-8)
    spec = diagonalize(res)
    out_dense = run_reservoir(res, data.inputs, readout=ro).outputs
    out_q = run_diagonal(spec, data.inputs, readout=ewt_transform(ro, spec)).outputs
    t = data.test
    assert abs(rmse(out_q[t], data.targets[t]) - rmse(out_dense[t], data.targets[t])) <= 1e-9


def test_eet_identity_basis_reduces_to_ridge():
    g = np.random.default_rng(0)
    S, Y = g.normal(size=(50, 6)), g.normal(size=(50, 1))
    spec = SpectralReservoir(lambda_real=np.linspace(-0.5, 0.5, 6), lambda_cpx=[],
                             w_in_Q=np.ones((1, 6)), basis_Q=np.eye(6))
    eet = eet_train(S, None, Y, 1e-3, spec)
    ref = train_ridge(design_matrix(S, None, True), Y, 1e-3, use_bias=True)
    assert np.allclose(eet.W_out, ref.W_out, rtol=0, atol=1e-14)


def test_eet_orthogonal_basis_alpha0():
    g = np.random.default_rng(1)
    Q = np.linalg.qr(g.normal(size=(4, 4)))[0]
    spec = SpectralReservoir(lambda_real=[0.1, 0.2, 0.3, 0.4], lambda_cpx=[],
                             w_in_Q=np.ones((1, 4)), basis_Q=Q)
    X, Y = g.normal(size=(20, 4)), g.normal(size=(20, 2))
    W_ols = np.linalg.lstsq(X, Y, rcond=None)[0]
    eet = eet_train(X @ Q, None, Y, 0.0, spec, use_bias=False)
    assert np.allclose(eet.res_block, Q.T @ W_ols, atol=1e-12)


def test_eet_regularizer_blocks():
    spec = diagonalize(dense(6, seed=1))
    R = eet_regularizer(spec, 2)
    assert np.array_equal(R[:2, :2], np.eye(2))
    assert np.allclose(R[2:, 2:], spec.basis_Q.T @ spec.basis_Q)
    assert np.all(R[:2, 2:] == 0)


@pytest.mark.parametrize("feedback", [False, True])
@pytest.mark.parametrize("seed", range(4))
def test_eet_equals_ewt(seed, feedback):
    res = dense(50, seed=seed, use_feedback=feedback)
    mso = gen_mso(2, 400)
    # Offset targets so the bias block is a genuine coefficient, not roundoff around 0.
    data = TaskDataset(mso.inputs, mso.targets + 0.5, washout=mso.washout)
    teacher = data.targets if feedback else None
    S = run_reservoir(res, data.inputs, teacher=teacher).states
    ewt = ewt_transform(fit_readout(S, data, 1e-8, use_feedback=feedback), diagonalize(res))
    spec = diagonalize(res)
    Sq = run_diagonal(spec, data.inputs, teacher=teacher).states
    y_prev = data.previous_targets()[data.train] if feedback else None
    eet = eet_train(Sq[data.train], y_prev, data.targets[data.train], 1e-8, spec)
    for a, b in [(eet.res_block, ewt.res_block), (eet.bias_block, ewt.bias_block)]:
        assert rel_err(a, b) <= 1e-8
    if feedback:
        assert rel_err(eet.out_block, ewt.out_block) <= 1e-8


def test_q_readout_rejected_on_original_path():
    spec = diagonalize(dense(4))
    with pytest.raises(BasisMismatchError):
        run_diagonal(spec, np.ones((3, 1)), readout=Readout(res_block=np.ones((4, 1))))


def test_q_readout_step():
    spec = diagonalize(dense(10, seed=2))
    ro = Readout(res_block=np.ones((10, 1)), basis="Q")
    assert readout_step(ro, np.ones(10), basis="Q")[0] == 10.0
