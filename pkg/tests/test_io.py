import numpy as np
import pytest
import scipy.sparse as sp

from linres.dpg import build_dpg
from linres.esn import ESNConfig, Readout, generate_dense, run_reservoir
from linres.io import (DataError, GammaReadout, Model, decode_complex, decode_matrix,
                       encode_complex, encode_matrix, load_model, model_from_dict, read_signals,
                       save_model, write_signals)
from linres.spectral import diagonalize, run_diagonal


def test_sparse_encoding_layout():
    M = sp.csr_array(np.array([[0.0, 1.5], [2.0, 0.0], [0.0, 0.0]]))
    obj = encode_matrix(M)
    assert obj == {"rows": 3, "cols": 2, "row_ptr": [0, 1, 2, 2], "col_idx": [1, 0],
                   "values": [1.5, 2.0]}
    assert np.array_equal(decode_matrix(obj).toarray(), M.toarray())


def test_dense_and_complex_encoding():
    M = np.random.default_rng(0).normal(size=(3, 4))
    assert np.array_equal(decode_matrix(encode_matrix(M)), M)
    z = np.array([1 + 2j, -0.5j, 3.0])
    assert encode_complex(z) == [[1.0, 2.0], [0.0, -0.5], [3.0, 0.0]]
    assert np.array_equal(decode_complex(encode_complex(z)), z)


@pytest.mark.parametrize("conn", [1.0, 0.2])
def test_model_roundtrip_bit_identical_states(tmp_path, conn):
    config = ESNConfig(units=40, connectivity_r=conn, seed=3, use_feedback=True)
    res = generate_dense(config)
    spec = diagonalize(res)
    ro = Readout(res_block=np.ones((40, 1)), bias_block=[0.1], out_block=[[0.2]])
    model = Model("diag", config, dense=res, spectral=spec, readout=ro,
                  gamma=GammaReadout(np.arange(40.0), 0.5))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.config == config
    assert back.dense.is_sparse == res.is_sparse
    u = np.random.default_rng(0).uniform(-1, 1, (50, 1))
    y = np.sin(np.arange(50.0))[:, None]
    assert np.array_equal(run_reservoir(back.dense, u, teacher=y).states,
                          run_reservoir(res, u, teacher=y).states)
    assert np.array_equal(run_diagonal(back.spectral, u, teacher=y).states,
                          run_diagonal(spec, u, teacher=y).states)
    assert np.array_equal(back.readout.W_out, ro.W_out)
    assert np.array_equal(back.gamma.gamma, model.gamma.gamma) and back.gamma.bias == 0.5


def test_dpg_model_roundtrip(tmp_path):
    config = ESNConfig(units=30, seed=1)
    spec = build_dpg(config, "noisy-golden")
    save_model(Model("dpg-noisy-golden", config, spectral=spec, sigma=0.2), tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.dense is None and back.sigma == 0.2
    assert np.array_equal(back.spectral.lambda_cpx, spec.lambda_cpx)
    assert back.spectral.cond_P == spec.cond_P


def test_bad_model_files(tmp_path):
    with pytest.raises(DataError):
        model_from_dict({"schema": "v0"})
    with pytest.raises(DataError):
        model_from_dict({"schema": "v1", "method": "normal"})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(DataError):
        load_model(p)


def test_signals_roundtrip(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("u_0,u_1,y_0\n1,2,3\n\n4.5,-1e-3,6\n")
    u, y = read_signals(p)
    assert np.array_equal(u, [[1, 2], [4.5, -1e-3]])
    assert np.array_equal(y, [[3], [6]])
    q = tmp_path / "o.csv"
    vals = np.random.default_rng(0).normal(size=(4, 2))
    write_signals(q, {"u": vals, "y": vals[:, 0]})
    u2, y2 = read_signals(q)
    assert np.array_equal(u2, vals) and np.array_equal(y2[:, 0], vals[:, 0])


@pytest.mark.parametrize("text,line", [("u_0\n1\nx\n", "line 3"),
                                       ("u_0,y_0\n1,2\n3\n", "line 3"),
                                       ("a,b\n1,2\n", "line 1"),
                                       ("u_0,y_1\n1,2\n", "line 1")])
def test_malformed_csv_names_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=line):
        read_signals(p)


def test_empty_csv(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        read_signals(p)
