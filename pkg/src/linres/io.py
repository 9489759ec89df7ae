"""Model files (JSON, schema v1) and signal CSV files.

Dense matrices are nested lists, sparse ones CSR dictionaries
``{rows, cols, row_ptr, col_idx, values}``; complex numbers are ``[re, im]``.
Floats are written with ``repr`` precision, so a save/load round trip is
exact.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .esn import DenseReservoir, ESNConfig, ESNError, Readout
from .spectral import SpectralReservoir

SCHEMA = "v1"


class DataError(ESNError):
    """Malformed model or CSV file."""


@dataclass
class GammaReadout:
    """Echo-matrix readout ``y = bias + R_Q . gamma`` for one input and one output."""

    gamma: np.ndarray
    bias: Optional[float] = None


@dataclass
class Model:
    """A generated reservoir plus optional trained readout.

    ``dense`` and ``spectral`` hold the same reservoir in the original and Q
    bases; either may be absent. Stored weights already include the leak.
    """

    method: str
    config: ESNConfig
    dense: Optional[DenseReservoir] = None
    spectral: Optional[SpectralReservoir] = None
    readout: Optional[Readout] = None
    gamma: Optional[GammaReadout] = None
    sigma: Optional[float] = None


# --- encoding -----------------------------------------------------------------

def encode_matrix(M):
    if M is None:
        return None
    if sp.issparse(M):
        M = sp.csr_array(M)
        return {"rows": M.shape[0], "cols": M.shape[1], "row_ptr": M.indptr.tolist(),
                "col_idx": M.indices.tolist(), "values": M.data.tolist()}
    return np.asarray(M, dtype=float).tolist()


def decode_matrix(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        try:
            return sp.csr_array((np.asarray(obj["values"], dtype=float),
                                 np.asarray(obj["col_idx"], dtype=np.int64),
                                 np.asarray(obj["row_ptr"], dtype=np.int64)),
                                shape=(obj["rows"], obj["cols"]))
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad sparse matrix: {exc}") from None
    a = np.asarray(obj, dtype=float)
    if a.ndim == 1 and a.size == 0:
        return a.reshape(0, 0)
    if a.ndim != 2:
        raise DataError(f"expected a matrix, got an array of shape {a.shape}")
    return a


def encode_complex(z) -> list:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def decode_complex(obj) -> np.ndarray:
    a = np.asarray(obj, dtype=float).reshape(-1, 2)
    return a[:, 0] + 1j * a[:, 1]


def _encode_readout(ro: Optional[Readout]):
    if ro is None:
        return None
    return {"basis": ro.basis, "res_block": encode_matrix(ro.res_block),
            "bias_block": encode_matrix(ro.bias_block), "out_block": encode_matrix(ro.out_block),
            "fallback": ro.fallback}


def _decode_readout(obj) -> Optional[Readout]:
    if obj is None:
        return None
    return Readout(res_block=decode_matrix(obj["res_block"]),
                   bias_block=decode_matrix(obj.get("bias_block")),
                   out_block=decode_matrix(obj.get("out_block")), basis=obj["basis"],
                   fallback=bool(obj.get("fallback", False)))


def model_to_dict(model: Model) -> dict:
    out = {"schema": SCHEMA, "method": model.method,
           "config": dataclasses.asdict(model.config), "sigma": model.sigma,
           "dense": None, "spectral": None, "readout": _encode_readout(model.readout),
           "gamma": None}
    if model.dense is not None:
        d = model.dense
        out["dense"] = {"W": encode_matrix(d.W), "W_in": encode_matrix(d.W_in),
                        "W_fb": encode_matrix(d.W_fb)}
    if model.spectral is not None:
        s = model.spectral
        out["spectral"] = {"lambda_real": s.lambda_real.tolist(),
                           "lambda_cpx": encode_complex(s.lambda_cpx),
                           "w_in_Q": encode_matrix(s.w_in_Q), "w_fb_Q": encode_matrix(s.w_fb_Q),
                           "basis_Q": encode_matrix(s.basis_Q), "cond_P": s.cond_P}
    if model.gamma is not None:
        out["gamma"] = {"gamma": model.gamma.gamma.tolist(), "bias": model.gamma.bias}
    return out


def model_from_dict(obj: dict) -> Model:
    if not isinstance(obj, dict) or obj.get("schema") != SCHEMA:
        raise DataError(f"not a model file with schema {SCHEMA!r}")
    try:
        config = ESNConfig(**obj["config"])
        dense = spectral = None
        if obj.get("dense") is not None:
            d = obj["dense"]
            dense = DenseReservoir(W=decode_matrix(d["W"]), W_in=decode_matrix(d["W_in"]),
                                   W_fb=decode_matrix(d.get("W_fb")))
        if obj.get("spectral") is not None:
            s = obj["spectral"]
            spectral = SpectralReservoir(
                lambda_real=np.asarray(s["lambda_real"], dtype=float),
                lambda_cpx=decode_complex(s["lambda_cpx"]), w_in_Q=decode_matrix(s["w_in_Q"]),
                w_fb_Q=decode_matrix(s.get("w_fb_Q")), basis_Q=decode_matrix(s.get("basis_Q")),
                cond_P=float(s.get("cond_P", float("nan"))))
        gamma = None
        if obj.get("gamma") is not None:
            gamma = GammaReadout(np.asarray(obj["gamma"]["gamma"], dtype=float),
                                 obj["gamma"].get("bias"))
        return Model(method=obj["method"], config=config, dense=dense, spectral=spectral,
                     readout=_decode_readout(obj.get("readout")), gamma=gamma,
                     sigma=obj.get("sigma"))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file: {exc!r}") from None


def save_model(model: Model, path) -> None:
    text = json.dumps(model_to_dict(model), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n")


def load_model(path) -> Model:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(obj)


# --- CSV ------------------------------------------------------------------------

def read_signals(path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Read ``u_0..u_{D-1}[, y_0..]`` columns; returns ``(u, y or None)``.

    Errors name the offending line (1-based, header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        n_u = _check_header(path, header)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, "
                                f"got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.isfinite(data).all(axis=1)))
        raise DataError(f"{path}: non-finite value in data row {bad + 1}")
    u = data[:, :n_u]
    y = data[:, n_u:] if len(header) > n_u else None
    return u, y


def _check_header(path, header):
    n_u = 0
    while n_u < len(header) and header[n_u] == f"u_{n_u}":
        n_u += 1
    rest = header[n_u:]
    if n_u == 0 or rest != [f"y_{i}" for i in range(len(rest))]:
        raise DataError(f"{path}: line 1: header must be u_0..u_(D-1) optionally followed by "
                        f"y_0..y_(K-1), got {','.join(header)}")
    return n_u


def write_signals(path, columns: dict) -> None:
    """Write named blocks, e.g. ``{"r": states, "y": outputs}`` -> r_0.., y_0.."""
    blocks = [(k, np.atleast_2d(np.asarray(v, dtype=float).T).T) for k, v in columns.items()
              if v is not None]
    header = [f"{k}_{i}" for k, b in blocks for i in range(b.shape[1])]
    data = np.hstack([b for _, b in blocks])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(x)) for x in row])
