"""On-disk container for fitted models.

Layout (all little-endian):

    magic   4 bytes  "SBAD"
    version u32      currently 1
    kind    u8       0x01 baseline, 0x02 covariance, 0x03 projection
    S, X, Y, Z, N    u32 each

followed by kind-specific content, arrays as float32:

    baseline    u32 n_degenerate, f32 sigma_floor, mu[S*V], sigma[S*V]
    covariance  mu[S*V], packed covariance [V * S(S+1)/2] (upper triangle,
                row-major), packed Cholesky [same count] (lower triangle,
                row-major), ridge map [V]
    projection  u8 orthonormal, u32 K, u32 n_dropped, u32 dropped[...],
                f32 source_norms[N], then K basis rows of S*V floats

Projection basis rows are memory-mapped on load rather than read into RAM.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .baseline import BaselineModel
from .covariance import CovarianceModel
from .projection import ProjectionModel

MAGIC = b"SBAD"
VERSION = 1
KIND_BASELINE = 0x01
KIND_COVARIANCE = 0x02
KIND_PROJECTION = 0x03

KIND_NAMES = {
    KIND_BASELINE: "baseline",
    KIND_COVARIANCE: "covariance",
    KIND_PROJECTION: "projection",
}

_HEAD = struct.Struct("<4sIBIIIII")  # magic, version, kind, S, X, Y, Z, N

Model = BaselineModel | CovarianceModel | ProjectionModel


class ModelFormatError(ValueError):
    pass


def _pack_tri(mats: np.ndarray, rows, cols) -> np.ndarray:
    return np.ascontiguousarray(mats[:, rows, cols], dtype="<f4")


def _unpack_sym(packed: np.ndarray, S: int) -> np.ndarray:
    """Expand upper-triangle packed rows back to full symmetric matrices."""
    V = packed.shape[0]
    iu = np.triu_indices(S)
    out = np.zeros((V, S, S), dtype=np.float64)
    out[:, iu[0], iu[1]] = packed
    out = out + np.transpose(out, (0, 2, 1))
    out[:, np.arange(S), np.arange(S)] /= 2.0
    return out


def _unpack_lower(packed: np.ndarray, S: int) -> np.ndarray:
    V = packed.shape[0]
    il = np.tril_indices(S)
    out = np.zeros((V, S, S), dtype=np.float64)
    out[:, il[0], il[1]] = packed
    return out


def save_model(model: Model, path: str | Path):
    path = Path(path)
    S, (X, Y, Z) = model.S, model.dims
    with open(path, "wb") as fh:
        if isinstance(model, BaselineModel):
            fh.write(_HEAD.pack(MAGIC, VERSION, KIND_BASELINE, S, X, Y, Z, model.n_train))
            fh.write(struct.pack("<If", model.n_degenerate, model.sigma_floor))
            fh.write(model.mu.astype("<f4").tobytes())
            fh.write(model.sigma.astype("<f4").tobytes())
        elif isinstance(model, CovarianceModel):
            fh.write(_HEAD.pack(MAGIC, VERSION, KIND_COVARIANCE, S, X, Y, Z, model.n_train))
            fh.write(model.mu.astype("<f4").tobytes())
            iu = np.triu_indices(S)
            fh.write(_pack_tri(model.cov, *iu).tobytes())
            il = np.tril_indices(S)
            fh.write(_pack_tri(model.chol, *il).tobytes())
            fh.write(model.ridge_used.astype("<f4").tobytes())
        elif isinstance(model, ProjectionModel):
            n_inputs = len(model.source_norms)
            fh.write(_HEAD.pack(MAGIC, VERSION, KIND_PROJECTION, S, X, Y, Z, n_inputs))
            fh.write(struct.pack("<BII", int(model.orthonormal), model.K, len(model.dropped)))
            fh.write(np.asarray(model.dropped, dtype="<u4").tobytes())
            fh.write(np.asarray(model.source_norms, dtype="<f4").tobytes())
            for k in range(model.K):
                fh.write(np.ascontiguousarray(model.basis[k], dtype="<f4").tobytes())
        else:
            raise TypeError(f"cannot save object of type {type(model).__name__}")


def peek_kind(path: str | Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
    magic, version, kind, *_ = _HEAD.unpack(head)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported model format version {version}")
    if kind not in KIND_NAMES:
        raise ModelFormatError(f"{path}: unknown model kind {kind:#x}")
    return KIND_NAMES[kind]


def load_model(path: str | Path) -> Model:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise ModelFormatError(f"{path}: truncated model file")
        magic, version, kind, S, X, Y, Z, N = _HEAD.unpack(head)
        if magic != MAGIC:
            raise ModelFormatError(f"{path}: not a model file (bad magic)")
        if version != VERSION:
            raise ModelFormatError(f"{path}: unsupported model format version {version}")
        dims = (X, Y, Z)
        V = X * Y * Z

        if kind == KIND_BASELINE:
            n_degenerate, sigma_floor = struct.unpack("<If", fh.read(8))
            mu = np.frombuffer(fh.read(4 * S * V), dtype="<f4").reshape(S, V)
            sigma = np.frombuffer(fh.read(4 * S * V), dtype="<f4").reshape(S, V)
            return BaselineModel(
                S=S, dims=dims, n_train=N,
                mu=mu.astype(np.float64), sigma=sigma.astype(np.float64),
                sigma_floor=sigma_floor, n_degenerate=n_degenerate,
            )

        if kind == KIND_COVARIANCE:
            P = S * (S + 1) // 2
            mu = np.frombuffer(fh.read(4 * S * V), dtype="<f4").reshape(S, V)
            cov_p = np.frombuffer(fh.read(4 * V * P), dtype="<f4").reshape(V, P)
            chol_p = np.frombuffer(fh.read(4 * V * P), dtype="<f4").reshape(V, P)
            ridge = np.frombuffer(fh.read(4 * V), dtype="<f4")
            return CovarianceModel(
                S=S, dims=dims, n_train=N,
                mu=mu.astype(np.float64),
                cov=_unpack_sym(cov_p.astype(np.float64), S),
                chol=_unpack_lower(chol_p.astype(np.float64), S),
                ridge_used=ridge.astype(np.float64),
            )

        if kind == KIND_PROJECTION:
            orthonormal, K, n_dropped = struct.unpack("<BII", fh.read(9))
            dropped = np.frombuffer(fh.read(4 * n_dropped), dtype="<u4").tolist()
            norms = np.frombuffer(fh.read(4 * N), dtype="<f4").astype(np.float64)
            offset = fh.tell()
            basis = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=(K, S * V))
            return ProjectionModel(
                S=S, dims=dims, K=K, basis=basis,
                source_norms=norms, dropped=[int(d) for d in dropped],
                orthonormal=bool(orthonormal), basis_path=path,
            )

    raise ModelFormatError(f"{path}: unknown model kind {kind:#x}")
