"""Linear projection onto the span of the training z-maps.

Fitting runs modified Gram-Schmidt over the training vectors in stream
order, dropping vectors that are numerically dependent on what came before;
the resulting orthonormal basis spans the same subspace as the inputs, so
sequentially subtracting projections at score time is an exact orthogonal
projection. A verbatim variant that keeps the raw (unit-normalized but not
orthogonalized) training vectors is available via orthonormalize=False for
fidelity experiments.

The basis lives on disk as little-endian float32 rows and is streamed in
fixed-size chunks; at realistic scale it cannot be assumed memory-resident.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grids import (
    HeadMask,
    MultiChannelVolume,
    ResidualMap,
    ScoreMap,
    StudyLike,
    ZMap,
    check_same_shape,
    load_study,
)

EPS_REL = 1e-6
CHUNK = 1 << 22  # scalars per streamed chunk


@dataclass
class ProjectionModel:
    S: int
    dims: tuple[int, int, int]
    K: int
    basis: np.ndarray  # (K, S*V) float32, memory-mapped when loaded from disk
    source_norms: np.ndarray  # (n_inputs,) pre-orthogonalization norms |z_i|
    dropped: list[int] = field(default_factory=list)  # 0-based input indices
    orthonormal: bool = True
    basis_path: Path | None = None

    @property
    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z


def _chunked_dot(a: np.ndarray, b: np.ndarray, chunk: int = CHUNK) -> float:
    """Dot product accumulated per fixed chunk, summed in chunk order."""
    parts = [
        np.dot(a[lo:lo + chunk].astype(np.float64, copy=False),
               b[lo:lo + chunk].astype(np.float64, copy=False))
        for lo in range(0, a.size, chunk)
    ]
    return float(sum(parts))


def _chunked_axpy(y: np.ndarray, alpha: float, x: np.ndarray, chunk: int = CHUNK):
    """y -= alpha * x, streamed chunk by chunk."""
    for lo in range(0, y.size, chunk):
        y[lo:lo + chunk] -= alpha * x[lo:lo + chunk].astype(np.float64, copy=False)


def fit_projection(
    training: Sequence[StudyLike],
    mask: HeadMask,
    orthonormalize: bool = True,
    eps_rel: float = EPS_REL,
    scratch_dir: str | Path | None = None,
    chunk: int = CHUNK,
) -> ProjectionModel:
    """Build the basis of the healthy subspace from training z-maps.

    Vector i is orthogonalized against everything kept so far and retained
    iff its residual norm exceeds eps_rel * |z_i|. With
    orthonormalize=False the vectors are only unit-normalized (zero vectors
    still dropped), reproducing the raw sequential-subtraction scheme.
    """
    if len(training) < 1:
        raise ValueError("need at least 1 training z-map")

    first = load_study(training[0])
    S, dims = first.channels, first.dims
    if tuple(mask.dims) != tuple(dims):
        raise ValueError(f"shape mismatch: mask {mask.dims} vs z-maps {dims}")
    D = S * first.n_voxels

    fd, tmp_name = tempfile.mkstemp(
        suffix=".basis", dir=None if scratch_dir is None else str(scratch_dir)
    )
    os.close(fd)
    basis_path = Path(tmp_name)

    K = 0
    dropped: list[int] = []
    norms: list[float] = []
    with open(basis_path, "r+b") as fh:
        for i, item in enumerate(training):
            z = load_study(item)
            if z.channels != S or z.dims != dims:
                raise ValueError("shape mismatch in training stream")
            v = z.flat().reshape(-1).astype(np.float64)
            norm_in = float(np.sqrt(_chunked_dot(v, v, chunk)))
            norms.append(norm_in)
            if norm_in == 0.0:
                dropped.append(i)
                continue
            if orthonormalize and K:
                q = np.memmap(basis_path, dtype="<f4", mode="r", shape=(K, D))
                for k in range(K):
                    c = _chunked_dot(v, q[k], chunk)
                    _chunked_axpy(v, c, q[k], chunk)
                del q
                norm_res = float(np.sqrt(_chunked_dot(v, v, chunk)))
                if norm_res <= eps_rel * norm_in:
                    dropped.append(i)
                    continue
            else:
                norm_res = norm_in
            fh.seek(K * D * 4)
            fh.write((v / norm_res).astype("<f4").tobytes())
            fh.flush()  # the next iteration memory-maps this file
            K += 1

    if K == 0:
        basis_path.unlink(missing_ok=True)
        raise ValueError("all training vectors are numerically zero")

    basis = np.memmap(basis_path, dtype="<f4", mode="r", shape=(K, D))
    return ProjectionModel(
        S=S, dims=dims, K=K, basis=basis,
        source_norms=np.asarray(norms), dropped=dropped,
        orthonormal=orthonormalize, basis_path=basis_path,
    )


def score_projection(
    model: ProjectionModel, z: ZMap, chunk: int = CHUNK
) -> tuple[ResidualMap, ScoreMap]:
    """Subtract the projection onto each basis vector in turn; the score is
    the per-voxel channel norm of what remains."""
    check_same_shape(model, z)
    r = z.flat().reshape(-1).astype(np.float64)
    for k in range(model.K):
        q = model.basis[k]
        c = _chunked_dot(r, q, chunk)
        _chunked_axpy(r, c, q, chunk)
    res = r.astype(np.float32).reshape((model.S, *model.dims))
    score = np.sqrt((r.reshape(model.S, -1) ** 2).sum(axis=0))
    return (
        ResidualMap(res, spacing=z.spacing),
        ScoreMap(score.astype(np.float32).reshape(model.dims), spacing=z.spacing),
    )
