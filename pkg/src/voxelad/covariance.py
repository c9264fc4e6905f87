"""Voxel-wise correlated Gaussian model with Mahalanobis scoring.

Every voxel gets a full S x S covariance over the training stream; the
anomaly score of a test study at a voxel is the squared Mahalanobis
distance y' Sigma^-1 y of its centered channel vector, evaluated through
the precomputed Cholesky factor. (The squared form is kept deliberately:
rank metrics are unaffected, but sample-level sums are method-specific and
must never be compared across scoring rules.)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import (
    HeadMask,
    MultiChannelVolume,
    ScoreMap,
    StudyLike,
    check_same_shape,
    load_study,
)

RIDGE_LADDER = (1e-4, 1e-3, 1e-2, 1e-1)
DIAGONAL_FALLBACK = -1.0  # ridge_used marker: voxel fell back to diagonal cov
_DIAG_FLOOR = 1e-12

SLAB_VOXELS = 1 << 15


@dataclass
class CovarianceModel:
    S: int
    dims: tuple[int, int, int]
    n_train: int
    mu: np.ndarray  # (S, V) float64
    cov: np.ndarray  # (V, S, S) float64, SPD after ridge/fallback
    chol: np.ndarray  # (V, S, S) float64, lower-triangular factors of cov
    ridge_used: np.ndarray  # (V,) float64; 0 = untouched, -1 = diagonal fallback

    @property
    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z


def _chol_with_ridge(sig: np.ndarray, ladder=RIDGE_LADDER):
    """Factor one S x S covariance, escalating ridge magnitudes on failure.

    Returns (spd_matrix, lower_factor, ridge_magnitude). ridge_magnitude is
    DIAGONAL_FALLBACK when even the largest ridge fails and the matrix was
    replaced by its (floored) diagonal.
    """
    S = sig.shape[0]
    trace_scale = np.trace(sig) / S
    for lam in (0.0, *ladder):
        cand = sig if lam == 0.0 else sig + (lam * trace_scale) * np.eye(S)
        try:
            L = np.linalg.cholesky(cand)
            return cand, L, lam * trace_scale
        except np.linalg.LinAlgError:
            continue
    diag = np.maximum(np.diag(sig), _DIAG_FLOOR)
    cand = np.diag(diag)
    return cand, np.diag(np.sqrt(diag)), DIAGONAL_FALLBACK


def _factor_slab(sig_slab: np.ndarray):
    """Cholesky-factor a (m, S, S) stack; per-voxel ridge ladder on failures."""
    m, S, _ = sig_slab.shape
    cov = np.empty_like(sig_slab)
    chol = np.empty_like(sig_slab)
    ridge = np.zeros(m)

    # all-zero covariances (e.g. constant background) go straight to fallback
    traces = np.trace(sig_slab, axis1=1, axis2=2)
    zero = traces <= 0.0
    if zero.any():
        idx = np.flatnonzero(zero)
        diag = np.full(S, _DIAG_FLOOR)
        cov[idx] = np.diag(diag)
        chol[idx] = np.diag(np.sqrt(diag))
        ridge[idx] = DIAGONAL_FALLBACK

    rest = np.flatnonzero(~zero)
    if rest.size:
        try:
            chol[rest] = np.linalg.cholesky(sig_slab[rest])
            cov[rest] = sig_slab[rest]
        except np.linalg.LinAlgError:
            for v in rest:
                cov[v], chol[v], ridge[v] = _chol_with_ridge(sig_slab[v])
    return cov, chol, ridge


def fit_covariance(
    training: Sequence[StudyLike],
    mask: HeadMask,
    ridge_ladder=RIDGE_LADDER,
) -> CovarianceModel:
    """Two-pass streaming fit: means first, then centered cross-products."""
    n = len(training)
    if n < 2:
        raise ValueError("need at least 2 training studies")

    first = load_study(training[0])
    S, dims = first.channels, first.dims
    if tuple(mask.dims) != tuple(dims):
        raise ValueError(f"shape mismatch: mask {mask.dims} vs studies {dims}")
    if n < S + 1:
        warnings.warn(
            f"covariance fit with N={n} < S+1={S + 1} training studies; "
            "per-voxel covariances will be singular without ridge",
            stacklevel=2,
        )
    V = first.n_voxels

    total = np.zeros((S, V), dtype=np.float64)
    for item in training:
        study = load_study(item)
        if study.channels != S or study.dims != dims:
            raise ValueError("shape mismatch in training stream")
        total += study.flat()
    mu = total / n

    xprod = np.zeros((V, S, S), dtype=np.float64)
    for item in training:
        study = load_study(item)
        y = study.flat() - mu
        for lo in range(0, V, SLAB_VOXELS):
            hi = min(lo + SLAB_VOXELS, V)
            yk = y[:, lo:hi]
            xprod[lo:hi] += np.einsum("sv,tv->vst", yk, yk)
    sig = xprod / (n - 1)

    cov = np.empty_like(sig)
    chol = np.empty_like(sig)
    ridge = np.zeros(V)
    for lo in range(0, V, SLAB_VOXELS):
        hi = min(lo + SLAB_VOXELS, V)
        cov[lo:hi], chol[lo:hi], ridge[lo:hi] = _factor_slab(sig[lo:hi])

    return CovarianceModel(
        S=S, dims=dims, n_train=n, mu=mu, cov=cov, chol=chol, ridge_used=ridge
    )


def _forward_solve(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve L w = y for a (m, S, S) stack of lower factors, y of shape (m, S)."""
    m, S = y.shape
    w = np.empty_like(y)
    for s in range(S):
        acc = y[:, s].copy()
        for t in range(s):
            acc -= L[:, s, t] * w[:, t]
        w[:, s] = acc / L[:, s, s]
    return w


def score_covariance(model: CovarianceModel, study: MultiChannelVolume) -> ScoreMap:
    """Squared Mahalanobis distance per voxel via the stored Cholesky factor."""
    check_same_shape(model, study)
    V = model.n_voxels
    y = (study.flat() - model.mu).T  # (V, S)
    score = np.empty(V, dtype=np.float64)
    for lo in range(0, V, SLAB_VOXELS):
        hi = min(lo + SLAB_VOXELS, V)
        w = _forward_solve(model.chol[lo:hi], y[lo:hi])
        score[lo:hi] = (w * w).sum(axis=1)
    return ScoreMap(score.astype(np.float32).reshape(model.dims), spacing=study.spacing)
