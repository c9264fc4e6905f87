"""Voxel-wise independent-channel Gaussian model.

Fit estimates a per-voxel, per-channel mean and sample standard deviation
over the training stream; scoring standardizes a study against those maps
and takes the per-voxel Euclidean norm over channels as the anomaly score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import (
    HeadMask,
    MultiChannelVolume,
    ScoreMap,
    StudyLike,
    ZMap,
    check_same_shape,
    load_study,
)

SIGMA_FLOOR = 1e-6


@dataclass
class BaselineModel:
    S: int
    dims: tuple[int, int, int]
    n_train: int
    mu: np.ndarray  # (S, V) float64
    sigma: np.ndarray  # (S, V) float64, floored at sigma_floor
    sigma_floor: float = SIGMA_FLOOR
    n_degenerate: int = 0  # mask voxels whose sigma was clamped to the floor

    @property
    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z


def fit_baseline(
    training: Sequence[StudyLike],
    mask: HeadMask,
    sigma_floor: float = SIGMA_FLOOR,
) -> BaselineModel:
    """Two-pass streaming fit: pass 1 accumulates means, pass 2 centered
    squares. Accumulation follows stream order, so the result does not
    depend on how work is scheduled."""
    n = len(training)
    if n < 2:
        raise ValueError("need at least 2 training studies")

    first = load_study(training[0])
    S, dims = first.channels, first.dims
    if tuple(mask.dims) != tuple(dims):
        raise ValueError(f"shape mismatch: mask {mask.dims} vs studies {dims}")
    V = first.n_voxels

    total = np.zeros((S, V), dtype=np.float64)
    for item in training:
        study = load_study(item)
        if study.channels != S or study.dims != dims:
            raise ValueError("shape mismatch in training stream")
        total += study.flat()
    mu = total / n

    ssq = np.zeros((S, V), dtype=np.float64)
    for item in training:
        study = load_study(item)
        d = study.flat() - mu
        ssq += d * d
    sigma = np.sqrt(ssq / (n - 1))

    clamped = sigma < sigma_floor
    n_degenerate = int(clamped[:, mask.flat()].sum())
    sigma = np.maximum(sigma, sigma_floor)

    return BaselineModel(
        S=S, dims=dims, n_train=n, mu=mu, sigma=sigma,
        sigma_floor=sigma_floor, n_degenerate=n_degenerate,
    )


def z_transform(model: BaselineModel, study: MultiChannelVolume) -> ZMap:
    """Standardize a study voxel-wise: z = (x - mu) / sigma."""
    check_same_shape(model, study)
    z = (study.flat() - model.mu) / model.sigma
    data = z.astype(np.float32).reshape((model.S, *model.dims))
    return ZMap(data, spacing=study.spacing)


def score_baseline(model: BaselineModel, study: MultiChannelVolume) -> ScoreMap:
    """Per-voxel Euclidean norm over channels of the z-vector."""
    check_same_shape(model, study)
    z = (study.flat() - model.mu) / model.sigma
    score = np.sqrt((z * z).sum(axis=0))
    return ScoreMap(score.astype(np.float32).reshape(model.dims), spacing=study.spacing)
