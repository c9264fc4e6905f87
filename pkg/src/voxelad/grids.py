"""In-memory grid types shared by every stage of the toolkit.

All multi-channel data is kept channel-major: an (S, X, Y, Z) C-contiguous
array keeps each channel's voxels in one contiguous block, which is what the
streaming per-channel statistics iterate over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

Spacing = tuple[float, float, float]


@dataclass
class MultiChannelVolume:
    """S channels of an X*Y*Z scalar grid with voxel spacing in mm.

    ``data`` has shape (S, X, Y, Z), dtype float32. ``header`` optionally
    carries the raw 348-byte file header this volume was read from; it is
    passed through verbatim on write and never interpreted.
    """

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    normalized: bool = False
    header: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ValueError(f"volume data must be 4-D (S,X,Y,Z), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValueError("volume needs at least one channel")
        if min(self.data.shape[1:]) < 1:
            raise ValueError("volume dims must be positive")
        if not all(s > 0 for s in self.spacing):
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        # spacing lives as float32 in the file format; keep it representable
        self.spacing = tuple(float(np.float32(s)) for s in self.spacing)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z

    def flat(self) -> np.ndarray:
        """(S, V) view of the data, V = X*Y*Z."""
        return self.data.reshape(self.channels, -1)


# A z-map is a multi-channel volume holding standardized values
# (x - mu) / sigma; a residual map holds what is left of a z-map after
# projecting out a fitted subspace. Both share the volume layout.
ZMap = MultiChannelVolume
ResidualMap = MultiChannelVolume


@dataclass
class HeadMask:
    """Binary 3-D grid restricting all statistics and scores."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    header: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)
        if self.data.ndim != 3:
            raise ValueError(f"mask data must be 3-D, got {self.data.shape}")
        if not self.data.any():
            raise ValueError("mask must contain at least one set voxel")
        self.spacing = tuple(float(np.float32(s)) for s in self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_set(self) -> int:
        return int(self.data.sum())

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass
class ScoreMap:
    """One non-negative anomaly score per voxel; zero outside the mask."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    header: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"score map data must be 3-D, got {self.data.shape}")
        self.spacing = tuple(float(np.float32(s)) for s in self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


def check_same_grid(a, b, what: str = "inputs"):
    """Raise if two grid objects disagree on (X, Y, Z) dims."""
    if tuple(a.dims) != tuple(b.dims):
        raise ValueError(f"shape mismatch: {what} have dims {a.dims} vs {b.dims}")


def check_same_shape(model, study: MultiChannelVolume):
    if model.S != study.channels or tuple(model.dims) != tuple(study.dims):
        raise ValueError(
            f"shape mismatch: model is S={model.S} dims={model.dims}, "
            f"study is S={study.channels} dims={study.dims}"
        )


StudyLike = MultiChannelVolume | str | Path


def load_study(item: StudyLike) -> MultiChannelVolume:
    """Materialize a training-stream item: in-memory volumes pass through,
    paths are read from disk (used to stream a training set twice without
    holding it in memory)."""
    if isinstance(item, MultiChannelVolume):
        return item
    from .nifti import read_volume

    vol = read_volume(item)
    if not isinstance(vol, MultiChannelVolume):
        raise ValueError(f"{item}: expected a volume file, got a mask")
    return vol
