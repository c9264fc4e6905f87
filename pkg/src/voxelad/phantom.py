"""Seeded synthetic dataset generator.

Healthy studies are a weighted sum of a fixed bank of smooth random fields
(shared across subjects, giving the cohort a genuine low-dimensional
structure) plus per-voxel channel-correlated noise. Pathological studies
add spherical lesions that shift intensities and/or replace the correlated
noise with independent noise of identical per-channel variance, anomalies
that violate the cross-channel structure while leaving the marginal
distributions untouched.

Per-study randomness derives from (seed, stream, index) substreams, so
output is bit-identical for a fixed seed regardless of generation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .grids import HeadMask, MultiChannelVolume
from .nifti import write_volume

_STREAM_BANK = 0
_STREAM_TRAIN = 1
_STREAM_TEST_HEALTHY = 2
_STREAM_TEST_PATH = 3


def equicorrelation(s: int, rho: float) -> np.ndarray:
    """S x S correlation matrix with constant off-diagonal rho."""
    if s > 1 and not -1.0 / (s - 1) < rho < 1.0:
        raise ValueError(f"rho={rho} is not positive definite for S={s}")
    c = np.full((s, s), rho, dtype=np.float64)
    np.fill_diagonal(c, 1.0)
    return c


@dataclass
class PhantomConfig:
    seed: int = 0
    channels: int = 4
    dims: tuple[int, int, int] = (32, 32, 32)
    n_train: int = 50
    n_test_healthy: int = 10
    n_test_path: int = 10
    channel_correlation: np.ndarray | None = None  # default: equicorrelation 0.9
    n_anatomy_fields: int = 4
    anatomy_strength: float = 1.0
    noise_sigma: float = 1.0
    smoothness: float = 4.0  # gaussian sigma (voxels) of the anatomy fields
    lesion_count_range: tuple[int, int] = (1, 4)
    lesion_radius_range: tuple[float, float] = (3.0, 6.0)
    lesion_intensity_shift: float = 0.0
    lesion_breaks_correlation: bool = True
    lesion_fraction: float = 0.03

    def __post_init__(self):
        if self.channel_correlation is None:
            self.channel_correlation = equicorrelation(self.channels, 0.9)
        self.channel_correlation = np.asarray(self.channel_correlation, dtype=np.float64)
        c = self.channel_correlation
        if c.shape != (self.channels, self.channels):
            raise ValueError("channel correlation matrix has wrong shape")
        if not np.allclose(c, c.T):
            raise ValueError("channel correlation matrix must be symmetric")
        if not np.allclose(np.diag(c), 1.0):
            raise ValueError("channel correlation matrix needs a unit diagonal")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ValueError("channel correlation matrix must be positive definite")
        if not 0.0 < self.lesion_fraction < 0.5:
            raise ValueError("lesion fraction must be in (0, 0.5)")

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        d = dict(d)
        for key in ("dims", "lesion_count_range", "lesion_radius_range"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("channel_correlation") is not None:
            d["channel_correlation"] = np.asarray(d["channel_correlation"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "channels": self.channels, "dims": list(self.dims),
            "n_train": self.n_train, "n_test_healthy": self.n_test_healthy,
            "n_test_path": self.n_test_path,
            "channel_correlation": self.channel_correlation.tolist(),
            "n_anatomy_fields": self.n_anatomy_fields,
            "anatomy_strength": self.anatomy_strength,
            "noise_sigma": self.noise_sigma, "smoothness": self.smoothness,
            "lesion_count_range": list(self.lesion_count_range),
            "lesion_radius_range": list(self.lesion_radius_range),
            "lesion_intensity_shift": self.lesion_intensity_shift,
            "lesion_breaks_correlation": self.lesion_breaks_correlation,
            "lesion_fraction": self.lesion_fraction,
        }


def make_head_mask(dims: tuple[int, int, int]) -> HeadMask:
    """Centered ellipsoid covering most of the grid."""
    x, y, z = [np.arange(d, dtype=np.float64) for d in dims]
    cx, cy, cz = [(d - 1) / 2 for d in dims]
    rx, ry, rz = [0.42 * d for d in dims]
    dist = (
        ((x[:, None, None] - cx) / rx) ** 2
        + ((y[None, :, None] - cy) / ry) ** 2
        + ((z[None, None, :] - cz) / rz) ** 2
    )
    return HeadMask(dist <= 1.0)


def _anatomy_bank(cfg: PhantomConfig, mask: HeadMask, chol: np.ndarray) -> np.ndarray:
    """(B, S, V) bank of smooth fields, channel-mixed to carry the
    configured correlation, each channel zero-mean/unit-variance over the
    mask before mixing."""
    b, s = cfg.n_anatomy_fields, cfg.channels
    v = int(np.prod(cfg.dims))
    if b == 0:
        return np.zeros((0, s, v))
    rng = np.random.default_rng([cfg.seed, _STREAM_BANK])
    m = mask.flat()
    bank = np.empty((b, s, v))
    for i in range(b):
        for c in range(s):
            fld = gaussian_filter(rng.standard_normal(cfg.dims), cfg.smoothness)
            flat = fld.reshape(-1)
            flat = (flat - flat[m].mean()) / flat[m].std()
            bank[i, c] = flat
        bank[i] = chol @ bank[i]
    return bank


def _sphere(dims, center, radius) -> np.ndarray:
    x, y, z = [np.arange(d, dtype=np.float64) for d in dims]
    dist = (
        (x[:, None, None] - center[0]) ** 2
        + (y[None, :, None] - center[1]) ** 2
        + (z[None, None, :] - center[2]) ** 2
    )
    return dist <= radius * radius


def _radius_for_voxels(n: float) -> float:
    return (3.0 * n / (4.0 * np.pi)) ** (1.0 / 3.0)


def _place_lesions(cfg: PhantomConfig, mask: HeadMask, rng: np.random.Generator) -> np.ndarray:
    """Union of spheres inside the head mask hitting the target volume
    fraction; lesion count stays within the configured range."""
    target = int(round(cfg.lesion_fraction * mask.n_set))
    count_lo, count_hi = cfg.lesion_count_range
    r_lo, r_hi = cfg.lesion_radius_range
    lesion = np.zeros(mask.dims, dtype=bool)
    centers = np.argwhere(mask.data)
    count = 0
    while count < count_hi:
        have = int(lesion.sum())
        remaining = target - have
        if remaining <= 0 and count >= count_lo:
            break
        r = float(rng.uniform(r_lo, r_hi))
        # shrink the last sphere toward what is still missing
        if remaining > 0:
            r = min(r, max(r_lo, _radius_for_voxels(1.3 * remaining)))
        center = centers[rng.integers(0, len(centers))]
        lesion |= _sphere(mask.dims, center, r) & mask.data
        count += 1
    if int(lesion.sum()) < 0.5 * target:
        raise ValueError(
            "infeasible lesion packing: "
            f"reached {lesion.sum()} of {target} target voxels with {count} lesions"
        )
    return lesion


def _healthy_data(cfg, bank, chol, rng) -> np.ndarray:
    s, v = cfg.channels, int(np.prod(cfg.dims))
    b = cfg.n_anatomy_fields
    data = np.zeros((s, v))
    if b:
        weights = rng.standard_normal(b)
        data += (cfg.anatomy_strength / np.sqrt(b)) * np.einsum("b,bsv->sv", weights, bank)
    white = rng.standard_normal((s, v))
    data += cfg.noise_sigma * (chol @ white)
    return data


def generate_phantom(cfg: PhantomConfig, out_dir: str | Path) -> dict:
    """Write the full dataset and return (and save) its manifest."""
    out = Path(out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)

    mask = make_head_mask(cfg.dims)
    write_volume(mask, out / "mask.nii")
    chol = np.linalg.cholesky(cfg.channel_correlation)
    bank = _anatomy_bank(cfg, mask, chol)
    s = cfg.channels

    def build_healthy(stream: int, index: int) -> np.ndarray:
        rng = np.random.default_rng([cfg.seed, stream, index])
        return _healthy_data(cfg, bank, chol, rng)

    manifest = {
        "config": cfg.to_dict(),
        "mask": "mask.nii",
        "train": [],
        "test_healthy": [],
        "test_pathological": [],
    }

    for j in range(cfg.n_train):
        data = build_healthy(_STREAM_TRAIN, j)
        rel = f"train/healthy_{j:03d}.nii"
        write_volume(MultiChannelVolume(data.reshape(s, *cfg.dims).astype(np.float32)), out / rel)
        manifest["train"].append(rel)

    for j in range(cfg.n_test_healthy):
        data = build_healthy(_STREAM_TEST_HEALTHY, j)
        rel = f"test/healthy_{j:03d}.nii"
        write_volume(MultiChannelVolume(data.reshape(s, *cfg.dims).astype(np.float32)), out / rel)
        manifest["test_healthy"].append(rel)

    for j in range(cfg.n_test_path):
        rng = np.random.default_rng([cfg.seed, _STREAM_TEST_PATH, j])
        v = int(np.prod(cfg.dims))
        data = np.zeros((s, v))
        if cfg.n_anatomy_fields:
            weights = rng.standard_normal(cfg.n_anatomy_fields)
            data += (cfg.anatomy_strength / np.sqrt(cfg.n_anatomy_fields)) * np.einsum(
                "b,bsv->sv", weights, bank
            )
        white = rng.standard_normal((s, v))
        lesion = _place_lesions(cfg, mask, rng)
        lesion_flat = lesion.reshape(-1)
        noise = chol @ white
        if cfg.lesion_breaks_correlation:
            # independent noise of identical per-channel variance: marginals
            # intact, cross-channel structure gone
            idx = np.flatnonzero(lesion_flat)
            noise[:, idx] = rng.standard_normal((s, idx.size))
        data += cfg.noise_sigma * noise
        if cfg.lesion_intensity_shift:
            data[:, lesion_flat] += cfg.lesion_intensity_shift

        rel = f"test/path_{j:03d}.nii"
        rel_mask = f"test/path_{j:03d}_lesion.nii"
        write_volume(MultiChannelVolume(data.reshape(s, *cfg.dims).astype(np.float32)), out / rel)
        write_volume(HeadMask(lesion), out / rel_mask)
        manifest["test_pathological"].append({"study": rel, "lesion_mask": rel_mask})

    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
