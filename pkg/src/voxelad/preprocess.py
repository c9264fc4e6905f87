"""Per-study, per-channel intensity normalization over the head mask."""

from __future__ import annotations

import numpy as np

from .grids import HeadMask, MultiChannelVolume, check_same_grid


def normalize_study(study: MultiChannelVolume, mask: HeadMask) -> MultiChannelVolume:
    """Z-score each channel using mean/std over mask voxels only.

    Uses the sample standard deviation (N-1 denominator). Voxels outside the
    mask are set to zero. A channel that is constant over the mask indicates
    corrupt input and raises.
    """
    check_same_grid(study, mask, "study and mask")
    m = mask.flat()
    n = int(m.sum())
    if n < 2:
        raise ValueError("mask must contain at least 2 voxels to normalize")

    flat = study.flat().astype(np.float64)
    masked = flat[:, m]
    mu = masked.mean(axis=1)
    sd = masked.std(axis=1, ddof=1)
    bad = np.flatnonzero(sd == 0)
    if bad.size:
        raise ValueError(f"zero variance channel(s) over the mask: {bad.tolist()}")

    out = (flat - mu[:, None]) / sd[:, None]
    out[:, ~m] = 0.0
    data = out.astype(np.float32).reshape(study.data.shape)
    return MultiChannelVolume(
        data, spacing=study.spacing, normalized=True, header=study.header
    )
