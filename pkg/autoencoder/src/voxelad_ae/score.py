"""Residual-norm scoring of z-map volumes."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .config import AEConfig
from .model import ConvAutoencoder3D
from .niftiio import read_channels, read_mask, write_scalar_map


@torch.no_grad()
def score_zmap(
    model: ConvAutoencoder3D,
    cfg: AEConfig,
    zmap: np.ndarray,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Per-voxel channel norm of (input - reconstruction).

    Scores are zeroed outside the mask; without an explicit mask the
    zero pattern of the input is used (z-maps are zero outside the head).
    """
    if zmap.shape != (cfg.channels, *cfg.dims):
        raise ValueError(
            f"z-map shape {zmap.shape} does not match model ({cfg.channels}, {cfg.dims})"
        )
    model.eval()
    x = torch.from_numpy(np.ascontiguousarray(zmap, dtype=np.float32))
    recon = model(x.unsqueeze(0).to(cfg.device))[0].cpu().numpy()
    residual = zmap - recon
    score = np.sqrt((residual.astype(np.float64) ** 2).sum(axis=0))
    if mask is None:
        mask = (zmap != 0).any(axis=0)
    score[~mask] = 0.0
    return score.astype(np.float32)


def score_file(
    model: ConvAutoencoder3D,
    cfg: AEConfig,
    in_path: str | Path,
    out_path: str | Path,
    mask_path: str | Path | None = None,
):
    zmap, spacing = read_channels(in_path)
    mask = read_mask(mask_path) if mask_path else None
    write_scalar_map(score_zmap(model, cfg, zmap, mask), out_path, spacing)
