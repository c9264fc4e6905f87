#!/usr/bin/env python3
"""Print the header and summary statistics of a fitted model file."""

import argparse

import numpy as np

from voxelad.baseline import BaselineModel
from voxelad.covariance import DIAGONAL_FALLBACK, CovarianceModel
from voxelad.model_store import load_model, peek_kind
from voxelad.projection import ProjectionModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("model")
    args = ap.parse_args()

    kind = peek_kind(args.model)
    model = load_model(args.model)
    print(f"{args.model}: {kind}")
    print(f"  S={model.S} dims={model.dims} V={model.n_voxels}")

    if isinstance(model, BaselineModel):
        print(f"  trained on N={model.n_train}")
        print(f"  sigma floor {model.sigma_floor:g}, {model.n_degenerate} clamped mask voxels")
        print(f"  mu range [{model.mu.min():.4g}, {model.mu.max():.4g}]")
        print(f"  sigma range [{model.sigma.min():.4g}, {model.sigma.max():.4g}]")
    elif isinstance(model, CovarianceModel):
        print(f"  trained on N={model.n_train}")
        fallback = model.ridge_used == DIAGONAL_FALLBACK
        ridged = model.ridge_used > 0
        print(f"  ridge-free voxels: {int((model.ridge_used == 0).sum())}")
        print(f"  ridged voxels: {int(ridged.sum())}, diagonal fallback: {int(fallback.sum())}")
        if ridged.any():
            print(f"  ridge magnitudes up to {model.ridge_used[ridged].max():.3g}")
    elif isinstance(model, ProjectionModel):
        print(f"  basis size K={model.K} of {len(model.source_norms)} inputs "
              f"({'orthonormal' if model.orthonormal else 'raw unit vectors'})")
        if model.dropped:
            print(f"  dropped inputs: {model.dropped}")
        gram = np.asarray(model.basis[: min(model.K, 8)], dtype=np.float64)
        dev = np.abs(gram @ gram.T - np.eye(len(gram))).max()
        print(f"  orthonormality deviation (first {len(gram)} vectors): {dev:.2e}")


if __name__ == "__main__":
    main()
