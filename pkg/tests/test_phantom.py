import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from voxelad.nifti import read_mask, read_volume
from voxelad.phantom import PhantomConfig, equicorrelation, generate_phantom


def _tree_digest(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def _small_config(**overrides):
    base = dict(
        seed=5, channels=2, dims=(16, 16, 16), n_train=3,
        n_test_healthy=2, n_test_path=2,
        channel_correlation=equicorrelation(2, 0.9),
        n_anatomy_fields=2,
        lesion_radius_range=(2.0, 3.0),
    )
    base.update(overrides)
    return PhantomConfig(**base)


def test_same_seed_bit_identical(tmp_path):
    generate_phantom(_small_config(), tmp_path / "a")
    generate_phantom(_small_config(), tmp_path / "b")
    da, db = _tree_digest(tmp_path / "a"), _tree_digest(tmp_path / "b")
    assert da == db


def test_different_seed_differs(tmp_path):
    generate_phantom(_small_config(), tmp_path / "a")
    generate_phantom(_small_config(seed=6), tmp_path / "b")
    assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b")


def test_lesion_fraction_near_target(tmp_path):
    cfg = PhantomConfig(
        seed=11, channels=2, dims=(32, 32, 32), n_train=1,
        n_test_healthy=0, n_test_path=8,
        channel_correlation=equicorrelation(2, 0.5),
        lesion_fraction=0.03,
    )
    man = generate_phantom(cfg, tmp_path)
    mask = read_mask(tmp_path / man["mask"])
    for entry in man["test_pathological"]:
        lesion = read_mask(tmp_path / entry["lesion_mask"])
        frac = lesion.data.sum() / mask.n_set
        assert 0.02 <= frac <= 0.04
        assert not lesion.data[~mask.data].any()  # lesions live inside the head


def test_healthy_channel_correlation(tmp_path):
    cfg = PhantomConfig(
        seed=1, channels=2, dims=(12, 12, 12), n_train=200,
        n_test_healthy=0, n_test_path=0,
        channel_correlation=equicorrelation(2, 0.9),
        n_anatomy_fields=0,
    )
    man = generate_phantom(cfg, tmp_path)
    mask = read_mask(tmp_path / man["mask"])
    m = mask.flat()
    data = np.stack([read_volume(tmp_path / p).flat()[:, m] for p in man["train"]])
    d = data - data.mean(axis=0)
    corr = (d[:, 0, :] * d[:, 1, :]).mean(axis=0) / (
        d[:, 0, :].std(axis=0) * d[:, 1, :].std(axis=0)
    )
    assert abs(corr.mean() - 0.9) < 0.05


def test_correlation_broken_inside_lesions(tmp_path):
    cfg = PhantomConfig(
        seed=3, channels=2, dims=(20, 20, 20), n_train=0,
        n_test_healthy=0, n_test_path=40,
        channel_correlation=equicorrelation(2, 0.9),
        n_anatomy_fields=0, lesion_breaks_correlation=True,
        lesion_fraction=0.05,
    )
    man = generate_phantom(cfg, tmp_path)
    pooled = {"lesion": [], "healthy": []}
    for entry in man["test_pathological"]:
        vol = read_volume(tmp_path / entry["study"])
        lesion = read_mask(tmp_path / entry["lesion_mask"])
        mask = read_mask(tmp_path / man["mask"])
        flat = vol.flat()
        pooled["lesion"].append(flat[:, lesion.flat()])
        pooled["healthy"].append(flat[:, mask.flat() & ~lesion.flat()])
    for key in pooled:
        pooled[key] = np.concatenate(pooled[key], axis=1).astype(np.float64)
    corr_lesion = np.corrcoef(pooled["lesion"])[0, 1]
    corr_healthy = np.corrcoef(pooled["healthy"])[0, 1]
    assert corr_healthy > 0.8
    assert abs(corr_lesion) < 0.2  # structure gone inside lesions
    # marginals preserved: per-channel std matches
    assert np.allclose(
        pooled["lesion"].std(axis=1), pooled["healthy"].std(axis=1), rtol=0.1
    )


def test_lesion_masks_nonempty_and_outputs_roundtrip(tmp_path):
    man = generate_phantom(_small_config(), tmp_path)
    assert (tmp_path / "manifest.json").exists()
    with open(tmp_path / "manifest.json") as fh:
        assert json.load(fh) == man
    for entry in man["test_pathological"]:
        lesion = read_mask(tmp_path / entry["lesion_mask"])
        assert lesion.data.any()
        vol = read_volume(tmp_path / entry["study"])
        assert vol.channels == 2 and vol.dims == (16, 16, 16)
    for p in man["train"] + man["test_healthy"]:
        vol = read_volume(tmp_path / p)
        assert np.isfinite(vol.data).all()


def test_infeasible_packing_errors(tmp_path):
    cfg = _small_config(
        lesion_fraction=0.4,
        lesion_radius_range=(1.0, 1.5),
        lesion_count_range=(1, 2),
        n_test_path=1,
    )
    with pytest.raises(ValueError, match="infeasible lesion packing"):
        generate_phantom(cfg, tmp_path)


def test_config_validation():
    with pytest.raises(ValueError, match="unit diagonal"):
        PhantomConfig(channels=2, channel_correlation=np.array([[2.0, 0.0], [0.0, 2.0]]))
    with pytest.raises(ValueError, match="positive definite"):
        PhantomConfig(channels=2, channel_correlation=np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(ValueError, match="lesion fraction"):
        PhantomConfig(lesion_fraction=0.7)


def test_config_json_round_trip():
    cfg = _small_config()
    back = PhantomConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict()
