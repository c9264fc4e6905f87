"""Secondary acceptance: desk-scale training on a lesion phantom, scored
maps flowing back through the detector toolkit's evaluation pipeline.

The whole exchange happens over files and CLIs: the phantom, z-maps, and
final evaluation come from the `voxelad` executable; this package only
sees NIfTI files. Training runs the full protocol (batch size 1, lr 1e-4,
weight decay 1e-3, patience 25, max 70 epochs), so this test takes
several minutes on a laptop CPU.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest


def _run(*cmd, cwd):
    r = subprocess.run(list(map(str, cmd)), cwd=cwd, capture_output=True, text=True)
    assert r.returncode == 0, f"{cmd[0]} failed:\n{r.stdout}\n{r.stderr}"
    return r


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("ae_acceptance")


@pytest.fixture(scope="module")
def desk_run(workdir):
    """Phantom -> z-maps -> full training -> score maps -> pipeline."""
    (workdir / "phantom_cfg.json").write_text(json.dumps({
        "seed": 424242, "channels": 4, "dims": [32, 32, 32],
        "n_train": 50, "n_test_healthy": 10, "n_test_path": 10,
        "anatomy_strength": 2.0,
        "lesion_intensity_shift": 4.0, "lesion_breaks_correlation": False,
    }))
    _run(sys.executable, "-m", "voxelad.cli", "--quiet", "phantom",
         "--config", "phantom_cfg.json", "--out", "ds", cwd=workdir)

    (workdir / "pipe_zmaps.json").write_text(json.dumps({
        "dataset_manifest": "ds/manifest.json",
        "models": ["bm"], "eval_tasks": ["sample"],
        "bootstrap": {"iters": 200, "metrics": ["auc"]},
        "out_dir": "run_zmaps", "seed": 7, "emit_zmaps": True,
    }))
    _run(sys.executable, "-m", "voxelad.cli", "--quiet", "pipeline",
         "--config", "pipe_zmaps.json", cwd=workdir)

    man = json.loads((workdir / "ds/manifest.json").read_text())
    train_stems = [Path(p).stem for p in man["train"]]
    test_stems = [Path(p).stem for p in man["test_healthy"]] + [
        Path(e["study"]).stem for e in man["test_pathological"]
    ]
    (workdir / "ztrain.txt").write_text(
        "\n".join(f"run_zmaps/zmaps/{s}.nii" for s in train_stems))
    (workdir / "ztest.txt").write_text(
        "\n".join(f"run_zmaps/zmaps/{s}.nii" for s in test_stems))

    (workdir / "ae_cfg.json").write_text(json.dumps({
        "channels": 4, "dims": [32, 32, 32],
        "max_epochs": 70, "patience": 25, "seed": 11,
    }))
    _run("ae-train", "--train-list", "ztrain.txt", "--test-list", "ztest.txt",
         "--config", "ae_cfg.json", "--out", "model", "--mask", "ds/mask.nii",
         cwd=workdir)

    (workdir / "ae_scores").mkdir()
    for stem in test_stems:
        _run("ae-score", "--model", "model", "--in", f"run_zmaps/zmaps/{stem}.nii",
             "--out", f"ae_scores/{stem}.nii", cwd=workdir)

    (workdir / "pipe_eval.json").write_text(json.dumps({
        "dataset_manifest": "ds/manifest.json",
        "models": ["bm", "ae-external"], "eval_tasks": ["voxel", "sample"],
        "bootstrap": {"iters": 1000, "metrics": ["ap", "auc"]},
        "ae_scores_dir": "ae_scores", "out_dir": "run_eval", "seed": 7,
    }))
    _run(sys.executable, "-m", "voxelad.cli", "--quiet", "pipeline",
         "--config", "pipe_eval.json", cwd=workdir)

    trace = json.loads((workdir / "model/trace.json").read_text())
    summary = json.loads((workdir / "run_eval/summary.json").read_text())
    return trace, summary


def test_training_halves_untrained_test_loss(desk_run):
    trace, _ = desk_run
    selected = trace["selected_epoch"]
    ratio = trace["test_loss"][selected] / trace["test_loss"][0]
    print(f"[{'PASS' if ratio < 0.5 else 'FAIL'}] ae training: selected epoch "
          f"{selected}, test loss ratio {ratio:.3f} (need < 0.5)")
    assert ratio < 0.5
    assert selected == int(np.argmin(trace["test_loss"]))
    n_epochs = len(trace["test_loss"]) - 1
    assert n_epochs <= 70
    if n_epochs < 70:
        assert n_epochs == selected + 25  # stopped by patience


def test_score_maps_pass_primary_pipeline_with_auc_above_chance(desk_run):
    _, summary = desk_run
    row = summary["table"]["ae-external"]
    print(f"[{'PASS' if row['auc_voxel'] > 0.5 else 'FAIL'}] ae scores through "
          f"primary pipeline: voxel AUC {row['auc_voxel']:.3f} (need > 0.5)")
    assert row["auc_voxel"] > 0.5
    assert 0.0 <= row["ap_voxel"] <= 1.0
    assert 0.0 <= row["auc_sample"] <= 1.0


def test_score_maps_roundtrip_through_primary_reader(desk_run, workdir):
    from voxelad.nifti import read_score_map  # dev-only import: contract check

    files = sorted((workdir / "ae_scores").glob("*.nii"))
    assert len(files) == 20
    mask_arr = None
    for f in files[:3]:
        smap = read_score_map(f)
        assert smap.dims == (32, 32, 32)
        assert (smap.data >= 0).all()
