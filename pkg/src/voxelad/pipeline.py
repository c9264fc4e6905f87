"""End-to-end orchestration: normalize, fit, score, evaluate, compare.

Every intermediate artifact (normalized studies, models, z-maps, score
maps, reports) is written under the output directory and can be reloaded
independently. The run is a pure function of (input files, config, seed);
a MANIFEST records completion state, and any stage failure aborts with a
stage-tagged error while leaving the MANIFEST marked incomplete.

The autoencoder participates through files only: list "ae-external" among
the models and point ae_scores_dir at score maps named after the test
studies.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, stats
from .baseline import fit_baseline, score_baseline, z_transform
from .covariance import fit_covariance, score_covariance
from .grids import MultiChannelVolume, ScoreMap, load_study
from .model_store import load_model, save_model
from .nifti import read_mask, read_score_map, read_volume, write_volume
from .preprocess import normalize_study
from .projection import fit_projection, score_projection

log = logging.getLogger("voxelad")

KNOWN_MODELS = ("bm", "cm", "pm", "ae-external")
AE_EXTERNAL = "ae-external"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    mask: str
    train: list[str]
    test_healthy: list[str]
    test_pathological: list[dict]  # {"study": path, "lesion_mask": path}
    out_dir: str
    models: list[str] = field(default_factory=lambda: ["bm", "cm"])
    eval_tasks: list[str] = field(default_factory=lambda: ["voxel", "sample"])
    bootstrap_iters: int = 10000
    bootstrap_metrics: list[str] = field(default_factory=lambda: ["ap", "auc"])
    seed: int = 0
    threads: int = 1
    normalize_inputs: bool = True
    emit_zmaps: bool = False
    ae_scores_dir: str | None = None
    alpha: float = 0.05
    pool_all_voxels: bool = False

    def __post_init__(self):
        if not self.models:
            raise ValueError("config must list at least one model")
        if not self.eval_tasks:
            raise ValueError("config must list at least one eval task")
        for m in self.models:
            if m not in KNOWN_MODELS:
                raise ValueError(f"unknown model {m!r} (choose from {KNOWN_MODELS})")
        for t in self.eval_tasks:
            if t not in ("voxel", "sample"):
                raise ValueError(f"unknown eval task {t!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        with open(path) as fh:
            raw = json.load(fh)
        base = path.parent

        if "dataset_manifest" in raw:
            man_path = base / raw.pop("dataset_manifest")
            with open(man_path) as fh:
                man = json.load(fh)
            root = man_path.parent
            raw.setdefault("mask", str(root / man["mask"]))
            raw.setdefault("train", [str(root / p) for p in man["train"]])
            raw.setdefault("test_healthy", [str(root / p) for p in man["test_healthy"]])
            raw.setdefault(
                "test_pathological",
                [
                    {"study": str(root / e["study"]), "lesion_mask": str(root / e["lesion_mask"])}
                    for e in man["test_pathological"]
                ],
            )
        else:
            raw["mask"] = str(base / raw["mask"])
            raw["train"] = [str(base / p) for p in raw["train"]]
            raw["test_healthy"] = [str(base / p) for p in raw["test_healthy"]]
            raw["test_pathological"] = [
                {"study": str(base / e["study"]), "lesion_mask": str(base / e["lesion_mask"])}
                for e in raw["test_pathological"]
            ]
        if "out_dir" in raw:
            raw["out_dir"] = str(base / raw["out_dir"])
        if "ae_scores_dir" in raw and raw["ae_scores_dir"]:
            raw["ae_scores_dir"] = str(base / raw["ae_scores_dir"])
        boot = raw.pop("bootstrap", None)
        if boot:
            raw.setdefault("bootstrap_iters", boot.get("iters", 10000))
            raw.setdefault("bootstrap_metrics", boot.get("metrics", ["ap", "auc"]))
        return cls(**raw)


def _stem(path: str | Path) -> str:
    return Path(path).stem


@contextmanager
def _stage(name: str, state: dict):
    state["stage"] = name
    log.info("stage %s", name)
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc
    state["completed"].append(name)


def _write_manifest(out: Path, state: dict):
    with open(out / "MANIFEST.json", "w") as fh:
        json.dump(
            {
                "status": state["status"],
                "stage": state["stage"],
                "completed": state["completed"],
                "artifacts": state["artifacts"],
            },
            fh, indent=2, sort_keys=True,
        )


def run_pipeline(cfg: PipelineConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = {"status": "incomplete", "stage": "", "completed": [], "artifacts": []}
    try:
        summary = _run(cfg, out, state)
        state["status"] = "complete"
        state["stage"] = ""
        return summary
    finally:
        _write_manifest(out, state)


def _run(cfg: PipelineConfig, out: Path, state: dict) -> dict:
    artifacts = state["artifacts"]

    with _stage("inputs", state):
        mask = read_mask(cfg.mask)
        if AE_EXTERNAL in cfg.models and not cfg.ae_scores_dir:
            raise ValueError("model 'ae-external' requires ae_scores_dir")
        path_entries = list(cfg.test_pathological)
        healthy_paths = list(cfg.test_healthy)
        if "voxel" in cfg.eval_tasks:
            if not healthy_paths or not path_entries:
                raise ValueError("voxel task needs healthy and pathological test studies")
            if len(healthy_paths) != len(path_entries):
                raise ValueError(
                    "voxel task pairs healthy with pathological studies by index; "
                    f"got {len(healthy_paths)} healthy vs {len(path_entries)} pathological"
                )

    with _stage("normalize", state):
        norm_dir = out / "normalized"
        norm_dir.mkdir(exist_ok=True)

        def prepared(path: str) -> MultiChannelVolume:
            vol = load_study(path)
            return normalize_study(vol, mask) if cfg.normalize_inputs else vol

        def normalize_into(paths: list[str], seen: dict[str, Path]) -> dict[str, Path]:
            for p in paths:
                stem = _stem(p)
                if stem in seen:
                    raise ValueError(f"duplicate study file name {stem!r}")
                target = norm_dir / f"{stem}.nii"
                write_volume(prepared(p), target)
                seen[stem] = target
                artifacts.append(str(target))
            return seen

        train_norm = normalize_into(cfg.train, {})
        test_norm = normalize_into(
            healthy_paths + [e["study"] for e in path_entries], {}
        )

    fit_models = [m for m in cfg.models if m != AE_EXTERNAL]
    needs_bm = "bm" in fit_models or "pm" in fit_models or cfg.emit_zmaps
    models_dir = out / "models"
    bm = None

    with _stage("fit", state):
        models_dir.mkdir(exist_ok=True)
        train_files = [str(p) for p in train_norm.values()]
        if needs_bm:
            bm = fit_baseline(train_files, mask)
            save_model(bm, models_dir / "bm.sbad")
            artifacts.append(str(models_dir / "bm.sbad"))
        if "cm" in fit_models:
            cm = fit_covariance(train_files, mask)
            save_model(cm, models_dir / "cm.sbad")
            artifacts.append(str(models_dir / "cm.sbad"))
            del cm
        if "pm" in fit_models:
            zdir = out / "zmaps"
            zdir.mkdir(exist_ok=True)
            ztrain = []
            for stem, p in train_norm.items():
                zmap = z_transform(bm, read_volume(p))
                ztarget = zdir / f"{stem}.nii"
                write_volume(zmap, ztarget)
                ztrain.append(str(ztarget))
                artifacts.append(str(ztarget))
            pm = fit_projection(ztrain, mask, scratch_dir=out)
            save_model(pm, models_dir / "pm.sbad")
            artifacts.append(str(models_dir / "pm.sbad"))
            if pm.basis_path is not None and Path(pm.basis_path).parent == out:
                Path(pm.basis_path).unlink(missing_ok=True)
            del pm

    if cfg.emit_zmaps and bm is not None:
        with _stage("zmaps", state):
            zdir = out / "zmaps"
            zdir.mkdir(exist_ok=True)
            for stem, p in {**train_norm, **test_norm}.items():
                ztarget = zdir / f"{stem}.nii"
                if str(ztarget) not in artifacts:  # pm fitting may have written it
                    write_volume(z_transform(bm, read_volume(p)), ztarget)
                    artifacts.append(str(ztarget))

    test_stems = [_stem(p) for p in healthy_paths] + [_stem(e["study"]) for e in path_entries]

    with _stage("score", state):
        score_paths: dict[str, dict[str, Path]] = {m: {} for m in cfg.models}
        for name in fit_models:
            mdir = out / "scores" / name
            mdir.mkdir(parents=True, exist_ok=True)
            model = load_model(models_dir / f"{name}.sbad") if name != "bm" else bm

            def score_one(stem: str, model=model, name=name, mdir=mdir) -> Path:
                study = read_volume(test_norm[stem])
                if name == "bm":
                    smap = score_baseline(model, study)
                elif name == "cm":
                    smap = score_covariance(model, study)
                else:
                    zmap = z_transform(bm, study)
                    _, smap = score_projection(model, zmap)
                target = mdir / f"{stem}.nii"
                write_volume(smap, target)
                return target

            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    results = list(pool.map(score_one, test_stems))
            else:
                results = [score_one(stem) for stem in test_stems]
            for stem, target in zip(test_stems, results):
                score_paths[name][stem] = target
                artifacts.append(str(target))

        if AE_EXTERNAL in cfg.models:
            ae_dir = Path(cfg.ae_scores_dir)
            for stem in test_stems:
                candidate = ae_dir / f"{stem}.nii"
                if not candidate.exists():
                    raise ValueError(f"missing external scores for {stem!r} in {ae_dir}")
                score_paths[AE_EXTERNAL][stem] = candidate

    def load_scores(name: str, stem: str) -> ScoreMap:
        return read_score_map(score_paths[name][stem])

    voxel_reports: dict[str, list[metrics.EvalReport]] = {}
    if "voxel" in cfg.eval_tasks:
        with _stage("eval-voxel", state):
            lesions = [read_mask(e["lesion_mask"]) for e in path_entries]
            rdir = out / "reports"
            rdir.mkdir(exist_ok=True)
            for name in cfg.models:
                pairs = [
                    (
                        load_scores(name, _stem(h)),
                        load_scores(name, _stem(e["study"])),
                        lesion,
                    )
                    for h, e, lesion in zip(healthy_paths, path_entries, lesions)
                ]
                reports = metrics.voxel_task_eval(
                    pairs, mask, method=name, pool_all_voxels=cfg.pool_all_voxels
                )
                voxel_reports[name] = reports
                target = rdir / f"voxel_{name}.json"
                with open(target, "w") as fh:
                    json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
                artifacts.append(str(target))

    sample_reports: dict[str, metrics.EvalReport] = {}
    sample_scores: dict[str, np.ndarray] = {}
    sample_labels = np.array(
        [0] * len(healthy_paths) + [1] * len(path_entries), dtype=np.float64
    )
    if "sample" in cfg.eval_tasks:
        with _stage("eval-sample", state):
            rdir = out / "reports"
            rdir.mkdir(exist_ok=True)
            for name in cfg.models:
                vals = np.array(
                    [metrics.sample_score(load_scores(name, stem), mask) for stem in test_stems]
                )
                sample_scores[name] = vals
                sample_reports[name] = metrics.EvalReport(
                    method=name, task="sample",
                    ap=metrics.average_precision(vals, sample_labels),
                    auc=metrics.auc(vals, sample_labels),
                    n_pos=len(path_entries), n_neg=len(healthy_paths),
                )
            target = rdir / "sample_scores.csv"
            with open(target, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["study", "label"] + list(cfg.models))
                for i, stem in enumerate(test_stems):
                    writer.writerow(
                        [stem, int(sample_labels[i])]
                        + [repr(float(sample_scores[m][i])) for m in cfg.models]
                    )
            artifacts.append(str(target))

    # one statistical test per method pair per metric per task
    method_pairs = [
        (a, b) for i, a in enumerate(cfg.models) for b in cfg.models[i + 1:]
    ]
    n_tests = len(method_pairs) * (
        ("voxel" in cfg.eval_tasks) + ("sample" in cfg.eval_tasks)
    ) * 2
    comparisons: dict = {"n_tests": n_tests, "alpha": cfg.alpha}
    if n_tests:
        comparisons["alpha_corrected"] = stats.bonferroni_threshold(cfg.alpha, n_tests)

    if method_pairs and "voxel" in cfg.eval_tasks:
        with _stage("compare-voxel", state):
            wilcoxon = {}
            for a, b in method_pairs:
                for metric_name in ("ap", "auc"):
                    va = [getattr(r, metric_name) for r in voxel_reports[a]]
                    vb = [getattr(r, metric_name) for r in voxel_reports[b]]
                    try:
                        res = stats.wilcoxon_signed_rank(
                            np.array(va), np.array(vb), m_tests=n_tests
                        )
                        res.method_a, res.method_b = a, b
                        wilcoxon[f"{a}-{b}:{metric_name}"] = res.to_dict()
                    except ValueError as exc:
                        wilcoxon[f"{a}-{b}:{metric_name}"] = {"error": str(exc)}
            comparisons["wilcoxon_voxel"] = wilcoxon
            target = out / "reports" / "wilcoxon_voxel.json"
            with open(target, "w") as fh:
                json.dump(wilcoxon, fh, indent=2, sort_keys=True)
            artifacts.append(str(target))

    if method_pairs and "sample" in cfg.eval_tasks:
        with _stage("compare-sample", state):
            boots = {}
            for metric_name in cfg.bootstrap_metrics:
                res = stats.bootstrap_compare(
                    sample_scores, sample_labels, metric=metric_name,
                    iters=cfg.bootstrap_iters, seed=cfg.seed,
                    ci_level=1.0 - (comparisons.get("alpha_corrected", cfg.alpha)),
                )
                boots[metric_name] = res.to_dict()
            comparisons["bootstrap_sample"] = boots
            target = out / "reports" / "bootstrap_sample.json"
            with open(target, "w") as fh:
                json.dump(boots, fh, indent=2, sort_keys=True)
            artifacts.append(str(target))

    with _stage("summary", state):
        table: dict[str, dict] = {}
        for name in cfg.models:
            row = {"ap_voxel": None, "auc_voxel": None, "ap_sample": None, "auc_sample": None}
            if name in voxel_reports:
                row["ap_voxel"] = float(np.median([r.ap for r in voxel_reports[name]]))
                row["auc_voxel"] = float(np.median([r.auc for r in voxel_reports[name]]))
            if name in sample_reports:
                row["ap_sample"] = sample_reports[name].ap
                row["auc_sample"] = sample_reports[name].auc
            table[name] = row

        summary = {
            "seed": cfg.seed,
            "models": list(cfg.models),
            "tasks": list(cfg.eval_tasks),
            "table": table,
            "comparisons": comparisons,
        }
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        artifacts.append(str(out / "summary.json"))
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "ap_voxel", "auc_voxel", "ap_sample", "auc_sample"])
            for name, row in table.items():
                writer.writerow(
                    [name] + ["" if row[k] is None else repr(row[k])
                              for k in ("ap_voxel", "auc_voxel", "ap_sample", "auc_sample")]
                )
        artifacts.append(str(out / "summary.csv"))

    return summary
