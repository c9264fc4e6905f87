"""Command-line interface.

Subcommands: phantom, normalize, fit, score, eval, compare, pipeline.
Exit code 0 on success; failures print a stage-tagged message and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics, stats
from .baseline import fit_baseline, score_baseline, z_transform
from .covariance import fit_covariance, score_covariance
from .grids import MultiChannelVolume
from .model_store import load_model, peek_kind, save_model
from .nifti import read_mask, read_score_map, read_volume, write_volume
from .phantom import PhantomConfig, generate_phantom
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .preprocess import normalize_study
from .projection import fit_projection, score_projection

log = logging.getLogger("voxelad")


def _read_list(path: str) -> list[str]:
    base = Path(path).parent
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return [str(base / ln) for ln in lines if ln and not ln.startswith("#")]


def _read_csv_column(path: str) -> np.ndarray:
    vals = [float(ln.strip()) for ln in Path(path).read_text().splitlines() if ln.strip()]
    return np.asarray(vals)


def cmd_phantom(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = PhantomConfig.from_dict(json.load(fh))
    else:
        cfg = PhantomConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = generate_phantom(cfg, args.out)
    log.info(
        "phantom: %d train, %d+%d test studies in %s",
        len(manifest["train"]), len(manifest["test_healthy"]),
        len(manifest["test_pathological"]), args.out,
    )
    return 0


def cmd_normalize(args) -> int:
    mask = read_mask(args.mask)
    vol = read_volume(args.infile)
    if not isinstance(vol, MultiChannelVolume):
        raise ValueError(f"{args.infile}: expected a volume file")
    write_volume(normalize_study(vol, mask), args.out)
    return 0


def cmd_fit(args) -> int:
    mask = read_mask(args.mask)
    train = _read_list(args.train_list)
    if args.model == "bm":
        model = fit_baseline(train, mask)
    elif args.model == "cm":
        model = fit_covariance(train, mask)
    elif args.model == "pm":
        if not args.baseline:
            raise ValueError("fitting pm requires --baseline (a fitted bm model file)")
        bm = load_model(args.baseline)
        zmaps = [z_transform(bm, read_volume(p)) for p in train]
        model = fit_projection(
            zmaps, mask, orthonormalize=not args.raw_basis,
            scratch_dir=Path(args.out).parent,
        )
    else:
        raise ValueError(f"unknown model kind {args.model!r}")
    save_model(model, args.out)
    log.info("fit %s on %d studies -> %s", args.model, len(train), args.out)
    return 0


def cmd_score(args) -> int:
    model = load_model(args.model)
    kind = peek_kind(args.model)
    vol = read_volume(args.infile)
    if not isinstance(vol, MultiChannelVolume):
        raise ValueError(f"{args.infile}: expected a volume file")

    if kind == "baseline":
        smap = score_baseline(model, vol)
        if args.zmap_out:
            write_volume(z_transform(model, vol), args.zmap_out)
    elif kind == "covariance":
        smap = score_covariance(model, vol)
    else:
        if args.in_is_zmap:
            zmap = vol
        else:
            if not args.baseline:
                raise ValueError(
                    "projection scoring needs --baseline to build the z-map, "
                    "or --in-is-zmap if the input already is one"
                )
            bm = load_model(args.baseline)
            zmap = z_transform(bm, vol)
        residual, smap = score_projection(model, zmap)
        if args.residual_out:
            write_volume(residual, args.residual_out)
    write_volume(smap, args.out)
    return 0


def _write_curves(curves_dir: str, tag: str, scores, labels):
    d = Path(curves_dir)
    d.mkdir(parents=True, exist_ok=True)
    for name, rows, header in (
        ("roc", metrics.roc_points(scores, labels), ["threshold", "fpr", "tpr"]),
        ("pr", metrics.pr_points(scores, labels), ["threshold", "recall", "precision"]),
    ):
        with open(d / f"{tag}_{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([[repr(float(x)) for x in row] for row in rows])


def cmd_eval(args) -> int:
    if args.task == "sample":
        scores = _read_csv_column(args.scores)
        labels = _read_csv_column(args.labels).astype(int)
        report = metrics.EvalReport(
            method=args.method, task="sample",
            ap=metrics.average_precision(scores, labels),
            auc=metrics.auc(scores, labels),
            n_pos=int(labels.sum()), n_neg=int((1 - labels).sum()),
        )
        payload = report.to_dict()
        if args.curves_dir:
            _write_curves(args.curves_dir, "sample", scores, labels)
    else:
        mask = read_mask(args.mask)
        with open(args.pairs) as fh:
            entries = json.load(fh)
        base = Path(args.pairs).parent
        pairs = [
            (
                read_score_map(base / e["healthy"]),
                read_score_map(base / e["pathological"]),
                read_mask(base / e["lesion_mask"]),
            )
            for e in entries
        ]
        reports = metrics.voxel_task_eval(
            pairs, mask, method=args.method, pool_all_voxels=args.pool_all_voxels
        )
        payload = {
            "pairs": [r.to_dict() for r in reports],
            "median_ap": float(np.median([r.ap for r in reports])),
            "median_auc": float(np.median([r.auc for r in reports])),
        }
        if args.curves_dir:
            m = mask.flat()
            for i, (h, p, lesion) in enumerate(pairs):
                scores = np.concatenate([h.flat()[m], p.flat()[m]])
                labels = np.concatenate(
                    [np.zeros(int(m.sum()), dtype=int), lesion.flat()[m].astype(int)]
                )
                _write_curves(args.curves_dir, f"pair{i:03d}", scores, labels)
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return 0


def cmd_compare(args) -> int:
    labels = _read_csv_column(args.labels)
    name_a, name_b = Path(args.scores_a).stem, Path(args.scores_b).stem
    if name_a == name_b:
        name_a, name_b = f"{name_a}_a", f"{name_b}_b"
    scores = {
        name_a: _read_csv_column(args.scores_a),
        name_b: _read_csv_column(args.scores_b),
    }
    result = stats.bootstrap_compare(
        scores, labels, metric=args.metric, iters=args.iters,
        seed=args.seed if args.seed is not None else 0,
    )
    with open(args.out, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    return 0


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    summary = run_pipeline(cfg)
    if not args.quiet:
        for name, row in summary["table"].items():
            cells = ", ".join(
                f"{k}={v:.4f}" for k, v in row.items() if v is not None
            )
            print(f"{name}: {cells}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxelad",
        description="Unsupervised voxel-wise anomaly detection toolkit",
    )
    # global flags, accepted both before and after the subcommand
    shared = argparse.ArgumentParser(add_help=False)
    for p in (parser, shared):
        suppress = {} if p is parser else {"default": argparse.SUPPRESS}
        p.add_argument("--threads", type=int, help="worker threads", **suppress)
        p.add_argument("--seed", type=int, help="override config seed", **suppress)
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output", **suppress)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=(
        lambda **kw: argparse.ArgumentParser(parents=[shared], **kw)
    ))

    p = sub.add_parser("phantom", help="generate a synthetic dataset")
    p.add_argument("--config", help="phantom config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("normalize", help="z-score a study over the head mask")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("fit", help="fit a model on a training list")
    p.add_argument("--model", required=True, choices=["bm", "cm", "pm"])
    p.add_argument("--train-list", required=True, help="text file, one study path per line")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True, help="output model file (.sbad)")
    p.add_argument("--baseline", help="fitted bm model (required for pm)")
    p.add_argument(
        "--raw-basis", action="store_true",
        help="pm only: keep unit-normalized training vectors instead of orthogonalizing",
    )
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score a study with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", help="bm model used to z-transform input for pm scoring")
    p.add_argument("--in-is-zmap", action="store_true", help="input is already a z-map")
    p.add_argument("--zmap-out", help="bm only: also write the z-map")
    p.add_argument("--residual-out", help="pm only: also write the residual map")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="voxel- or sample-level AP/AUC")
    p.add_argument("--task", required=True, choices=["voxel", "sample"])
    p.add_argument("--scores", help="sample task: CSV, one score per line")
    p.add_argument("--labels", help="sample task: CSV, one 0/1 label per line")
    p.add_argument("--pairs", help="voxel task: JSON list of healthy/pathological/lesion files")
    p.add_argument("--mask", help="voxel task: head mask")
    p.add_argument("--method", default="", help="method name recorded in the report")
    p.add_argument("--pool-all-voxels", action="store_true",
                   help="voxel task: pool every voxel instead of head-mask voxels")
    p.add_argument("--curves-dir", help="also write ROC and PR curve points as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired bootstrap comparison of two methods")
    p.add_argument("--scores-a", required=True)
    p.add_argument("--scores-b", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--metric", default="auc", choices=["ap", "auc"])
    p.add_argument("--iters", type=int, default=100000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pipeline", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
