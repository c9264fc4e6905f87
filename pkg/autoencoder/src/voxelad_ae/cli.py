"""ae-train / ae-score command-line entry points."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import AEConfig
from .model import build_model
from .score import score_file
from .train import load_model_dir, load_zmaps, save_model_dir, train


def _read_list(path: str) -> list[Path]:
    base = Path(path).parent
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return [base / ln for ln in lines if ln and not ln.startswith("#")]


def train_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="ae-train", description="Train the 3D convolutional autoencoder on z-maps"
    )
    ap.add_argument("--train-list", required=True, help="text file of z-map paths")
    ap.add_argument("--test-list", required=True, help="z-maps used for early stopping")
    ap.add_argument("--config", help="AEConfig JSON (defaults used if omitted)")
    ap.add_argument("--out", required=True, help="output model directory")
    ap.add_argument("--mask", help="head mask copied next to the weights for scoring")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--device", default=None)
    args = ap.parse_args(argv)

    try:
        cfg = AEConfig.from_json(args.config) if args.config else AEConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.device is not None:
            cfg.device = args.device
        train_data = load_zmaps(_read_list(args.train_list), cfg)
        test_data = load_zmaps(_read_list(args.test_list), cfg)
        model = build_model(cfg)
        model, trace = train(model, train_data, test_data, cfg)
        save_model_dir(model, cfg, trace, args.out, mask_file=args.mask)
    except Exception as exc:
        print(f"error [ae-train] {exc}", file=sys.stderr)
        return 1
    print(
        f"selected epoch {trace.selected_epoch} "
        f"(test loss {trace.test_loss[trace.selected_epoch]:.6f} "
        f"from {trace.test_loss[0]:.6f} untrained), model in {args.out}"
    )
    return 0


def score_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="ae-score", description="Score a z-map with a trained autoencoder"
    )
    ap.add_argument("--model", required=True, help="model directory from ae-train")
    ap.add_argument("--in", dest="infile", required=True, help="z-map volume")
    ap.add_argument("--out", required=True, help="output score map")
    ap.add_argument("--mask", help="head mask (default: one stored with the model, "
                                   "else the input's zero pattern)")
    args = ap.parse_args(argv)

    try:
        model, cfg = load_model_dir(args.model)
        mask_path = args.mask
        if mask_path is None and (Path(args.model) / "mask.nii").exists():
            mask_path = Path(args.model) / "mask.nii"
        score_file(model, cfg, args.infile, args.out, mask_path)
    except Exception as exc:
        print(f"error [ae-score] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(train_main() if sys.argv[1:2] == ["train"] else score_main())
