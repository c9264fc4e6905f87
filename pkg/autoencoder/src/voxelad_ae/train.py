"""Training loop with early stopping on the test loss.

The model is trained with Adam on the mean squared reconstruction error of
z-map volumes. Training halts once the test loss has not improved for
`patience` epochs (or at `max_epochs`); the returned weights are those of
the lowest-test-loss epoch. Epoch 0 in the trace is the untrained model's
loss, evaluated before any update.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import AEConfig
from .model import ConvAutoencoder3D, build_model
from .niftiio import read_channels


@dataclass
class TrainingTrace:
    train_loss: list[float] = field(default_factory=list)  # index = epoch
    test_loss: list[float] = field(default_factory=list)
    selected_epoch: int = 0

    def to_json(self, path: str | Path):
        with open(path, "w") as fh:
            json.dump(
                {
                    "train_loss": self.train_loss,
                    "test_loss": self.test_loss,
                    "selected_epoch": self.selected_epoch,
                },
                fh, indent=2,
            )


def load_zmaps(paths: list[str | Path], cfg: AEConfig) -> torch.Tensor:
    """Stack z-map files into an (N, S, X, Y, Z) tensor."""
    vols = []
    for p in paths:
        data, _ = read_channels(p)
        if data.shape != (cfg.channels, *cfg.dims):
            raise ValueError(
                f"{p}: shape {data.shape} does not match config "
                f"({cfg.channels}, {cfg.dims})"
            )
        vols.append(torch.from_numpy(data))
    if not vols:
        raise ValueError("need at least one study")
    return torch.stack(vols)


@torch.no_grad()
def _eval_loss(model: nn.Module, data: torch.Tensor, cfg: AEConfig, loss_fn) -> float:
    model.eval()
    total = 0.0
    for lo in range(0, len(data), cfg.batch_size):
        batch = data[lo:lo + cfg.batch_size].to(cfg.device)
        total += loss_fn(model(batch), batch).item() * len(batch)
    return total / len(data)


def train(
    model: ConvAutoencoder3D,
    train_data: torch.Tensor,
    test_data: torch.Tensor,
    cfg: AEConfig,
) -> tuple[ConvAutoencoder3D, TrainingTrace]:
    if len(train_data) < 1 or len(test_data) < 1:
        raise ValueError("need at least one training and one test study")
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    loss_fn = nn.MSELoss()
    rng = np.random.default_rng(cfg.seed)

    trace = TrainingTrace()
    trace.train_loss.append(_eval_loss(model, train_data, cfg, loss_fn))
    trace.test_loss.append(_eval_loss(model, test_data, cfg, loss_fn))
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = rng.permutation(len(train_data))
        running = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = train_data[order[lo:lo + cfg.batch_size]].to(cfg.device)
            opt.zero_grad()
            loss = loss_fn(model(batch), batch)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            opt.step()
            running += loss.item() * len(batch)
        trace.train_loss.append(running / len(train_data))
        trace.test_loss.append(_eval_loss(model, test_data, cfg, loss_fn))

        if trace.test_loss[-1] < trace.test_loss[best_epoch]:
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        if epoch - best_epoch >= cfg.patience:
            break

    trace.selected_epoch = best_epoch
    model.load_state_dict(best_state)
    return model, trace


def save_model_dir(model: ConvAutoencoder3D, cfg: AEConfig, trace: TrainingTrace,
                   out_dir: str | Path, mask_file: str | Path | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out / "weights.pt")
    cfg.to_json(out / "config.json")
    trace.to_json(out / "trace.json")
    if mask_file is not None:
        (out / "mask.nii").write_bytes(Path(mask_file).read_bytes())


def load_model_dir(model_dir: str | Path) -> tuple[ConvAutoencoder3D, AEConfig]:
    model_dir = Path(model_dir)
    cfg = AEConfig.from_json(model_dir / "config.json")
    model = build_model(cfg)
    state = torch.load(model_dir / "weights.pt", map_location=cfg.device, weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, cfg
