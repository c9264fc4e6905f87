"""Training/architecture configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class AEConfig:
    channels: int = 4
    dims: tuple[int, int, int] = (32, 32, 32)  # each divisible by 8
    stage_widths: tuple[int, int, int] = (32, 64, 16)
    bottleneck: int = 512
    leaky_slope: float = 0.2
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    batch_size: int = 1
    patience: int = 25
    max_epochs: int = 70
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if any(d % 8 != 0 or d < 8 for d in self.dims):
            raise ValueError(f"dims must be divisible by 8, got {self.dims}")
        if min(self.stage_widths) < 1 or self.bottleneck < 1:
            raise ValueError("layer widths must be >= 1")
        if self.channels < 1:
            raise ValueError("need at least one input channel")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch size, patience and max epochs must be >= 1")
        self.dims = tuple(self.dims)
        self.stage_widths = tuple(self.stage_widths)

    @classmethod
    def from_json(cls, path: str | Path) -> "AEConfig":
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_json(self, path: str | Path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
