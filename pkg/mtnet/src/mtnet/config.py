"""Configuration dataclasses for the network and the training loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    """Architecture knobs.

    ``widths`` are the encoder stage widths; each stage halves the
    resolution, so height and width must be divisible by
    2**len(widths). ``fusion`` is how depth-branch features reach the
    RGB branch: "add" merges them elementwise after every encoder
    stage, "none" keeps the branches separate until the decoders (an
    ablation setting, not the intended operating mode).
    """

    height: int = 64
    width: int = 64
    num_classes: int = 5
    widths: tuple = (16, 32, 64, 128)
    skip_connections: bool = True
    fusion: str = "add"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigError(f"stage widths must be positive, got {self.widths}")
        factor = 2 ** len(self.widths)
        if self.height % factor or self.width % factor:
            raise ConfigError(
                f"input size {self.height}x{self.width} is not divisible by "
                f"{factor} (2 ** {len(self.widths)} encoder stages)")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.fusion not in ("add", "none"):
            raise ConfigError(f"fusion must be 'add' or 'none', got {self.fusion!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs.

    Depth values are normalized by ``clip_max`` before they enter the
    network or the loss, so ``lambda_depth`` weighs a dimensionless L1
    against the cross-entropy. A loss weight may be zero to ablate one
    task, but not both.
    """

    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 4
    lambda_seg: float = 1.0
    lambda_depth: float = 1.0
    clip_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lambda_seg < 0 or self.lambda_depth < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.lambda_seg == 0 and self.lambda_depth == 0:
            raise ConfigError("at least one loss weight must be > 0")
        if not self.clip_max > 0:
            raise ConfigError("clip_max must be > 0")


def load_config(cls, path):
    """Build ``cls`` from a JSON object file, rejecting unknown keys."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {p} is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"{p} has unknown keys {sorted(unknown)}")
    try:
        return cls(**obj)
    except TypeError as e:
        raise ConfigError(f"bad config {p}: {e}") from e
