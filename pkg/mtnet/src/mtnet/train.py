"""Joint training loop: masked cross-entropy plus masked L1 on depth.

Both losses average over their own valid pixels, so a frame where one
ground truth is entirely missing simply contributes nothing to that
task. A loss whose weight is zero is left out of the graph entirely;
the other decoder then receives no gradient at all, not just a small
one.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import torch
import torch.nn.functional as F

from .config import NetConfig, TrainConfig
from .data import DataError, FrameSet
from .model import MultiTaskNet, build


def seg_loss(logits, labels, num_classes: int):
    """Cross-entropy over pixels whose label is a real class index."""
    valid = labels < num_classes
    if not valid.any():
        return logits.sum() * 0.0
    safe = torch.where(valid, labels, torch.zeros_like(labels))
    ce = F.cross_entropy(logits, safe, reduction="none")
    return (ce * valid).sum() / valid.sum()


def depth_loss(residual, raw_norm, gt_depth, clip_max: float):
    """L1 between refined and true depth, both clip_max-normalized,
    over pixels with a ground-truth measurement."""
    valid = gt_depth > 0
    if not valid.any():
        return residual.sum() * 0.0
    refined = raw_norm + residual
    err = torch.abs(refined - gt_depth / clip_max)
    return (err * valid).sum() / valid.sum()


def _batches(n: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(model: MultiTaskNet, dataset: FrameSet, cfg: TrainConfig) -> list:
    """Optimize in place; returns one dict per epoch with mean losses."""
    if len(dataset) == 0:
        raise DataError("training set is empty")
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    num_classes = model.config.num_classes

    history = []
    model.train()
    for epoch in range(cfg.epochs):
        sums = {"total": 0.0, "seg": 0.0, "depth": 0.0}
        n_batches = 0
        for idx in _batches(len(dataset), cfg.batch_size, gen):
            logits, residual = model(dataset.rgb[idx], dataset.raw[idx])
            ls = seg_loss(logits, dataset.gt_labels[idx], num_classes)
            ld = depth_loss(residual, dataset.raw[idx], dataset.gt_depth[idx],
                            cfg.clip_max)
            total = None
            if cfg.lambda_seg > 0:
                total = cfg.lambda_seg * ls
            if cfg.lambda_depth > 0:
                weighted = cfg.lambda_depth * ld
                total = weighted if total is None else total + weighted
            opt.zero_grad()
            total.backward()
            opt.step()
            sums["total"] += total.item()
            sums["seg"] += ls.item()
            sums["depth"] += ld.item()
            n_batches += 1
        history.append({"epoch": epoch,
                        **{k: v / n_batches for k, v in sums.items()}})
    return history


def fit(net_cfg: NetConfig, train_cfg: TrainConfig, dataset: FrameSet):
    """Seeded build + train; the one entry point that makes the whole
    checkpoint reproducible from train_cfg.seed."""
    torch.manual_seed(train_cfg.seed)
    model = build(net_cfg)
    history = train(model, dataset, train_cfg)
    return model, history


def save_checkpoint(model: MultiTaskNet, train_cfg: TrainConfig, path) -> None:
    torch.save({"net": asdict(model.config),
                "train": asdict(train_cfg),
                "state": model.state_dict()}, str(path))


def load_checkpoint(path):
    """Returns (model in eval mode, TrainConfig)."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint {p} does not exist")
    blob = torch.load(str(p), map_location="cpu", weights_only=True)
    model = build(NetConfig(**blob["net"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, TrainConfig(**blob["train"])
