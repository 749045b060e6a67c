"""Inference: refined depth, label, and score maps for a whole sequence.

Each frame is resampled to the network size if needed and the outputs
are resampled back, so the written maps always match the input frames
pixel for pixel. Refined depth is the raw map plus the predicted
residual, clamped to (0, clip_max); labels are the per-pixel argmax of
the softmax scores with ties going to the lowest class index.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data import resize_nearest, resize_rgb
from .io import (
    MapIOError,
    frame_ids,
    frame_path,
    read_depth_png,
    read_image_png,
    write_depth_png,
    write_labels_png,
    write_scores_bin,
)
from .model import MultiTaskNet


def refine_frame(model: MultiTaskNet, rgb: np.ndarray, raw_depth: np.ndarray,
                 clip_max: float):
    """Run one frame; returns (refined depth [m], labels, scores (H,W,C)).

    Outputs come back at the input resolution even when the network
    runs smaller. Depth and scores are resampled by nearest neighbor:
    depth must not blur across object boundaries, and scores must keep
    their per-pixel normalization.
    """
    if rgb.shape[:2] != raw_depth.shape:
        raise ValueError(f"image {rgb.shape[:2]} and raw depth "
                         f"{raw_depth.shape} differ in size")
    orig = rgb.shape[:2]
    size = (model.config.height, model.config.width)
    raw_net = resize_nearest(raw_depth, size)

    rgb_t = torch.from_numpy(
        resize_rgb(rgb, size).astype(np.float32) / 255.0).permute(2, 0, 1)
    raw_t = torch.from_numpy(np.clip(raw_net, 0.0, clip_max) / clip_max)[None]
    with torch.no_grad():
        model.eval()
        logits, residual = model(rgb_t, raw_t)
        scores = torch.softmax(logits, dim=0).permute(1, 2, 0).numpy()

    refined = np.clip(raw_net + residual[0].numpy() * clip_max, 0.0, clip_max)
    refined = resize_nearest(refined, orig)
    if scores.shape[:2] != orig:
        scores = np.stack([resize_nearest(scores[..., c], orig)
                           for c in range(scores.shape[-1])], axis=-1)
    labels = np.argmax(scores, axis=-1).astype(np.uint8)
    return refined, labels, scores


def infer_sequence(model: MultiTaskNet, sequence, raw_dir, out_dir,
                   clip_max: float) -> int:
    """Refine every frame of ``sequence`` that has a raw depth map;
    writes depth/, labels/, scores/ under ``out_dir``. Returns the
    frame count."""
    seq, raw_dir, out = Path(sequence), Path(raw_dir), Path(out_dir)
    ids = frame_ids(seq / "left")
    if not ids:
        raise MapIOError(f"no left/%06d.png frames under {seq}")
    for sub in ("depth", "labels", "scores"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    for fid in ids:
        raw_path = frame_path(raw_dir, "depth", fid)
        if not raw_path.is_file():
            raise MapIOError(f"frame {fid:06d}: no raw depth map {raw_path}")
        rgb = read_image_png(frame_path(seq, "left", fid))
        raw = read_depth_png(raw_path)
        refined, labels, scores = refine_frame(model, rgb, raw, clip_max)
        write_depth_png(refined, frame_path(out, "depth", fid))
        write_labels_png(labels, frame_path(out, "labels", fid))
        write_scores_bin(scores, frame_path(out, "scores", fid, ext="bin"))
    return len(ids)
