"""Training data: frames that have an image, a raw depth map, and both
ground truths.

Everything is loaded up front into stacked tensors; the intended scale
is a few hundred small frames, not ImageNet. Inputs that do not match
the network size are resampled (images bilinearly, depth and labels by
nearest neighbor so values never mix across object boundaries).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import NetConfig
from .io import frame_ids, frame_path, read_depth_png, read_image_png, read_labels_png


class DataError(RuntimeError):
    """The training directories do not add up to a usable dataset."""


def resize_rgb(rgb: np.ndarray, size) -> np.ndarray:
    h, w = size
    if rgb.shape[:2] == (h, w):
        return rgb
    return np.asarray(Image.fromarray(rgb).resize((w, h), Image.BILINEAR))


def resize_nearest(a: np.ndarray, size) -> np.ndarray:
    h, w = size
    if a.shape == (h, w):
        return a
    return np.asarray(Image.fromarray(a).resize((w, h), Image.NEAREST))


@dataclass
class FrameSet:
    """Stacked, network-ready training tensors (float32 / int64)."""

    frame_ids: list
    rgb: torch.Tensor        # (N, 3, H, W) in [0, 1]
    raw: torch.Tensor        # (N, 1, H, W) depth / clip_max, 0 = invalid
    gt_depth: torch.Tensor   # (N, 1, H, W) meters, 0 = invalid
    gt_labels: torch.Tensor  # (N, H, W) class indices

    def __len__(self):
        return len(self.frame_ids)


def load_training_set(sequence, raw_dir, net: NetConfig, clip_max: float) -> FrameSet:
    """Gather every frame id present in all four sources.

    ``sequence`` holds left/%06d.png, gt_depth/, gt_labels/;
    ``raw_dir`` holds depth/%06d.png as written by the stereo tool.
    """
    seq, raw_dir = Path(sequence), Path(raw_dir)
    ids = [fid for fid in frame_ids(seq / "left")
           if frame_path(raw_dir, "depth", fid).is_file()
           and frame_path(seq, "gt_depth", fid).is_file()
           and frame_path(seq, "gt_labels", fid).is_file()]
    if not ids:
        raise DataError(
            f"no frame has all of {seq}/left, {raw_dir}/depth, "
            f"{seq}/gt_depth and {seq}/gt_labels")

    size = (net.height, net.width)
    rgbs, raws, gts, labs = [], [], [], []
    for fid in ids:
        rgb = read_image_png(frame_path(seq, "left", fid))
        raw = read_depth_png(frame_path(raw_dir, "depth", fid))
        gt = read_depth_png(frame_path(seq, "gt_depth", fid))
        lab = read_labels_png(frame_path(seq, "gt_labels", fid))
        if rgb.shape[:2] != raw.shape or rgb.shape[:2] != gt.shape \
                or rgb.shape[:2] != lab.shape:
            raise DataError(f"frame {fid:06d}: image is {rgb.shape[:2]}, maps "
                            f"are {raw.shape}/{gt.shape}/{lab.shape}")
        if int(lab.max()) >= net.num_classes:
            raise DataError(f"frame {fid:06d}: label {int(lab.max())} out of "
                            f"range for {net.num_classes} classes")
        rgbs.append(resize_rgb(rgb, size).astype(np.float32) / 255.0)
        raws.append(np.clip(resize_nearest(raw, size), 0.0, clip_max) / clip_max)
        gts.append(resize_nearest(gt, size))
        labs.append(resize_nearest(lab, size))

    return FrameSet(
        frame_ids=ids,
        rgb=torch.from_numpy(np.stack(rgbs)).permute(0, 3, 1, 2).contiguous(),
        raw=torch.from_numpy(np.stack(raws))[:, None],
        gt_depth=torch.from_numpy(np.stack(gts))[:, None],
        gt_labels=torch.from_numpy(np.stack(labs)).long(),
    )
