"""Map file formats shared with the reconstruction pipeline.

The two packages talk through files only, so the formats are fixed and
dumb on purpose:

    depth    16-bit grayscale PNG, value = depth in millimeters, 0 = invalid
    labels   8-bit grayscale PNG of class indices
    scores   little-endian float32 blob, 16-byte header
             (magic ``SFS1``, then uint32 width, height, num_classes),
             data laid out (height, width, class) row-major

Frames are named ``%06d.png`` (``%06d.bin`` for scores) inside a
``depth/`` / ``labels/`` / ``scores/`` subdirectory.
"""

from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

SCORES_MAGIC = b"SFS1"
DEPTH_SCALE_MM = 1000.0
MAX_ENCODABLE_DEPTH_M = 65.535

_FRAME_RE = re.compile(r"^(\d{6})\.(png|bin)$")


class MapIOError(RuntimeError):
    """A map file is missing, truncated, or not in the expected format."""


def frame_path(root, sub: str, frame_id: int, ext: str = "png") -> Path:
    return Path(root) / sub / f"{frame_id:06d}.{ext}"


def frame_ids(directory) -> list:
    """Sorted frame ids of all %06d.png / %06d.bin files in a directory."""
    d = Path(directory)
    if not d.is_dir():
        return []
    return sorted(int(m.group(1)) for m in map(_FRAME_RE.match, os.listdir(d)) if m)


def read_image_png(path) -> np.ndarray:
    try:
        with Image.open(str(path)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as e:
        raise MapIOError(f"corrupt or unreadable image {path}: {e}") from e


def read_depth_png(path) -> np.ndarray:
    """Depth in meters as float32, 0 where invalid."""
    try:
        with Image.open(str(path)) as im:
            mm = np.asarray(im, dtype=np.float32)
    except (OSError, SyntaxError) as e:
        raise MapIOError(f"corrupt or unreadable depth map {path}: {e}") from e
    if mm.ndim != 2:
        raise MapIOError(f"depth PNG {path} is not single-channel")
    return mm / DEPTH_SCALE_MM


def write_depth_png(depth_m: np.ndarray, path) -> None:
    v = np.asarray(depth_m)
    over = (v >= MAX_ENCODABLE_DEPTH_M) & (v > 0)
    if over.any():
        raise ValueError(f"{int(over.sum())} depth pixel(s) do not fit in "
                         "16-bit millimeters")
    mm = np.where(v > 0, np.rint(v * DEPTH_SCALE_MM), 0.0).astype(np.uint16)
    Image.fromarray(mm).save(str(path))


def read_labels_png(path) -> np.ndarray:
    try:
        with Image.open(str(path)) as im:
            lab = np.asarray(im)
    except (OSError, SyntaxError) as e:
        raise MapIOError(f"corrupt or unreadable label map {path}: {e}") from e
    if lab.ndim != 2 or lab.dtype != np.uint8:
        raise MapIOError(f"label PNG {path} is not 8-bit single-channel")
    return lab


def write_labels_png(labels: np.ndarray, path) -> None:
    lab = np.asarray(labels)
    if lab.dtype != np.uint8:
        if lab.min() < 0 or lab.max() > 255:
            raise ValueError("label indices do not fit in uint8")
        lab = lab.astype(np.uint8)
    Image.fromarray(lab).save(str(path))


def write_scores_bin(scores: np.ndarray, path) -> None:
    s = np.asarray(scores, dtype="<f4")
    if s.ndim != 3:
        raise ValueError(f"scores must be (height, width, classes), got {s.shape}")
    h, w, c = s.shape
    with open(str(path), "wb") as f:
        f.write(SCORES_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(np.ascontiguousarray(s).tobytes())


def read_scores_bin(path) -> np.ndarray:
    with open(str(path), "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != SCORES_MAGIC:
            raise MapIOError(f"bad score blob header in {path}")
        w, h, c = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h * c:
        raise MapIOError(f"score blob {path} truncated: expected {w * h * c} "
                         f"floats, got {data.size}")
    return data.reshape(h, w, c)
