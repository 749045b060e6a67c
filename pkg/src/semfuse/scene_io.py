"""Core scene types and on-disk formats shared by every pipeline stage.

Sequence directory layout::

    root/calib.json              fx, fy, cx, cy, width, height, baseline_m
    root/poses.txt               one 3x4 row-major camera-to-world matrix per line
    root/left/%06d.png           rectified left RGB frames
    root/right/%06d.png          rectified right RGB frames
    root/gt_depth/%06d.png       optional ground-truth depth (16-bit mm PNG)
    root/gt_labels/%06d.png      optional ground-truth labels (8-bit index PNG)
    root/palette.json            optional class palette

Interchange formats are deliberately simple so external tools (including
the training/inference package) can read them without custom parsers:
depth is 16-bit grayscale PNG in millimeters (0 = invalid), labels are
8-bit grayscale PNG of class indices with a JSON palette sidecar, and
class-score maps are raw little-endian float32 blobs with a 16-byte
header (magic, width, height, num_classes).
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

SCORES_MAGIC = b"SFS1"
DEPTH_SCALE_MM = 1000.0
MAX_ENCODABLE_DEPTH_M = 65.535  # uint16 millimeters


class SceneIOError(RuntimeError):
    """Raised for unreadable or inconsistent scene data."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# camera geometry


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics of a rectified camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics for the same camera resampled to a new resolution."""
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)


@dataclass(frozen=True)
class StereoRig:
    """A rectified stereo pair sharing one set of intrinsics."""

    intrinsics: CameraIntrinsics
    baseline: float  # meters, left -> right along +x

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError(f"baseline must be positive, got {self.baseline}")


class Pose:
    """Rigid camera-to-world transform (rotation + translation, meters)."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray):
        R = np.asarray(rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(translation, dtype=np.float64).reshape(3).copy()
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal (tolerance 1e-6)")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation must have determinant +1")
        self.rotation = _readonly(R)
        self.translation = _readonly(t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def camera_to_world(self, pts_cam: np.ndarray) -> np.ndarray:
        return pts_cam @ self.rotation.T + self.translation

    def world_to_camera(self, pts_world: np.ndarray) -> np.ndarray:
        return (pts_world - self.translation) @ self.rotation

    def matrix3x4(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    def __repr__(self):
        return f"Pose(t={self.translation.tolist()})"


# ---------------------------------------------------------------------------
# dense per-pixel maps


class ImageFrame:
    """An 8-bit RGB frame with its index in the sequence."""

    __slots__ = ("pixels", "frame_id")

    def __init__(self, pixels: np.ndarray, frame_id: int):
        px = np.asarray(pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {px.shape}")
        self.pixels = _readonly(px)
        self.frame_id = int(frame_id)

    @property
    def shape(self):
        return self.pixels.shape[:2]


class DepthMap:
    """Dense metric depth; values <= 0 mark invalid pixels."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"expected HxW depth, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("depth values must be finite (use <= 0 for invalid)")
        self.values = _readonly(v.copy() if v.flags.writeable else v)

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "DepthMap":
        return DepthMap(values)


class DisparityMap:
    """Dense disparity in pixels; values < 0 mark invalid pixels."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"expected HxW disparity, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("disparity values must be finite (use < 0 for invalid)")
        self.values = _readonly(v.copy() if v.flags.writeable else v)

    @property
    def valid(self) -> np.ndarray:
        return self.values >= 0

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ClassPalette:
    """Ordered class names and display colors; 'sky' drives filtering."""

    names: tuple
    colors: np.ndarray = field(repr=False)  # (C, 3) uint8
    sky_index: Optional[int] = None

    def __eq__(self, other):
        if not isinstance(other, ClassPalette):
            return NotImplemented
        return (self.names == other.names and self.sky_index == other.sky_index
                and np.array_equal(self.colors, other.colors))

    def __hash__(self):
        return hash((self.names, self.sky_index, self.colors.tobytes()))

    def __post_init__(self):
        names = tuple(self.names)
        colors = np.asarray(self.colors, dtype=np.uint8).reshape(len(names), 3)
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if len({tuple(c) for c in colors.tolist()}) != len(names):
            raise ValueError("class colors must be unique")
        sky = self.sky_index
        if sky is None and "sky" in names:
            sky = names.index("sky")
        if sky is not None and not (0 <= sky < len(names)):
            raise ValueError(f"sky_index {sky} out of range for {len(names)} classes")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "colors", _readonly(colors))
        object.__setattr__(self, "sky_index", sky)

    def __len__(self):
        return len(self.names)

    def to_json(self) -> dict:
        return {"names": list(self.names), "colors": self.colors.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ClassPalette":
        return cls(names=tuple(obj["names"]), colors=np.asarray(obj["colors"], dtype=np.uint8))

    @classmethod
    def single_class(cls, name: str = "unlabeled") -> "ClassPalette":
        return cls(names=(name,), colors=np.array([[160, 160, 160]], dtype=np.uint8))


class LabelMap:
    """Per-pixel class indices referring to a palette."""

    __slots__ = ("labels", "palette")

    def __init__(self, labels: np.ndarray, palette: ClassPalette):
        lab = np.asarray(labels)
        if lab.ndim != 2:
            raise ValueError(f"expected HxW labels, got shape {lab.shape}")
        if lab.size and int(lab.max()) >= len(palette):
            raise ValueError(f"label {int(lab.max())} out of range for {len(palette)} classes")
        if lab.size and int(lab.min()) < 0:
            raise ValueError("labels must be non-negative")
        self.labels = _readonly(lab.astype(np.uint8, copy=True))
        self.palette = palette

    @property
    def shape(self):
        return self.labels.shape


class SemanticScores:
    """Per-pixel class probabilities; each pixel sums to 1 within 1e-4."""

    __slots__ = ("scores",)

    def __init__(self, scores: np.ndarray):
        s = np.asarray(scores, dtype=np.float32)
        if s.ndim != 3:
            raise ValueError(f"expected HxWxC scores, got shape {s.shape}")
        if s.size:
            if s.min() < 0:
                raise ValueError("scores must be non-negative")
            sums = s.sum(axis=2)
            if np.abs(sums - 1.0).max() > 1e-4:
                raise ValueError("per-pixel scores must sum to 1 within 1e-4")
        self.scores = _readonly(s.copy() if s.flags.writeable else s)

    @property
    def num_classes(self) -> int:
        return self.scores.shape[2]

    def argmax_labels(self, palette: ClassPalette) -> LabelMap:
        return LabelMap(np.argmax(self.scores, axis=2).astype(np.uint8), palette)


def one_hot_scores(labels: LabelMap) -> SemanticScores:
    """One-hot encoding of a label map as a score field."""
    h, w = labels.shape
    c = len(labels.palette)
    s = np.zeros((h, w, c), dtype=np.float32)
    yy, xx = np.indices((h, w))
    s[yy, xx, labels.labels] = 1.0
    return SemanticScores(s)


# ---------------------------------------------------------------------------
# file formats


def write_image_png(pixels: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(str(path))


def read_image_png(path) -> np.ndarray:
    try:
        with Image.open(str(path)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as e:
        raise SceneIOError(f"corrupt or unreadable image {path}: {e}") from e


def write_depth_png(depth: DepthMap, path) -> None:
    """Store depth as 16-bit grayscale PNG, value = millimeters, 0 = invalid."""
    v = depth.values
    over = (v >= MAX_ENCODABLE_DEPTH_M) & (v > 0)
    if over.any():
        raise ValueError(
            f"{int(over.sum())} depth pixel(s) >= {MAX_ENCODABLE_DEPTH_M} m cannot be "
            "encoded as 16-bit millimeters"
        )
    mm = np.where(v > 0, np.rint(v * DEPTH_SCALE_MM), 0.0).astype(np.uint16)
    Image.fromarray(mm).save(str(path))


def read_depth_png(path) -> DepthMap:
    try:
        with Image.open(str(path)) as im:
            mm = np.asarray(im, dtype=np.float32)
    except (OSError, SyntaxError) as e:
        raise SceneIOError(f"corrupt or unreadable depth map {path}: {e}") from e
    if mm.ndim != 2:
        raise SceneIOError(f"depth PNG {path} is not single-channel")
    return DepthMap(mm / DEPTH_SCALE_MM)


def write_labels_png(labels: LabelMap, path) -> None:
    """Store class indices as 8-bit grayscale PNG (lossless)."""
    Image.fromarray(labels.labels).save(str(path))


def read_labels_png(path, palette: ClassPalette) -> LabelMap:
    try:
        with Image.open(str(path)) as im:
            lab = np.asarray(im)
    except (OSError, SyntaxError) as e:
        raise SceneIOError(f"corrupt or unreadable label map {path}: {e}") from e
    if lab.ndim != 2 or lab.dtype != np.uint8:
        raise SceneIOError(f"label PNG {path} is not 8-bit single-channel")
    if lab.size and int(lab.max()) >= len(palette):
        raise SceneIOError(
            f"label PNG {path} holds index {int(lab.max())} but palette has {len(palette)} classes"
        )
    return LabelMap(lab, palette)


def write_scores_bin(scores: SemanticScores, path) -> None:
    """Raw little-endian float32 score blob with a 16-byte header."""
    h, w, c = scores.scores.shape
    with open(str(path), "wb") as f:
        f.write(SCORES_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(np.ascontiguousarray(scores.scores, dtype="<f4").tobytes())


def read_scores_bin(path) -> SemanticScores:
    with open(str(path), "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != SCORES_MAGIC:
            raise SceneIOError(f"bad score blob header in {path}")
        w, h, c = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h * c:
        raise SceneIOError(f"score blob {path} truncated: expected {w * h * c} floats, got {data.size}")
    return SemanticScores(data.reshape(h, w, c))


def write_calib(rig: StereoRig, path) -> None:
    k = rig.intrinsics
    obj = {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
           "width": k.width, "height": k.height, "baseline_m": rig.baseline}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_calib(path) -> StereoRig:
    try:
        obj = json.loads(Path(path).read_text())
        k = CameraIntrinsics(obj["fx"], obj["fy"], obj["cx"], obj["cy"],
                             int(obj["width"]), int(obj["height"]))
        return StereoRig(k, float(obj["baseline_m"]))
    except FileNotFoundError:
        raise SceneIOError(f"missing calibration file {path}")
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise SceneIOError(f"bad calibration file {path}: {e}") from e


def write_poses(poses: Sequence[Pose], path) -> None:
    """One 3x4 row-major camera-to-world matrix per line."""
    with open(str(path), "w") as f:
        for p in poses:
            f.write(" ".join(f"{x:.12g}" for x in p.matrix3x4().ravel()) + "\n")


def read_poses(path) -> list:
    poses = []
    with open(str(path)) as f:
        for i, line in enumerate(f):
            if not line.strip():
                continue
            vals = [float(x) for x in line.split()]
            if len(vals) != 12:
                raise SceneIOError(f"pose line {i} in {path} has {len(vals)} values, expected 12")
            m = np.array(vals).reshape(3, 4)
            poses.append(Pose(m[:, :3], m[:, 3]))
    return poses


def write_palette(palette: ClassPalette, path) -> None:
    Path(path).write_text(json.dumps(palette.to_json(), indent=2) + "\n")


def read_palette(path) -> ClassPalette:
    return ClassPalette.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# sequence access

_FRAME_RE = re.compile(r"^(\d{6})\.png$")


def frame_path(root, sub: str, frame_id: int) -> Path:
    return Path(root) / sub / f"{frame_id:06d}.png"


class SequenceReader:
    """Lazy view of a sequence directory; images are read on demand.

    Frame ids come from the files present in ``left/``; the pose for frame
    id ``i`` is line ``i`` of poses.txt. Frames without a pose are skipped
    with a warning so a partially annotated sequence still loads.
    """

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise SceneIOError(f"sequence directory {self.root} does not exist")
        self.rig = read_calib(self.root / "calib.json")
        poses_file = self.root / "poses.txt"
        self._poses = read_poses(poses_file) if poses_file.exists() else []
        self.palette = None
        if (self.root / "palette.json").exists():
            self.palette = read_palette(self.root / "palette.json")

        self.frame_ids = []
        left_dir = self.root / "left"
        candidates = []
        if left_dir.is_dir():
            for name in os.listdir(left_dir):
                m = _FRAME_RE.match(name)
                if m:
                    candidates.append(int(m.group(1)))
        for fid in sorted(candidates):
            if fid >= len(self._poses):
                log.warning("frame %06d has no pose in poses.txt; skipping", fid)
                continue
            self.frame_ids.append(fid)

    def __len__(self):
        return len(self.frame_ids)

    def pose(self, frame_id: int) -> Pose:
        return self._poses[frame_id]

    def load_left(self, frame_id: int) -> ImageFrame:
        return ImageFrame(read_image_png(frame_path(self.root, "left", frame_id)), frame_id)

    def load_right(self, frame_id: int) -> ImageFrame:
        p = frame_path(self.root, "right", frame_id)
        if not p.exists():
            raise SceneIOError(f"missing right image {p}")
        return ImageFrame(read_image_png(p), frame_id)

    def load_gt_depth(self, frame_id: int) -> Optional[DepthMap]:
        p = frame_path(self.root, "gt_depth", frame_id)
        return read_depth_png(p) if p.exists() else None

    def load_gt_labels(self, frame_id: int) -> Optional[LabelMap]:
        if self.palette is None:
            return None
        p = frame_path(self.root, "gt_labels", frame_id)
        return read_labels_png(p, self.palette) if p.exists() else None

    def iter_frames(self) -> Iterator[tuple]:
        """Yield (frame_id, left, right, pose) lazily in sequence order."""
        for fid in self.frame_ids:
            yield fid, self.load_left(fid), self.load_right(fid), self.pose(fid)


def load_sequence(root, config=None) -> tuple:
    """Load a whole sequence eagerly.

    Returns ``(rig, frames)`` where frames is a list of
    ``(left ImageFrame, right ImageFrame, Pose)`` ordered by frame id.
    ``config`` is accepted for CLI symmetry and currently unused.
    """
    reader = SequenceReader(root)
    frames = [(left, right, pose) for _, left, right, pose in reader.iter_frames()]
    k = reader.rig.intrinsics
    for left, right, _ in frames:
        if left.shape != (k.height, k.width) or right.shape != (k.height, k.width):
            raise SceneIOError(
                f"frame {left.frame_id} size {left.shape} does not match calibration "
                f"({k.height}, {k.width})"
            )
    return reader.rig, frames
