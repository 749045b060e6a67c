"""Analytic desk-scale test scene and its stereo sequence renderer.

The scene is a bounded ground plane plus a few axis-aligned boxes and a
ball, each carrying a class label. Both stereo views are ray-cast
against the same world-anchored procedural texture, which makes the
right image pixel-for-pixel consistent with forward-warping the left
image by the analytic disparity wherever both cameras see the surface,
while occluded regions still render correctly. Ground truth (depth,
labels, a labeled surface point cloud) comes from the same analytic
geometry, so rendered sequences double as evaluation fixtures.

Camera convention: x right, y down, z forward; the ground plane is a
y = const slab below the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .fusion import SemanticMesh
from .mesh_io import export_mesh
from .scene_io import (
    CameraIntrinsics,
    ClassPalette,
    DepthMap,
    LabelMap,
    Pose,
    StereoRig,
    frame_path,
    write_calib,
    write_depth_png,
    write_image_png,
    write_labels_png,
    write_palette,
    write_poses,
)

_NO_HIT = np.inf
_EPS = 1e-9


@dataclass(frozen=True)
class GroundPlane:
    """Horizontal rectangle y = height, |x| <= half_x, |z| <= half_z."""
    height: float
    label: int
    half_x: float = 4.8
    half_z: float = 4.8


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    label: int

    def __post_init__(self):
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box lo must be strictly below hi on every axis")


@dataclass(frozen=True)
class Ball:
    center: Tuple[float, float, float]
    radius: float
    label: int

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass
class SyntheticScene:
    palette: ClassPalette
    plane: GroundPlane
    boxes: Sequence[Box] = ()
    balls: Sequence[Ball] = ()
    trajectory: List[Pose] = field(default_factory=list)
    bound: float = 5.0   # half-extent of the scene cube

    def __post_init__(self):
        if self.palette.sky_index is None:
            raise ValueError("scene palette must declare a sky class")
        labels = [self.plane.label] + [b.label for b in self.boxes] \
            + [b.label for b in self.balls]
        if any(l >= len(self.palette) or l == self.palette.sky_index for l in labels):
            raise ValueError("primitive labels must be non-sky palette indices")

    @property
    def sky_index(self) -> int:
        return self.palette.sky_index


def _intersect(scene: SyntheticScene, origin: np.ndarray, dirs: np.ndarray):
    """First hit of each ray: (t, label, point). t is the ray parameter
    (camera z-depth when dirs have unit camera-z); misses get inf/sky."""
    n = len(dirs)
    t_best = np.full(n, _NO_HIT)
    labels = np.full(n, scene.sky_index, dtype=np.uint8)

    def consider(t, hit, label):
        win = hit & (t > _EPS) & (t < t_best)
        t_best[win] = t[win]
        labels[win] = label

    pl = scene.plane
    dy = dirs[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (pl.height - origin[1]) / dy
    p = origin + t[:, None] * dirs
    consider(t, (np.abs(dy) > _EPS) & (np.abs(p[:, 0]) <= pl.half_x)
             & (np.abs(p[:, 2]) <= pl.half_z), pl.label)

    safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    for box in scene.boxes:
        t1 = (np.asarray(box.lo) - origin) / safe
        t2 = (np.asarray(box.hi) - origin) / safe
        tn = np.minimum(t1, t2).max(axis=1)
        tf = np.maximum(t1, t2).min(axis=1)
        consider(tn, tn <= tf, box.label)

    for ball in scene.balls:
        oc = origin - np.asarray(ball.center)
        a = (dirs * dirs).sum(axis=1)
        b = (dirs * oc).sum(axis=1)
        disc = b * b - a * ((oc * oc).sum() - ball.radius ** 2)
        ok = disc > 0
        t = np.full(n, _NO_HIT)
        t[ok] = (-b[ok] - np.sqrt(disc[ok])) / a[ok]
        consider(t, ok, ball.label)

    return t_best, labels, origin + np.where(np.isfinite(t_best), t_best, 0.0)[:, None] * dirs


def _pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    u, v = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    return np.stack([(u - intr.cx) / intr.fx,
                     (v - intr.cy) / intr.fy,
                     np.ones_like(u, dtype=np.float64)], axis=-1).reshape(-1, 3)


def cast_view(scene: SyntheticScene, pose: Pose, intr: CameraIntrinsics):
    """Render one camera: (depth, labels, world hit points). Depth is the
    exact camera z-distance; sky pixels get depth 0 (invalid)."""
    dirs = _pixel_rays(intr) @ pose.rotation.T
    t, lab, pts = _intersect(scene, pose.translation, dirs)
    depth = np.where(np.isfinite(t), t, 0.0).reshape(intr.height, intr.width)
    return (depth, lab.reshape(intr.height, intr.width),
            pts.reshape(intr.height, intr.width, 3))


def _texture(points: np.ndarray) -> np.ndarray:
    """World-anchored intensity modulation in (0, 1]. Three well-separated
    octaves so that at any viewing distance at least one scale stays
    resolvable in image space (the fine octaves alias away to low-power
    noise at grazing angles instead of dominating)."""
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    m = (0.59
         + 0.17 * np.sin(11.0 * x + 7.0 * y + 9.0 * z)
         + 0.13 * np.sin(43.0 * x - 31.0 * y + 37.0 * z)
         + 0.09 * np.sin(157.0 * x + 113.0 * y - 127.0 * z))
    return np.clip(m, 0.05, 1.0)


def shade(points: np.ndarray, labels: np.ndarray, palette: ClassPalette) -> np.ndarray:
    """Procedurally textured RGB rendering; sky stays flat."""
    base = palette.colors[labels].astype(np.float64)
    rgb = base * _texture(points)[..., None]
    if palette.sky_index is not None:
        sky = labels == palette.sky_index
        rgb[sky] = palette.colors[palette.sky_index]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def right_pose(pose: Pose, baseline: float) -> Pose:
    """Right camera of a rectified pair: shifted along the camera x axis."""
    return Pose(pose.rotation,
                pose.translation + pose.rotation @ np.array([baseline, 0.0, 0.0]))


# ---------------------------------------------------------------------------
# ground-truth surface sampling


def _grid2d(a_half, b_half, spacing):
    a = np.arange(-a_half, a_half + spacing / 2, spacing)
    b = np.arange(-b_half, b_half + spacing / 2, spacing)
    aa, bb = np.meshgrid(a, b)
    return aa.ravel(), bb.ravel()


def sample_surfaces(scene: SyntheticScene, spacing: float):
    """Uniform surface samples (points, labels) at the given spacing."""
    pts, lab = [], []

    pl = scene.plane
    xx, zz = _grid2d(pl.half_x, pl.half_z, spacing)
    pts.append(np.stack([xx, np.full_like(xx, pl.height), zz], axis=1))
    lab.append(np.full(len(xx), pl.label))

    for box in scene.boxes:
        lo, hi = np.asarray(box.lo), np.asarray(box.hi)
        ext = (hi - lo) / 2
        mid = (hi + lo) / 2
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            uu, vv = _grid2d(ext[u], ext[v], spacing)
            for side in (lo[axis], hi[axis]):
                p = np.empty((len(uu), 3))
                p[:, axis] = side
                p[:, u] = uu + mid[u]
                p[:, v] = vv + mid[v]
                pts.append(p)
                lab.append(np.full(len(uu), box.label))

    for ball in scene.balls:
        n = max(16, int(np.ceil(4 * np.pi * ball.radius ** 2 / spacing ** 2)))
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)           # Fibonacci sphere
        theta = np.pi * (1 + 5 ** 0.5) * i
        d = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi),
                      np.cos(phi)], axis=1)
        pts.append(np.asarray(ball.center) + ball.radius * d)
        lab.append(np.full(n, ball.label))

    return np.concatenate(pts), np.concatenate(lab).astype(np.uint8)


def visible_mask(scene: SyntheticScene, points: np.ndarray,
                 intr: CameraIntrinsics) -> np.ndarray:
    """True where some trajectory camera sees the point unoccluded
    (the ray from the camera first hits the scene at the point itself)."""
    seen = np.zeros(len(points), dtype=bool)
    for pose in scene.trajectory:
        todo = np.nonzero(~seen)[0]
        if todo.size == 0:
            break
        cam = pose.world_to_camera(points[todo])
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam[:, 0] / z * intr.fx + intr.cx
            v = cam[:, 1] / z * intr.fy + intr.cy
        infov = (z > _EPS) & (u >= 0) & (u <= intr.width - 1) \
            & (v >= 0) & (v <= intr.height - 1)
        idx = todo[infov]
        if idx.size == 0:
            continue
        dirs = points[idx] - pose.translation
        t, _, _ = _intersect(scene, pose.translation, dirs)
        seen[idx] = t > 1.0 - 1e-6
    return seen


# ---------------------------------------------------------------------------
# sequence rendering


def render_synthetic(scene: SyntheticScene, rig: StereoRig, sigma: float,
                     out_root, voxel_size: float = 0.03, seed: int = 0) -> dict:
    """Write a full sequence directory for the scene.

    Produces left/right stereo pairs, exact ground-truth depth and label
    maps for the left camera, calibration, poses, the palette, and a
    visibility-filtered labeled surface cloud (gt_cloud.ply) sampled at
    half-voxel spacing, i.e. at least 4 points per surface voxel.
    Image noise of standard deviation ``sigma`` gray levels is added
    independently to both views.
    """
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if not scene.trajectory:
        raise ValueError("scene has an empty trajectory")
    for i, pose in enumerate(scene.trajectory):
        if np.abs(pose.translation).max() > scene.bound:
            raise ValueError(f"trajectory leaves scene bounds at frame {i}")

    root = Path(out_root)
    for sub in ("left", "right", "gt_depth", "gt_labels"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    intr = rig.intrinsics
    rng = np.random.default_rng(seed)

    def emit(img, path):
        if sigma > 0:
            img = np.clip(img + rng.normal(scale=sigma, size=img.shape), 0, 255)
            img = np.rint(img).astype(np.uint8)
        write_image_png(img, path)

    for fid, pose in enumerate(scene.trajectory):
        depth, labels, points = cast_view(scene, pose, intr)
        if not (labels != scene.sky_index).any():
            raise ValueError(f"camera {fid} sees no scene object")
        emit(shade(points, labels, scene.palette), frame_path(root, "left", fid))

        _, r_labels, r_points = cast_view(scene, right_pose(pose, rig.baseline), intr)
        emit(shade(r_points, r_labels, scene.palette), frame_path(root, "right", fid))

        write_depth_png(DepthMap(depth), frame_path(root, "gt_depth", fid))
        write_labels_png(LabelMap(labels, scene.palette),
                         frame_path(root, "gt_labels", fid))

    write_calib(rig, root / "calib.json")
    write_poses(scene.trajectory, root / "poses.txt")
    write_palette(scene.palette, root / "palette.json")

    points, labels = sample_surfaces(scene, voxel_size / 2)
    keep = visible_mask(scene, points, intr)
    cloud = SemanticMesh(points[keep].astype(np.float32),
                         np.zeros((0, 3), np.int64),
                         labels[keep],
                         scene.palette.colors[labels[keep]])
    export_mesh(cloud, root / "gt_cloud.ply")

    return {"frames": len(scene.trajectory), "cloud_points": int(keep.sum()),
            "root": str(root)}


# ---------------------------------------------------------------------------
# stock scene


def garden_palette() -> ClassPalette:
    return ClassPalette(
        names=("ground", "hedge", "planter", "topiary", "sky"),
        colors=np.array([[150, 120, 90], [60, 150, 70], [160, 80, 60],
                         [90, 110, 170], [200, 220, 235]], dtype=np.uint8),
        sky_index=4,
    )


def garden_rig(width: int = 320, height: int = 240) -> StereoRig:
    f = 1.6 * width   # keeps max scene disparity below 64 at any size
    return StereoRig(CameraIntrinsics(fx=f, fy=f, cx=width / 2 - 0.5,
                                      cy=height / 2 - 0.5,
                                      width=width, height=height),
                     baseline=0.075)


def garden_scene(n_frames: int = 20) -> SyntheticScene:
    """Desk-scale stand-in for a garden plot: ground, two box shrubs,
    one spherical topiary; a slow lateral dolly with a gentle yaw."""
    palette = garden_palette()
    plane = GroundPlane(height=0.45, label=0)
    boxes = (
        Box(lo=(-0.55, 0.05, 1.55), hi=(-0.15, 0.45, 1.95), label=1),
        Box(lo=(0.20, 0.13, 2.05), hi=(0.60, 0.45, 2.45), label=2),
    )
    balls = (Ball(center=(0.02, 0.24, 2.70), radius=0.21, label=3),)

    pitch = np.deg2rad(-5.0)   # look slightly down: ground fills the lower band
    rot_x = np.array([[1.0, 0.0, 0.0],
                      [0.0, np.cos(pitch), -np.sin(pitch)],
                      [0.0, np.sin(pitch), np.cos(pitch)]])
    trajectory = []
    for i in range(n_frames):
        s = i / (n_frames - 1) if n_frames > 1 else 0.0
        yaw = np.deg2rad(-2.0 + 4.0 * s)
        rot_y = np.array([[np.cos(yaw), 0.0, np.sin(yaw)],
                          [0.0, 1.0, 0.0],
                          [-np.sin(yaw), 0.0, np.cos(yaw)]])
        t = np.array([-0.18 + 0.36 * s, -0.02 + 0.04 * s, 0.22 * s])
        trajectory.append(Pose(rot_y @ rot_x, t))

    return SyntheticScene(palette=palette, plane=plane, boxes=boxes,
                          balls=balls, trajectory=trajectory)


def courtyard_scene(n_frames: int = 10) -> SyntheticScene:
    """Bounded yard for fusion studies. The camera sits ~1.25 m above the
    ground and pitches down 15 degrees, so every visible surface is hit
    steeply enough for projective integration to keep a full truncation
    band around it. The garden scene's far lawn is not: out there one
    voxel step in height walks across the whole band, fusion drops the
    floor, and any comparison between depth sources is dominated by that
    dropout instead of by depth quality."""
    pitch = np.deg2rad(-15.0)
    tilt = np.array([[1.0, 0.0, 0.0],
                     [0.0, np.cos(pitch), -np.sin(pitch)],
                     [0.0, np.sin(pitch), np.cos(pitch)]])
    trajectory = []
    for i in range(n_frames):
        s = i / max(n_frames - 1, 1)
        yaw = np.deg2rad(-2.0 + 4.0 * s)
        rot_y = np.array([[np.cos(yaw), 0.0, np.sin(yaw)],
                          [0.0, 1.0, 0.0],
                          [-np.sin(yaw), 0.0, np.cos(yaw)]])
        t = np.array([-0.20 + 0.40 * s, 0.05, 0.30 * s])
        trajectory.append(Pose(rot_y @ tilt, t))

    return SyntheticScene(
        palette=garden_palette(),
        plane=GroundPlane(height=1.30, label=0, half_x=3.2, half_z=3.2),
        boxes=(Box(lo=(-0.75, 0.75, 1.60), hi=(-0.15, 1.30, 2.05), label=1),
               Box(lo=(0.25, 1.02, 2.25), hi=(0.85, 1.30, 2.65), label=2)),
        balls=(Ball(center=(0.05, 1.02, 2.95), radius=0.28, label=3),),
        trajectory=tuple(trajectory),
    )
