"""Chunked TSDF fusion of depth and semantics, with mesh extraction.

World space is discretized into a sparse set of 16-cube chunks of
lattice points; the point for integer index g sits at
origin + g * voxel_size. Each frame updates the truncated signed
distance (positive in free space, negative behind the surface) as a
running weighted average via projective association: a lattice point
projects to its nearest pixel and compares its camera depth with the
measured depth there. Lattice points also accumulate per-class score
mass, so a mesh vertex can take the argmax label of its nearest
lattice point.

Meshing runs classic marching cubes per chunk over a one-point overlap
into the positive neighbors; vertices are welded on global edge keys
so chunk seams are watertight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .mc_tables import (
    CORNER_OFFSETS,
    EDGE_AXIS,
    EDGE_BASE,
    EDGE_ENDPOINTS,
    EDGE_TABLE,
    TRI_TABLE,
)
from .scene_io import (
    CameraIntrinsics,
    ClassPalette,
    DepthMap,
    LabelMap,
    Pose,
    SemanticScores,
)

CHUNK = 16


@dataclass(frozen=True)
class FusionParams:
    """Grid geometry and integration thresholds."""

    voxel_size: float = 0.03
    truncation: Optional[float] = None   # defaults to 4 * voxel_size
    clip_near: float = 0.5
    clip_far: float = 10.0
    min_weight: float = 2.0
    max_weight: float = 100.0

    def __post_init__(self):
        if self.truncation is None:
            object.__setattr__(self, "truncation", 4.0 * self.voxel_size)
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.truncation < self.voxel_size:
            raise ValueError("truncation must be at least one voxel")
        if not (self.clip_far > self.clip_near > 0):
            raise ValueError("expected clip_far > clip_near > 0")
        if self.min_weight < 0:
            raise ValueError("min_weight must be >= 0")
        if self.max_weight < 1:
            raise ValueError("max_weight must be >= 1")


class SemanticMesh:
    """Triangle mesh with one class label and RGB color per vertex."""

    __slots__ = ("vertices", "triangles", "vertex_labels", "vertex_colors")

    def __init__(self, vertices, triangles, vertex_labels, vertex_colors):
        v = np.asarray(vertices, dtype=np.float32).reshape(-1, 3)
        t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        lab = np.asarray(vertex_labels, dtype=np.uint8).reshape(-1)
        col = np.asarray(vertex_colors, dtype=np.uint8).reshape(-1, 3)
        if not (len(v) == len(lab) == len(col)):
            raise ValueError("vertex attribute lengths disagree")
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise ValueError("triangle index out of range")
            if (np.sort(t, axis=1)[:, :-1] == np.sort(t, axis=1)[:, 1:]).any():
                raise ValueError("degenerate triangle (repeated vertex index)")
        self.vertices = v
        self.triangles = t
        self.vertex_labels = lab
        self.vertex_colors = col

    @classmethod
    def empty(cls) -> "SemanticMesh":
        return cls(np.zeros((0, 3), np.float32), np.zeros((0, 3), np.int64),
                   np.zeros(0, np.uint8), np.zeros((0, 3), np.uint8))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


class _Chunk:
    __slots__ = ("sdf", "weight", "scores")

    def __init__(self, num_classes: int):
        self.sdf = np.zeros((CHUNK, CHUNK, CHUNK), dtype=np.float32)
        self.weight = np.zeros((CHUNK, CHUNK, CHUNK), dtype=np.float32)
        self.scores = np.zeros((CHUNK, CHUNK, CHUNK, num_classes), dtype=np.float32)


class VoxelGrid:
    """Sparse TSDF volume; chunks materialize on first touch."""

    def __init__(self, params: FusionParams, palette: ClassPalette,
                 origin=(0.0, 0.0, 0.0)):
        self.params = params
        self.palette = palette
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.chunks: Dict[Tuple[int, int, int], _Chunk] = {}

    @property
    def num_classes(self) -> int:
        return len(self.palette)

    @property
    def num_chunks(self) -> int:
        return len(self.chunks)

    def voxel_count(self) -> int:
        """Lattice points carrying any weight."""
        return int(sum((c.weight > 0).sum() for c in self.chunks.values()))

    def voxel_world_positions(self, chunk_key) -> np.ndarray:
        """(16,16,16,3) world coordinates of a chunk's lattice points."""
        base = np.asarray(chunk_key, dtype=np.int64) * CHUNK
        ii = np.stack(np.meshgrid(*([np.arange(CHUNK)] * 3), indexing="ij"), axis=-1)
        return self.origin + (base + ii) * self.params.voxel_size


def _candidate_chunks(grid: VoxelGrid, depth: DepthMap, pose: Pose,
                      intr: CameraIntrinsics) -> np.ndarray:
    """Chunks that might hold lattice points inside some pixel's
    truncation band, from the integer boxes spanned by band endpoints."""
    p = grid.params
    vals = depth.values
    mask = (vals >= p.clip_near) & (vals <= p.clip_far)
    if not mask.any():
        return np.zeros((0, 3), dtype=np.int64)
    ys, xs = np.nonzero(mask)
    d = vals[ys, xs].astype(np.float64)
    dirs = np.stack([
        (xs - intr.cx) / intr.fx,
        (ys - intr.cy) / intr.fy,
        np.ones_like(d),
    ], axis=1)
    chunk_m = CHUNK * p.voxel_size
    near = np.maximum(d - p.truncation, 1e-6)
    far = d + p.truncation
    lo_pts = pose.camera_to_world(dirs * near[:, None])
    hi_pts = pose.camera_to_world(dirs * far[:, None])
    c1 = np.floor((lo_pts - grid.origin) / chunk_m).astype(np.int64)
    c2 = np.floor((hi_pts - grid.origin) / chunk_m).astype(np.int64)
    lo = np.minimum(c1, c2)
    hi = np.maximum(c1, c2)
    span = hi - lo
    cands = []
    for ox in range(int(span[:, 0].max()) + 1):
        for oy in range(int(span[:, 1].max()) + 1):
            for oz in range(int(span[:, 2].max()) + 1):
                off = np.minimum([ox, oy, oz], span)
                cands.append(lo + off)
    return np.unique(np.concatenate(cands, axis=0), axis=0)


def integrate_frame(grid: VoxelGrid, depth: DepthMap, semantics, pose: Pose,
                    intr: CameraIntrinsics) -> VoxelGrid:
    """Fuse one posed frame into the volume.

    ``semantics`` is a SemanticScores, a LabelMap (accumulated as
    one-hot), or None for geometry-only integration. Depth outside the
    clip range is ignored. Only lattice points whose projective signed
    distance lies within the truncation band are touched; each update
    folds into the running average and bumps the weight by one up to
    the cap.
    """
    if depth.shape != (intr.height, intr.width):
        raise ValueError(f"depth {depth.shape} does not match intrinsics "
                         f"({intr.height}, {intr.width})")
    if not isinstance(pose, Pose):
        raise ValueError("frame has no valid pose")

    label_grid = None
    score_grid = None
    if isinstance(semantics, LabelMap):
        if semantics.shape != depth.shape:
            raise ValueError("label map size differs from depth")
        label_grid = semantics.labels
    elif isinstance(semantics, SemanticScores):
        if semantics.scores.shape[:2] != depth.shape:
            raise ValueError("score field size differs from depth")
        if semantics.num_classes != grid.num_classes:
            raise ValueError("score field class count differs from grid")
        score_grid = semantics.scores
    elif semantics is not None:
        raise ValueError(f"unsupported semantic input {type(semantics)!r}")

    p = grid.params
    vals = depth.values.astype(np.float64)
    usable = (vals >= p.clip_near) & (vals <= p.clip_far)

    for key in map(tuple, _candidate_chunks(grid, depth, pose, intr)):
        pts = grid.voxel_world_positions(key).reshape(-1, 3)
        cam = pose.world_to_camera(pts)
        z = cam[:, 2]
        front = z > 1e-9
        u = np.full(len(z), -1, dtype=np.int64)
        v = np.full(len(z), -1, dtype=np.int64)
        u[front] = np.rint(cam[front, 0] / z[front] * intr.fx + intr.cx).astype(np.int64)
        v[front] = np.rint(cam[front, 1] / z[front] * intr.fy + intr.cy).astype(np.int64)
        hit = front & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
        if not hit.any():
            continue
        uu, vv = u[hit], v[hit]
        ok = usable[vv, uu]
        sdf_new = vals[vv, uu] - z[hit]
        band = ok & (np.abs(sdf_new) <= p.truncation)
        if not band.any():
            continue

        flat = np.nonzero(hit)[0][band]
        chunk = grid.chunks.get(key)
        if chunk is None:
            chunk = grid.chunks[key] = _Chunk(grid.num_classes)
        sdf = chunk.sdf.reshape(-1)
        wgt = chunk.weight.reshape(-1)
        w = wgt[flat].astype(np.float64)
        sdf[flat] = ((w * sdf[flat] + sdf_new[band]) / (w + 1.0)).astype(np.float32)
        wgt[flat] = np.minimum(w + 1.0, p.max_weight).astype(np.float32)

        if label_grid is not None:
            scores = chunk.scores.reshape(-1, grid.num_classes)
            np.add.at(scores, (flat, label_grid[vv, uu][band].astype(np.int64)), 1.0)
        elif score_grid is not None:
            scores = chunk.scores.reshape(-1, grid.num_classes)
            np.add.at(scores, flat, score_grid[vv, uu][band])
    return grid


def prune(grid: VoxelGrid) -> VoxelGrid:
    """Clear lattice points below the weight threshold; drop empty chunks."""
    if grid.params.min_weight <= 0:
        return grid
    dead_keys = []
    for key, chunk in grid.chunks.items():
        cull = chunk.weight < grid.params.min_weight
        chunk.sdf[cull] = 0.0
        chunk.weight[cull] = 0.0
        chunk.scores[cull] = 0.0
        if not chunk.weight.any():
            dead_keys.append(key)
    for key in dead_keys:
        del grid.chunks[key]
    return grid


def _gather_overlap(grid: VoxelGrid, key, attr: str, fill, dtype, extra=()):
    """(17,17,17,...) view of a chunk plus its positive-side neighbors."""
    out = np.full((CHUNK + 1,) * 3 + tuple(extra), fill, dtype=dtype)
    for ox in (0, 1):
        for oy in (0, 1):
            for oz in (0, 1):
                nb = grid.chunks.get((key[0] + ox, key[1] + oy, key[2] + oz))
                if nb is None:
                    continue
                src = getattr(nb, attr)
                sl = tuple(slice(CHUNK, CHUNK + 1) if o else slice(0, CHUNK)
                           for o in (ox, oy, oz))
                take = tuple(slice(0, 1) if o else slice(0, CHUNK) for o in (ox, oy, oz))
                out[sl] = src[take]
    return out


def extract_mesh(grid: VoxelGrid) -> SemanticMesh:
    """Marching cubes over every chunk, welded at global edge keys.

    A cube contributes only when all 8 corners carry weight. Each
    surface vertex takes the label voted by the class scores of the
    nearer edge endpoint (score ties resolve to the lowest class
    index) and the palette color of that label.
    """
    voxel = grid.params.voxel_size
    colors = grid.palette.colors

    positions = []
    labels = []
    tris = []
    vertex_ids: Dict[Tuple[int, int, int, int], int] = {}

    corner_slices = [tuple(slice(o, o + CHUNK) for o in off) for off in CORNER_OFFSETS]

    for key in sorted(grid.chunks):
        sdf = _gather_overlap(grid, key, "sdf", 0.0, np.float32)
        wgt = _gather_overlap(grid, key, "weight", 0.0, np.float32)
        scores = _gather_overlap(grid, key, "scores", 0.0, np.float32,
                                 extra=(grid.num_classes,))

        case = np.zeros((CHUNK, CHUNK, CHUNK), dtype=np.int32)
        observed = np.ones((CHUNK, CHUNK, CHUNK), dtype=bool)
        inside = sdf < 0.0
        carry = wgt > 0.0
        for k, sl in enumerate(corner_slices):
            case |= inside[sl].astype(np.int32) << k
            observed &= carry[sl]
        active = observed & (EDGE_TABLE[case] != 0)

        base = np.asarray(key, dtype=np.int64) * CHUNK
        for ix, iy, iz in np.argwhere(active):
            cube = np.array((ix, iy, iz), dtype=np.int64)
            row = TRI_TABLE[case[ix, iy, iz]]
            edge_vertex = {}
            for e in row[row >= 0]:
                gl = base + cube + EDGE_BASE[e]
                ekey = (int(gl[0]), int(gl[1]), int(gl[2]), int(EDGE_AXIS[e]))
                vid = vertex_ids.get(ekey)
                if vid is None:
                    ca, cb = EDGE_ENDPOINTS[e]
                    pa = cube + CORNER_OFFSETS[ca]
                    pb = cube + CORNER_OFFSETS[cb]
                    sa = float(sdf[pa[0], pa[1], pa[2]])
                    sb = float(sdf[pb[0], pb[1], pb[2]])
                    t = sa / (sa - sb)
                    pos = (base + pa + t * (pb - pa).astype(np.float64)) * voxel
                    near = pa if t <= 0.5 else pb
                    label = int(np.argmax(scores[near[0], near[1], near[2]]))
                    vid = len(positions)
                    vertex_ids[ekey] = vid
                    positions.append(grid.origin + pos)
                    labels.append(label)
                edge_vertex[int(e)] = vid
            for i in range(0, 16, 3):
                if row[i] < 0:
                    break
                a = edge_vertex[int(row[i])]
                b = edge_vertex[int(row[i + 1])]
                c = edge_vertex[int(row[i + 2])]
                if a == b or b == c or a == c:
                    continue  # zero-area sliver from an exactly-zero corner
                tris.append((a, c, b))  # swapped so normals point to free space

    if not positions:
        return SemanticMesh.empty()
    lab = np.asarray(labels, dtype=np.uint8)
    return SemanticMesh(
        np.asarray(positions, dtype=np.float32),
        np.asarray(tris, dtype=np.int64),
        lab,
        colors[lab],
    )
