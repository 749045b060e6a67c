"""Exact point-to-mesh distances, BVH-accelerated.

The closest-point-on-triangle routine enumerates the seven Voronoi
regions of a triangle (face, three edges, three vertices). Queries
walk a median-split AABB tree over the faces; boxes farther than the
best distance so far are pruned.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_LEAF_SIZE = 4


@njit(cache=True)
def _tri_sqdist(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz

    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = d1 / denom if denom != 0.0 else 0.0
        dx, dy, dz = apx - v * abx, apy - v * aby, apz - v * abz
        return dx * dx + dy * dy + dz * dz

    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if denom != 0.0 else 0.0
        dx, dy, dz = apx - w * acx, apy - w * acy, apz - w * acz
        return dx * dx + dy * dy + dz * dz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if denom != 0.0 else 0.0
        dx = bpx - w * (cx - bx)
        dy = bpy - w * (cy - by)
        dz = bpz - w * (cz - bz)
        return dx * dx + dy * dy + dz * dz

    denom = va + vb + vc
    if denom == 0.0:  # degenerate sliver: fall back to nearest vertex
        da = apx * apx + apy * apy + apz * apz
        db = bpx * bpx + bpy * bpy + bpz * bpz
        dc = cpx * cpx + cpy * cpy + cpz * cpz
        return min(da, db, dc)
    v = vb / denom
    w = vc / denom
    dx = apx - v * abx - w * acx
    dy = apy - v * aby - w * acy
    dz = apz - v * abz - w * acz
    return dx * dx + dy * dy + dz * dz


class TriangleBvh:
    """Flat-array median-split AABB tree over mesh faces."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if f.size == 0:
            raise ValueError("mesh has no faces")
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("expected (N,3) vertices and (T,3) faces")
        self.vertices = v
        self.faces = f

        tri = v[f]                                   # (T, 3, 3)
        lo, hi = tri.min(axis=1), tri.max(axis=1)
        centroids = tri.mean(axis=1)

        bmin, bmax, left, right, start, count = [], [], [], [], [], []
        order_acc = []
        # iterative build: (triangle ids, parent slot, is_right_child)
        stack = [(np.arange(len(f)), -1, False)]
        while stack:
            ids, parent, is_right = stack.pop()
            node = len(bmin)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            bmin.append(lo[ids].min(axis=0))
            bmax.append(hi[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            if len(ids) <= _LEAF_SIZE:
                start.append(len(order_acc))
                count.append(len(ids))
                order_acc.extend(ids.tolist())
                continue
            start.append(-1)
            count.append(0)
            axis = int(np.argmax(bmax[node] - bmin[node]))
            mid = len(ids) // 2
            part = ids[np.argsort(centroids[ids, axis], kind="stable")]
            stack.append((part[mid:], node, True))
            stack.append((part[:mid], node, False))

        self.bmin = np.asarray(bmin)
        self.bmax = np.asarray(bmax)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.order = np.asarray(order_acc, dtype=np.int64)

    def distances(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each query point to the mesh surface."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("expected (N,3) query points")
        sq = _bvh_query(pts, self.vertices, self.faces, self.bmin, self.bmax,
                        self.left, self.right, self.start, self.count, self.order)
        return np.sqrt(sq)


@njit(cache=True)
def _box_sqdist(px, py, pz, lo, hi):
    d = 0.0
    t = lo[0] - px
    if t > 0.0:
        d += t * t
    t = px - hi[0]
    if t > 0.0:
        d += t * t
    t = lo[1] - py
    if t > 0.0:
        d += t * t
    t = py - hi[1]
    if t > 0.0:
        d += t * t
    t = lo[2] - pz
    if t > 0.0:
        d += t * t
    t = pz - hi[2]
    if t > 0.0:
        d += t * t
    return d


@njit(cache=True)
def _bvh_query(points, verts, faces, bmin, bmax, left, right, start, count, order):
    n = points.shape[0]
    out = np.empty(n, dtype=np.float64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_sqdist(px, py, pz, bmin[node], bmax[node]) >= best:
                continue
            if count[node] > 0:
                for k in range(start[node], start[node] + count[node]):
                    t = order[k]
                    a, b, c = faces[t, 0], faces[t, 1], faces[t, 2]
                    d = _tri_sqdist(
                        px, py, pz,
                        verts[a, 0], verts[a, 1], verts[a, 2],
                        verts[b, 0], verts[b, 1], verts[b, 2],
                        verts[c, 0], verts[c, 1], verts[c, 2],
                    )
                    if d < best:
                        best = d
            else:
                l, r = left[node], right[node]
                dl = _box_sqdist(px, py, pz, bmin[l], bmax[l])
                dr = _box_sqdist(px, py, pz, bmin[r], bmax[r])
                if dl <= dr:  # push far first so the near child pops first
                    if dr < best:
                        stack[top] = r
                        top += 1
                    if dl < best:
                        stack[top] = l
                        top += 1
                else:
                    if dl < best:
                        stack[top] = l
                        top += 1
                    if dr < best:
                        stack[top] = r
                        top += 1
        out[i] = best
    return out
