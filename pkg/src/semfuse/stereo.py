"""Semi-global block matching on rectified stereo pairs.

Matching cost is the sum of absolute differences (SAD) of grayscale
intensities over a square window. Costs are smoothed by the usual
semi-global scheme: along each 1D aggregation path the recurrence

    L(p, d) = C(p, d) + min(L(p-r, d),
                            L(p-r, d-1) + P1, L(p-r, d+1) + P1,
                            min_k L(p-r, k) + P2) - min_k L(p-r, k)

is evaluated with integer arithmetic, paths are averaged, and disparity
is the per-pixel winner-take-all minimum with parabolic sub-pixel
refinement, a uniqueness test, and a left-right consistency check.

SAD sums are shifted so valid costs fit in 11 bits; disparities whose
correspondence falls outside the right image carry the dedicated
sentinel cost ``COST_SENTINEL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scene_io import DepthMap, DisparityMap, StereoRig

MAX_VALID_COST = 2046
COST_SENTINEL = 2047
_BIG = np.int32(1 << 28)

DIRECTIONS_4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
DIRECTIONS_8 = DIRECTIONS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class SgbmParams:
    """Matcher settings; p1/p2 default to 8 and 32 times the window area."""

    window_radius: int = 2
    num_disparities: int = 64
    p1: Optional[int] = None
    p2: Optional[int] = None
    paths: int = 8
    lr_max_diff: float = 1.0
    uniqueness_ratio: float = 1.15

    def __post_init__(self):
        area = (2 * self.window_radius + 1) ** 2
        if self.p1 is None:
            self.p1 = 8 * area
        if self.p2 is None:
            self.p2 = 32 * area
        if self.window_radius < 0:
            raise ValueError("window_radius must be >= 0")
        if self.num_disparities <= 0 or self.num_disparities % 16:
            raise ValueError("num_disparities must be a positive multiple of 16")
        if self.p1 < 0 or self.p2 < self.p1:
            raise ValueError("penalties must satisfy 0 <= p1 <= p2")
        if self.paths not in (4, 8):
            raise ValueError("paths must be 4 or 8")
        if self.uniqueness_ratio < 1.0:
            raise ValueError("uniqueness_ratio must be >= 1")

    def validate_strict(self):
        """Production configs additionally require p2 > p1 > 0."""
        if not (self.p2 > self.p1 > 0):
            raise ValueError("expected p2 > p1 > 0 for a production configuration")


@dataclass
class CostVolume:
    """Per-pixel, per-disparity integer matching costs (height, width, d)."""

    costs: np.ndarray
    sentinel: int = COST_SENTINEL

    def __post_init__(self):
        c = np.asarray(self.costs)
        if c.ndim != 3:
            raise ValueError(f"expected HxWxD costs, got shape {c.shape}")
        if c.size and c.min() < 0:
            raise ValueError("costs must be non-negative")
        self.costs = c.astype(np.int32, copy=False)

    @property
    def num_disparities(self) -> int:
        return self.costs.shape[2]


def rgb_to_gray(pixels: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma of an 8-bit RGB image, rounded to uint8."""
    px = np.asarray(pixels)
    if px.ndim == 2:
        return px.astype(np.uint8, copy=False)
    luma = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    return np.rint(luma).astype(np.uint8)


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Window sums with edge-clamped coordinates, exact in integers."""
    if radius == 0:
        return a.astype(np.int64, copy=False)
    p = np.pad(a, radius, mode="edge").astype(np.int64)
    ii = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = p.cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    return ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]


def compute_cost_volume(left_gray: np.ndarray, right_gray: np.ndarray,
                        params: SgbmParams) -> CostVolume:
    """SAD matching costs for disparities 0..num_disparities-1.

    ``cost[y, x, d]`` sums |left - right shifted by d| over the window
    centered at (x, y); window samples and the shifted right coordinate
    clamp to the image border. Pixels whose correspondence x - d lies
    left of the image get ``COST_SENTINEL``.
    """
    left = np.asarray(left_gray, dtype=np.int32)
    right = np.asarray(right_gray, dtype=np.int32)
    if left.shape != right.shape or left.ndim != 2:
        raise ValueError(f"image shapes differ or are not 2D: {left.shape} vs {right.shape}")
    h, w = left.shape
    r = params.window_radius
    area = (2 * r + 1) ** 2
    shift = 0
    while (area * 255) >> shift > MAX_VALID_COST:
        shift += 1

    costs = np.empty((h, w, params.num_disparities), dtype=np.int32)
    shifted = np.empty_like(right)
    for d in range(params.num_disparities):
        if d < w:
            shifted[:, d:] = right[:, : w - d]
        shifted[:, : min(d, w)] = right[:, :1]
        sums = _box_sum(np.abs(left - shifted), r)
        costs[:, :, d] = (sums >> shift).astype(np.int32)
        costs[:, :d, d] = COST_SENTINEL
    return CostVolume(costs)


def _step(prev: np.ndarray, cur: np.ndarray, p1: int, p2: int) -> np.ndarray:
    m = prev.min(axis=-1)
    best = np.minimum(prev, m[..., None] + p2)
    best[..., 1:] = np.minimum(best[..., 1:], prev[..., :-1] + p1)
    best[..., :-1] = np.minimum(best[..., :-1], prev[..., 1:] + p1)
    return cur + best - m[..., None]


def aggregate_single_path(costs: np.ndarray, direction: tuple, p1: int, p2: int) -> np.ndarray:
    """Path costs L(p, d) for one aggregation direction (dx, dy).

    Pixels without a predecessor along the path keep their raw cost.
    """
    c = np.asarray(costs, dtype=np.int32)
    dx, dy = direction
    if dx == 0 and dy == 0:
        raise ValueError("direction must be non-zero")
    if dx == 0:
        return aggregate_single_path(c.transpose(1, 0, 2), (dy, 0), p1, p2).transpose(1, 0, 2)
    if dx < 0:
        return aggregate_single_path(c[:, ::-1], (1, dy), p1, p2)[:, ::-1]

    h, w, _ = c.shape
    out = np.empty_like(c)
    out[:, 0] = c[:, 0]
    for x in range(1, w):
        prev, cur = out[:, x - 1], c[:, x]
        if dy == 0:
            out[:, x] = _step(prev, cur, p1, p2)
        elif dy == 1:
            out[0, x] = cur[0]
            out[1:, x] = _step(prev[:-1], cur[1:], p1, p2)
        else:
            out[-1, x] = cur[-1]
            out[:-1, x] = _step(prev[1:], cur[:-1], p1, p2)
    return out


def aggregate_semiglobal(volume: CostVolume, params: SgbmParams) -> CostVolume:
    """Average the path costs of 4 or 8 directions (integer mean).

    The mean keeps the per-path cost scale, so a single-pixel image (or
    p1 = p2 = 0) leaves the volume unchanged.
    """
    dirs = DIRECTIONS_8 if params.paths == 8 else DIRECTIONS_4
    total = np.zeros_like(volume.costs)
    for d in dirs:
        total += aggregate_single_path(volume.costs, d, params.p1, params.p2)
    return CostVolume(total // len(dirs), sentinel=volume.sentinel)


def extract_disparity(volume: CostVolume, params: SgbmParams) -> DisparityMap:
    """Winner-take-all disparity with sub-pixel refinement and validity checks.

    A pixel is invalidated when the second-best cost (excluding the two
    disparities adjacent to the winner) undercuts ``uniqueness_ratio``
    times the best cost, or when the right-view disparity at its
    correspondence differs by more than ``lr_max_diff``.
    """
    c = volume.costs
    h, w, nd = c.shape
    ys, xs = np.indices((h, w))
    d0 = np.argmin(c, axis=2)
    cmin = np.take_along_axis(c, d0[:, :, None], axis=2)[:, :, 0]

    masked = c.copy()
    for off in (-1, 0, 1):
        idx = np.clip(d0 + off, 0, nd - 1)
        np.put_along_axis(masked, idx[:, :, None], _BIG, axis=2)
    min2 = masked.min(axis=2)
    ok = min2.astype(np.float64) >= cmin.astype(np.float64) * params.uniqueness_ratio

    # right-view WTA from the same volume: cost_R(x, d) = cost_L(x + d, d)
    xr = xs[:, :, None] + np.arange(nd)[None, None, :]
    in_img = xr < w
    cr = np.where(in_img, c[ys[:, :, None], np.minimum(xr, w - 1), np.arange(nd)[None, None, :]], _BIG)
    dr = np.argmin(cr, axis=2)

    xcorr = xs - d0
    lr_ok = xcorr >= 0
    dr_at = dr[ys, np.maximum(xcorr, 0)]
    lr_ok &= np.abs(d0 - dr_at) <= params.lr_max_diff
    ok &= lr_ok

    cm = np.take_along_axis(c, np.maximum(d0 - 1, 0)[:, :, None], axis=2)[:, :, 0].astype(np.float64)
    cp = np.take_along_axis(c, np.minimum(d0 + 1, nd - 1)[:, :, None], axis=2)[:, :, 0].astype(np.float64)
    denom = cm + cp - 2.0 * cmin
    offset = np.where(denom > 0, (cm - cp) / (2.0 * np.maximum(denom, 1e-12)), 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    offset[(d0 == 0) | (d0 == nd - 1)] = 0.0

    disp = np.where(ok, d0 + offset, -1.0).astype(np.float32)
    return DisparityMap(disp)


def disparity_to_depth(disparity: DisparityMap, rig: StereoRig,
                       min_disparity: float = 0.25) -> DepthMap:
    """depth = fx * baseline / disparity; near-zero disparities go invalid."""
    d = disparity.values
    usable = d > min_disparity
    depth = np.zeros_like(d)
    np.divide(rig.intrinsics.fx * rig.baseline, d, out=depth, where=usable)
    return DepthMap(np.where(usable, depth, 0.0))


def compute_depth(left_rgb: np.ndarray, right_rgb: np.ndarray, rig: StereoRig,
                  params: SgbmParams) -> tuple:
    """Full stereo stage: grayscale, cost, aggregation, disparity, depth."""
    cv = compute_cost_volume(rgb_to_gray(left_rgb), rgb_to_gray(right_rgb), params)
    agg = aggregate_semiglobal(cv, params)
    disp = extract_disparity(agg, params)
    return disp, disparity_to_depth(disp, rig)
