"""Depth-map cleanup before fusion.

Three shrinking filters, applied in a fixed order: drop sky pixels,
drop object-boundary pixels whose clip-normalized depth gradient is
too steep, then erode the validity mask so neighbors of removed
pixels go too. Valid values are never altered, only invalidated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene_io import ClassPalette, DepthMap, LabelMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterParams:
    """Thresholds for the cleanup stage.

    gradient_threshold applies to the gradient of depth normalized by
    the clip range, so it is dimensionless. erosion_radius is the
    Chebyshev radius of the square structuring element; 0 disables.
    """

    gradient_threshold: float = 0.05
    erosion_radius: int = 0
    clip_min: float = 0.5
    clip_max: float = 10.0

    def __post_init__(self):
        if not self.gradient_threshold > 0:
            raise ValueError("gradient_threshold must be > 0")
        if not (self.clip_max > self.clip_min > 0):
            raise ValueError("expected clip_max > clip_min > 0")
        if self.erosion_radius < 0:
            raise ValueError("erosion_radius must be >= 0")


def remove_sky(depth: DepthMap, labels: LabelMap, palette: ClassPalette) -> DepthMap:
    """Invalidate depth exactly where the label map says sky."""
    if depth.shape != labels.shape:
        raise ValueError(f"depth {depth.shape} and labels {labels.shape} differ in size")
    if palette.sky_index is None:
        log.warning("palette has no sky class; sky removal skipped")
        return depth
    keep = labels.labels != palette.sky_index
    return depth.with_values(np.where(keep, depth.values, 0.0))


def _shifted(a: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    out = np.full_like(a, fill)
    h, w = a.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    src_ys = slice(max(-dy, 0), h + min(-dy, 0))
    src_xs = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = a[src_ys, src_xs]
    return out


def gradient_filter(depth: DepthMap, params: FilterParams) -> DepthMap:
    """Drop pixels whose normalized depth gradient exceeds the threshold.

    Depth is mapped to (d - clip_min) / (clip_max - clip_min) and the
    gradient uses central differences; where a stencil neighbor is
    invalid or outside the image, the difference falls back to
    one-sided, and with no usable neighbor the component is zero (so
    isolated valid pixels always survive). Removal is strict: a
    gradient norm equal to the threshold is retained. All removals are
    decided against the input validity mask in one pass.
    """
    v = depth.valid
    n = (depth.values.astype(np.float64) - params.clip_min) / (params.clip_max - params.clip_min)
    n = np.where(v, n, 0.0)

    grads = []
    for dy, dx in ((0, 1), (1, 0)):
        nb_prev = _shifted(n, dy, dx, 0.0)       # value at p - step
        nb_next = _shifted(n, -dy, -dx, 0.0)     # value at p + step
        ok_prev = _shifted(v, dy, dx, False)
        ok_next = _shifted(v, -dy, -dx, False)
        central = (nb_next - nb_prev) / 2.0
        fwd = nb_next - n
        bwd = n - nb_prev
        g = np.where(ok_prev & ok_next, central,
                     np.where(ok_next, fwd, np.where(ok_prev, bwd, 0.0)))
        grads.append(g)

    norm = np.hypot(grads[0], grads[1])
    keep = v & ~(norm > params.gradient_threshold)
    return depth.with_values(np.where(keep, depth.values, 0.0))


def erosion_filter(depth: DepthMap, params: FilterParams) -> DepthMap:
    """Invalidate valid pixels within Chebyshev radius of an invalid one.

    Only in-image invalid pixels dilate; the region outside the image
    does not count as invalid, so a fully valid map is unchanged.
    """
    r = params.erosion_radius
    if r == 0:
        return depth
    v = depth.valid.astype(np.uint8)
    kept = ndimage.minimum_filter(v, size=2 * r + 1, mode="constant", cval=1)
    return depth.with_values(np.where(kept.astype(bool), depth.values, 0.0))


def apply_filters(depth: DepthMap, labels, palette, params: FilterParams) -> DepthMap:
    """Full cleanup pass in the fixed order sky, gradient, erosion."""
    if labels is not None:
        depth = remove_sky(depth, labels, palette)
    depth = gradient_filter(depth, params)
    return erosion_filter(depth, params)
