"""Evaluation measures for depth maps, segmentations, and meshes.

Depth errors compare prediction and ground truth on their common
valid support. Segmentation scores come from a confusion matrix whose
rows are ground truth; classes without ground-truth pixels stay out
of the averages. Mesh quality is measured in both directions:
ground-truth points to the reconstructed surface (completeness) and
reconstructed vertices to the ground-truth points (accuracy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .meshdist import TriangleBvh
from .scene_io import DepthMap

DEVIATION_STEP_M = 0.1
DEVIATION_MAX_M = 5.0
RMS_BIN_WIDTH_M = 0.5
ACCURACY_THRESHOLD_M = 0.05
COMPLETENESS_QUANTILE = 0.90


@dataclass(frozen=True)
class DepthErrorReport:
    abs_rel: float
    rms: float
    n_valid: int
    deviation_curve: tuple         # ((threshold m, fraction), ...)
    rms_by_distance: tuple         # ((bin center m, rms m), ...)

    def to_json(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "rms": self.rms,
            "n_valid": self.n_valid,
            "deviation_curve": [list(p) for p in self.deviation_curve],
            "rms_by_distance": [list(p) for p in self.rms_by_distance],
        }


@dataclass(frozen=True)
class SegmentationReport:
    confusion: np.ndarray = field(repr=False)
    overall_acc: float = 0.0
    average_acc: float = 0.0
    average_iou: float = 0.0
    per_class_iou: tuple = ()

    def to_json(self) -> dict:
        return {
            "overall_acc": self.overall_acc,
            "average_acc": self.average_acc,
            "average_iou": self.average_iou,
            "per_class_iou": [None if np.isnan(v) else v for v in self.per_class_iou],
            "confusion": self.confusion.tolist(),
        }


@dataclass(frozen=True)
class ReconstructionReport:
    gt_to_recon_avg: float
    completeness_d90: float
    recon_to_gt_avg: float
    accuracy_pct_5cm: float

    def to_json(self) -> dict:
        return {
            "gt_to_recon_avg": self.gt_to_recon_avg,
            "completeness_d90": self.completeness_d90,
            "recon_to_gt_avg": self.recon_to_gt_avg,
            "accuracy_pct_5cm": self.accuracy_pct_5cm,
        }


# ---------------------------------------------------------------------------
# depth

def depth_errors(pred: DepthMap, gt: DepthMap) -> DepthErrorReport:
    """Absolute-relative and RMS error over the jointly valid pixels.

    The deviation curve gives, for thresholds 0.1 m .. 5.0 m in 0.1 m
    steps, the fraction of pixels with |error| below the threshold;
    rms_by_distance bins pixels by ground-truth depth in 0.5 m bins
    (empty bins are omitted).
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    mask = pred.valid & gt.valid
    n = int(mask.sum())
    if n == 0:
        raise ValueError("no valid overlap between prediction and ground truth")
    p = pred.values[mask].astype(np.float64)
    g = gt.values[mask].astype(np.float64)
    err = np.abs(g - p)

    abs_rel = float(np.mean(err / g))
    rms = float(np.sqrt(np.mean((g - p) ** 2)))

    steps = int(round(DEVIATION_MAX_M / DEVIATION_STEP_M))
    curve = []
    for k in range(1, steps + 1):
        t = k * DEVIATION_STEP_M
        curve.append((t, float(np.mean(err < t))))

    bins = np.floor(g / RMS_BIN_WIDTH_M).astype(np.int64)
    by_dist = []
    for b in np.unique(bins):
        sel = bins == b
        center = (b + 0.5) * RMS_BIN_WIDTH_M
        by_dist.append((float(center), float(np.sqrt(np.mean((g[sel] - p[sel]) ** 2)))))

    return DepthErrorReport(abs_rel, rms, n, tuple(curve), tuple(by_dist))


# ---------------------------------------------------------------------------
# segmentation

def segmentation_scores(pred_labels, gt_labels, num_classes: int,
                        ignore: Sequence[int] = ()) -> SegmentationReport:
    """Confusion-matrix scores; rows are ground truth, columns prediction.

    Pixels whose ground-truth label is in ``ignore`` are dropped.
    Average accuracy and IoU are means over classes that occur in the
    ground truth; per_class_iou holds NaN for the other classes.
    """
    pred = np.asarray(pred_labels).ravel().astype(np.int64)
    gt = np.asarray(gt_labels).ravel().astype(np.int64)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth differ in size")
    keep = np.ones(gt.shape, dtype=bool)
    for lab in ignore:
        keep &= gt != lab
    pred, gt = pred[keep], gt[keep]

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (gt, pred), 1)

    total = confusion.sum()
    diag = np.diag(confusion).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)

    overall = float(diag.sum() / total) if total else 0.0
    present = row > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        recall = np.where(present, diag / row, np.nan)
        union = row + col - diag
        iou = np.where(present, diag / np.where(union > 0, union, 1.0), np.nan)

    avg_acc = float(np.nanmean(recall)) if present.any() else 0.0
    avg_iou = float(np.nanmean(iou)) if present.any() else 0.0
    return SegmentationReport(confusion, overall, avg_acc, avg_iou, tuple(iou))


# ---------------------------------------------------------------------------
# geometry

def cloud_to_surface(points: np.ndarray, target) -> np.ndarray:
    """Per-point distance to a mesh surface or, for clouds, nearest point.

    ``target`` is either an object with ``vertices``/``triangles``
    (exact point-to-triangle distances through the BVH) or an (N, 3)
    point array (nearest-neighbor distances).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros(0, dtype=np.float64)
    if hasattr(target, "triangles") and hasattr(target, "vertices"):
        if len(target.vertices) == 0 or len(target.triangles) == 0:
            raise ValueError("target mesh is empty")
        return TriangleBvh(target.vertices, target.triangles).distances(pts)
    cloud = np.asarray(target, dtype=np.float64)
    if cloud.size == 0:
        raise ValueError("target cloud is empty")
    d, _ = cKDTree(cloud).query(pts)
    return np.asarray(d, dtype=np.float64)


def completeness_d90(distances: np.ndarray, quantile: float = COMPLETENESS_QUANTILE) -> float:
    """Smallest distance covering the given fraction: order statistic
    at ceil(quantile * N), 1-based, without interpolation."""
    d = np.sort(np.asarray(distances, dtype=np.float64))
    if d.size == 0:
        raise ValueError("no distances")
    k = int(np.ceil(quantile * d.size))
    return float(d[max(k, 1) - 1])


def reconstruction_report(gt_points: np.ndarray, mesh,
                          threshold: float = ACCURACY_THRESHOLD_M,
                          quantile: float = COMPLETENESS_QUANTILE) -> ReconstructionReport:
    """Bidirectional surface comparison.

    Ground truth to reconstruction measures point-to-surface distance
    (completeness); reconstruction to ground truth measures mesh
    vertices against the ground-truth points (accuracy, strictly
    below the threshold).
    """
    gt = np.asarray(gt_points, dtype=np.float64)
    if gt.size == 0:
        raise ValueError("ground-truth cloud is empty")
    fwd = cloud_to_surface(gt, mesh)
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    bwd = cloud_to_surface(verts, gt)
    return ReconstructionReport(
        gt_to_recon_avg=float(fwd.mean()),
        completeness_d90=completeness_d90(fwd, quantile),
        recon_to_gt_avg=float(bwd.mean()),
        accuracy_pct_5cm=float(100.0 * np.mean(bwd < threshold)),
    )


def transfer_labels(points: np.ndarray, vertices: np.ndarray,
                    vertex_labels: np.ndarray) -> np.ndarray:
    """Label of the nearest vertex per point; ties take the lowest index."""
    verts = np.asarray(vertices, dtype=np.float64)
    if len(verts) == 0:
        raise ValueError("mesh has no vertices")
    labels = np.asarray(vertex_labels)
    pts = np.asarray(points, dtype=np.float64)
    tree = cKDTree(verts)
    dist, idx = tree.query(pts)
    # a KD-tree gives back an arbitrary member of a tie set; rescan the
    # ball at the winning radius so the lowest vertex index wins
    ball = tree.query_ball_point(pts, dist + 1e-12)
    for i, members in enumerate(ball):
        if len(members) > 1:
            idx[i] = min(members)
    return labels[idx]


def semantic_3d_transfer(gt_points: np.ndarray, gt_labels: np.ndarray, mesh,
                         num_classes: Optional[int] = None,
                         ignore: Sequence[int] = ()) -> SegmentationReport:
    """Score a labeled mesh against labeled ground-truth points."""
    pred = transfer_labels(gt_points, mesh.vertices, mesh.vertex_labels)
    gt = np.asarray(gt_labels)
    if num_classes is None:
        num_classes = int(max(pred.max(initial=0), gt.max(initial=0))) + 1
    return segmentation_scores(pred, gt, num_classes, ignore)


def crop_ground_truth(points: np.ndarray, labels: Optional[np.ndarray] = None,
                      z_max: float = 1.0):
    """Keep points with z at or below the cutoff (gravity-aligned frame)."""
    pts = np.asarray(points)
    keep = pts[:, 2] <= z_max
    if labels is None:
        return pts[keep]
    return pts[keep], np.asarray(labels)[keep]
