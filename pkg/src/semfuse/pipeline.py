"""Sequence orchestration behind one JSON config.

Frames are processed strictly in order and each is integrated into the
volume before the next is read, so the reconstruction after frame t
never depends on later frames. Depth comes from stereo, or, when
``refined_source`` is ``external_maps``, from per-frame files written
by an external refiner (depth/labels/scores subdirectories keyed by
frame id); a missing external file falls back to the raw stereo result
for that frame with a warning. In ``raw_stereo`` mode the sequence's
ground-truth label maps stand in for a live classifier.

Every stage is timed per frame and the timings land in a CSV next to
the other outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .filtering import FilterParams, apply_filters
from .fusion import FusionParams, SemanticMesh, VoxelGrid, extract_mesh, integrate_frame, prune
from .mesh_io import export_mesh, import_mesh
from .metrics import (
    DepthErrorReport,
    SegmentationReport,
    crop_ground_truth,
    depth_errors,
    reconstruction_report,
    semantic_3d_transfer,
    segmentation_scores,
)
from .scene_io import (
    ClassPalette,
    DepthMap,
    LabelMap,
    SceneIOError,
    SemanticScores,
    SequenceReader,
    frame_path,
    read_depth_png,
    read_labels_png,
    read_scores_bin,
)
from .stereo import SgbmParams, compute_depth

log = logging.getLogger(__name__)

RAW_STEREO = "raw_stereo"
EXTERNAL_MAPS = "external_maps"


class ConfigError(ValueError):
    """Configuration or input validation failed (exit code 2 territory)."""


class PipelineError(RuntimeError):
    """A stage failed at runtime; message names the failing frame."""


def _from_dict(cls, obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"{where} has unknown keys {sorted(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {where}: {e}") from e


@dataclass(frozen=True)
class EvalToggles:
    depth: bool = True
    seg: bool = True
    recon_3d: bool = True
    crop_z: Optional[float] = None
    seg_ignore: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "seg_ignore", tuple(self.seg_ignore))


@dataclass
class PipelineConfig:
    sequence: Path
    output: Path
    refined_source: str = RAW_STEREO
    external_maps: Optional[Path] = None
    stereo: SgbmParams = field(default_factory=SgbmParams)
    filtering: Optional[FilterParams] = field(default_factory=FilterParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    eval: EvalToggles = field(default_factory=EvalToggles)

    def __post_init__(self):
        self.sequence = Path(self.sequence)
        self.output = Path(self.output)
        if self.external_maps is not None:
            self.external_maps = Path(self.external_maps)
        if self.refined_source not in (RAW_STEREO, EXTERNAL_MAPS):
            raise ConfigError(f"refined_source must be {RAW_STEREO!r} or "
                              f"{EXTERNAL_MAPS!r}, got {self.refined_source!r}")
        if self.refined_source == EXTERNAL_MAPS and self.external_maps is None:
            raise ConfigError("refined_source external_maps needs external_maps dir")
        if not self.sequence.is_dir():
            raise ConfigError(f"sequence directory {self.sequence} does not exist")
        if self.external_maps is not None and not self.external_maps.is_dir():
            raise ConfigError(f"external maps directory {self.external_maps} "
                              "does not exist")

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config root must be a JSON object")
        known = {"sequence", "output", "refined_source", "external_maps",
                 "stereo", "filtering", "fusion", "eval"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"config has unknown keys {sorted(unknown)}")
        if "sequence" not in obj or "output" not in obj:
            raise ConfigError("config needs 'sequence' and 'output' paths")
        kwargs = dict(sequence=obj["sequence"], output=obj["output"])
        if "refined_source" in obj:
            kwargs["refined_source"] = obj["refined_source"]
        if "external_maps" in obj and obj["external_maps"] is not None:
            kwargs["external_maps"] = obj["external_maps"]
        if "stereo" in obj:
            kwargs["stereo"] = _from_dict(SgbmParams, obj["stereo"], "stereo section")
        if "filtering" in obj:
            kwargs["filtering"] = (None if obj["filtering"] is None else
                                   _from_dict(FilterParams, obj["filtering"],
                                              "filtering section"))
        if "fusion" in obj:
            kwargs["fusion"] = _from_dict(FusionParams, obj["fusion"], "fusion section")
        if "eval" in obj:
            kwargs["eval"] = _from_dict(EvalToggles, obj["eval"], "eval section")
        return cls(**kwargs)


def _fallback_palette() -> ClassPalette:
    return ClassPalette(("surface",), np.array([[128, 128, 128]], np.uint8))


class _StageTimer:
    def __init__(self):
        self.rows = []
        self.stage = "setup"

    def run(self, frame, stage, fn, *args):
        self.stage = stage
        t0 = time.perf_counter()
        out = fn(*args)
        self.rows.append((frame, stage, (time.perf_counter() - t0) * 1e3))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("frame", "stage", "ms"))
            for frame, stage, ms in self.rows:
                w.writerow((frame, stage, f"{ms:.3f}"))


def _external_frame(config, fid, palette, fallback_depth, fallback_sem):
    """Refined maps for one frame, or the raw results with a warning."""
    droot = config.external_maps
    dpath = frame_path(droot, "depth", fid)
    if not dpath.exists():
        log.warning("no external depth for frame %06d; using raw stereo", fid)
        return fallback_depth, fallback_sem
    depth = read_depth_png(dpath)
    spath = frame_path(droot, "scores", fid).with_suffix(".bin")
    lpath = frame_path(droot, "labels", fid)
    if spath.exists():
        return depth, read_scores_bin(spath)
    if lpath.exists():
        return depth, read_labels_png(lpath, palette)
    log.warning("no external semantics for frame %06d; using raw labels", fid)
    return depth, fallback_sem


def run(config: PipelineConfig, max_frames: Optional[int] = None):
    """Execute the full pipeline; returns (mesh, reports dict).

    ``max_frames`` stops after that many frames, as if the stream ended
    there; frames are never read ahead of integration either way.
    """
    out = config.output
    out.mkdir(parents=True, exist_ok=True)
    try:
        reader = SequenceReader(config.sequence)
    except SceneIOError as e:
        raise ConfigError(str(e)) from e
    rig = reader.rig
    palette = reader.palette if reader.palette is not None else _fallback_palette()
    grid = VoxelGrid(config.fusion, palette)
    timer = _StageTimer()

    pred_depths, gt_depths = [], []
    pred_labels, gt_label_maps = [], []

    frame_ids = reader.frame_ids if max_frames is None else reader.frame_ids[:max_frames]
    for fid in frame_ids:
        try:
            timer.stage = "read"
            left = reader.load_left(fid)
            right = reader.load_right(fid)
            pose = reader.pose(fid)
            gt_labels = reader.load_gt_labels(fid)

            _, depth = timer.run(fid, "stereo", compute_depth,
                                 left.pixels, right.pixels, rig, config.stereo)
            semantics = gt_labels   # classifier stand-in for raw stereo runs
            if config.refined_source == EXTERNAL_MAPS:
                depth, semantics = timer.run(
                    fid, "refine", _external_frame,
                    config, fid, palette, depth, semantics)

            if config.filtering is not None:
                depth = timer.run(fid, "filter", apply_filters,
                                  depth, semantics if isinstance(semantics, LabelMap)
                                  else gt_labels, palette, config.filtering)

            timer.run(fid, "fuse", integrate_frame,
                      grid, depth, semantics, pose, rig.intrinsics)
        except Exception as e:
            raise PipelineError(f"frame {fid:06d}: stage {timer.stage!r}: {e}") from e

        if config.eval.depth:
            gt_depth = reader.load_gt_depth(fid)
            if gt_depth is not None:
                pred_depths.append(depth.values.ravel())
                gt_depths.append(gt_depth.values.ravel())
        if config.eval.seg and gt_labels is not None:
            sem_labels = (semantics.argmax_labels(palette).labels
                          if isinstance(semantics, SemanticScores)
                          else semantics.labels if isinstance(semantics, LabelMap)
                          else None)
            if sem_labels is not None:
                pred_labels.append(sem_labels.ravel())
                gt_label_maps.append(gt_labels.labels.ravel())

    timer.stage = "mesh"
    prune(grid)
    mesh = extract_mesh(grid)
    export_mesh(mesh, out / "mesh.ply")
    timer.write_csv(out / "timings.csv")

    reports = {}
    if config.eval.depth and pred_depths:
        reports["depth"] = depth_errors(
            DepthMap(np.concatenate(pred_depths)[None, :]),
            DepthMap(np.concatenate(gt_depths)[None, :]))
    if config.eval.seg and pred_labels:
        reports["segmentation"] = segmentation_scores(
            np.concatenate(pred_labels)[None, :],
            np.concatenate(gt_label_maps)[None, :],
            num_classes=len(palette), ignore=config.eval.seg_ignore)
    gt_cloud_path = config.sequence / "gt_cloud.ply"
    if config.eval.recon_3d and gt_cloud_path.exists() and mesh.num_triangles:
        cloud = import_mesh(gt_cloud_path)
        pts = cloud.vertices.astype(np.float64)
        labs = cloud.vertex_labels
        if config.eval.crop_z is not None:
            pts, labs = crop_ground_truth(pts, labs, z_max=config.eval.crop_z)
        reports["reconstruction"] = reconstruction_report(pts, mesh)
        reports["semantic_3d"] = semantic_3d_transfer(
            pts, labs, mesh, num_classes=len(palette),
            ignore=config.eval.seg_ignore)

    write_reports(reports, palette, out)
    return mesh, reports


# ---------------------------------------------------------------------------
# report serialization


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.4f}"


def format_depth_table(r: DepthErrorReport) -> str:
    return "\n".join([
        "Depth estimation",
        f"  Abs. error     {_fmt(r.abs_rel)}",
        f"  RMS [m]        {_fmt(r.rms)}",
        f"  Valid pixels   {r.n_valid}",
    ])


def format_seg_table(r: SegmentationReport, palette: ClassPalette,
                     title: str) -> str:
    lines = [title]
    for name, iou in zip(palette.names, r.per_class_iou):
        lines.append(f"  IoU {name:<12s} {_fmt(iou)}")
    lines.append(f"  Overall Acc.   {_fmt(r.overall_acc)}")
    lines.append(f"  Average Acc.   {_fmt(r.average_acc)}")
    lines.append(f"  Average IoU    {_fmt(r.average_iou)}")
    return "\n".join(lines)


def format_recon_table(r) -> str:
    return "\n".join([
        "Surface reconstruction",
        f"  Average distance GT->recon [m]   {_fmt(r.gt_to_recon_avg)}",
        f"  Completeness dist 90% [m]        {_fmt(r.completeness_d90)}",
        f"  Average distance recon->GT [m]   {_fmt(r.recon_to_gt_avg)}",
        f"  Accuracy % < 5cm                 {_fmt(r.accuracy_pct_5cm)}",
    ])


def write_reports(reports: dict, palette: ClassPalette, out_dir) -> None:
    out_dir = Path(out_dir)
    blob = {name: rep.to_json() for name, rep in reports.items()}
    (out_dir / "reports.json").write_text(json.dumps(blob, indent=2) + "\n")

    sections = []
    if "depth" in reports:
        sections.append(format_depth_table(reports["depth"]))
    if "segmentation" in reports:
        sections.append(format_seg_table(reports["segmentation"], palette,
                                         "Semantic segmentation (2D)"))
    if "reconstruction" in reports:
        sections.append(format_recon_table(reports["reconstruction"]))
    if "semantic_3d" in reports:
        sections.append(format_seg_table(reports["semantic_3d"], palette,
                                         "Semantic transfer (3D)"))
    (out_dir / "report.txt").write_text("\n\n".join(sections) + "\n" if sections
                                        else "no reports enabled\n")

    if "depth" in reports:
        with open(out_dir / "depth_curves.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("curve", "x", "y"))
            for thr, frac in reports["depth"].deviation_curve:
                w.writerow(("deviation", f"{thr:.2f}", f"{frac:.6f}"))
            for center, rms in reports["depth"].rms_by_distance:
                w.writerow(("rms_by_distance", f"{center:.2f}", f"{rms:.6f}"))
