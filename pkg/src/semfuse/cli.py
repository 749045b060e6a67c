"""Command-line entry points.

Exit codes: 0 success, 2 configuration/validation problems, 1 runtime
failure inside a stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .filtering import FilterParams, apply_filters
from .fusion import FusionParams, VoxelGrid, extract_mesh, integrate_frame, prune
from .mesh_io import MeshFormatError, export_mesh, import_mesh
from .metrics import (
    crop_ground_truth,
    depth_errors,
    reconstruction_report,
    segmentation_scores,
    semantic_3d_transfer,
)
from .pipeline import ConfigError, PipelineConfig, _from_dict
from .scene_io import (
    DepthMap,
    SceneIOError,
    SequenceReader,
    frame_path,
    read_depth_png,
    read_labels_png,
    read_palette,
    write_depth_png,
)
from .stereo import SgbmParams, compute_depth
from .synthetic import garden_rig, garden_scene, render_synthetic

log = logging.getLogger("semfuse")


def _params_from_file(cls, path, what):
    if path is None:
        return cls()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} file {p} does not exist")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {p} is not valid JSON: {e}") from e
    return _from_dict(cls, obj, what)


def _require_dir(path, what) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} directory {p} does not exist")
    return p


def _require_file(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file {p} does not exist")
    return p


def _emit_report(blob: dict, text: str, out_path) -> None:
    print(text)
    if out_path:
        Path(out_path).write_text(json.dumps(blob, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    config = PipelineConfig.from_json(args.config)
    mesh, reports = pl.run(config)
    print(f"mesh: {config.output / 'mesh.ply'} "
          f"({mesh.num_vertices} vertices, {mesh.num_triangles} triangles)")
    for name in reports:
        print(f"report: {name}")
    return 0


def cmd_stereo(args) -> int:
    seq = _require_dir(args.sequence, "sequence")
    params = _params_from_file(SgbmParams, args.params, "stereo params")
    out = Path(args.out)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    reader = SequenceReader(seq)
    for fid in reader.frame_ids:
        try:
            left, right = reader.load_left(fid), reader.load_right(fid)
            _, depth = compute_depth(left.pixels, right.pixels, reader.rig, params)
            write_depth_png(depth, frame_path(out, "depth", fid))
        except SceneIOError as e:
            raise RuntimeError(f"frame {fid:06d}: {e}") from e
        log.info("frame %06d done", fid)
    print(f"wrote {len(reader)} depth maps to {out / 'depth'}")
    return 0


def cmd_filter(args) -> int:
    depth = read_depth_png(_require_file(args.depth, "depth"))
    params = _params_from_file(FilterParams, args.params, "filter params")
    labels = None
    palette = None
    if args.palette:
        palette = read_palette(_require_file(args.palette, "palette"))
    if args.labels:
        if palette is None:
            raise ConfigError("--labels needs --palette for class indices")
        labels = read_labels_png(_require_file(args.labels, "labels"), palette)
    filtered = apply_filters(depth, labels, palette, params)
    write_depth_png(filtered, args.out)
    kept = int((filtered.values > 0).sum())
    print(f"kept {kept} of {int((depth.values > 0).sum())} valid pixels -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    seq = _require_dir(args.sequence, "sequence")
    params = _params_from_file(FusionParams, args.params, "fusion params")
    maps_root = _require_dir(args.maps, "maps") if args.maps else None
    reader = SequenceReader(seq)
    palette = reader.palette if reader.palette is not None else pl._fallback_palette()
    grid = VoxelGrid(params, palette)
    for fid in reader.frame_ids:
        try:
            if maps_root is not None:
                depth = read_depth_png(_require_file(
                    frame_path(maps_root, "depth", fid), f"depth map {fid:06d}"))
                lp = frame_path(maps_root, "labels", fid)
                labels = read_labels_png(lp, palette) if lp.exists() else None
            else:
                depth = reader.load_gt_depth(fid)
                labels = reader.load_gt_labels(fid)
                if depth is None:
                    raise ConfigError(f"sequence has no gt_depth for frame "
                                      f"{fid:06d}; pass --maps for "
                                      "reconstructed depth")
            integrate_frame(grid, depth, labels, reader.pose(fid),
                            reader.rig.intrinsics)
        except (ConfigError, KeyboardInterrupt):
            raise
        except SceneIOError as e:
            raise RuntimeError(f"frame {fid:06d}: {e}") from e
    prune(grid)
    mesh = extract_mesh(grid)
    export_mesh(mesh, args.out)
    print(f"mesh: {args.out} ({mesh.num_vertices} vertices, "
          f"{mesh.num_triangles} triangles, {grid.num_chunks} chunks)")
    return 0


def _paired_pngs(pred_dir, gt_dir):
    pred = {p.name: p for p in Path(pred_dir).glob("*.png")}
    gt = {p.name: p for p in Path(gt_dir).glob("*.png")}
    names = sorted(pred.keys() & gt.keys())
    if not names:
        raise ConfigError(f"no common .png names between {pred_dir} and {gt_dir}")
    return [(pred[n], gt[n]) for n in names]


def cmd_eval_depth(args) -> int:
    pairs = _paired_pngs(_require_dir(args.pred, "prediction"),
                         _require_dir(args.gt, "ground truth"))
    pred = np.concatenate([read_depth_png(p).values.ravel() for p, _ in pairs])
    gt = np.concatenate([read_depth_png(g).values.ravel() for _, g in pairs])
    report = depth_errors(DepthMap(pred[None, :]), DepthMap(gt[None, :]))
    _emit_report({"depth": report.to_json()},
                 pl.format_depth_table(report), args.out)
    if args.curves:
        pl_dir = Path(args.curves).parent
        pl_dir.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        with open(args.curves, "w", newline="") as f:
            w = _csv.writer(f)
            w.writerow(("curve", "x", "y"))
            for thr, frac in report.deviation_curve:
                w.writerow(("deviation", f"{thr:.2f}", f"{frac:.6f}"))
            for center, rms in report.rms_by_distance:
                w.writerow(("rms_by_distance", f"{center:.2f}", f"{rms:.6f}"))
    return 0


def cmd_eval_seg(args) -> int:
    palette = read_palette(_require_file(args.palette, "palette"))
    pairs = _paired_pngs(_require_dir(args.pred, "prediction"),
                         _require_dir(args.gt, "ground truth"))
    pred = np.concatenate([read_labels_png(p, palette).labels.ravel()
                           for p, _ in pairs])
    gt = np.concatenate([read_labels_png(g, palette).labels.ravel()
                         for _, g in pairs])
    report = segmentation_scores(pred[None, :], gt[None, :],
                                 num_classes=len(palette),
                                 ignore=tuple(args.ignore))
    _emit_report({"segmentation": report.to_json()},
                 pl.format_seg_table(report, palette, "Semantic segmentation"),
                 args.out)
    return 0


def cmd_eval_3d(args) -> int:
    gt = import_mesh(_require_file(args.gt, "ground-truth cloud"))
    mesh = import_mesh(_require_file(args.mesh, "mesh"))
    if mesh.num_triangles == 0:
        raise ConfigError(f"{args.mesh} has no triangles to evaluate")
    pts = gt.vertices.astype(np.float64)
    labs = gt.vertex_labels
    if args.crop_z is not None:
        pts, labs = crop_ground_truth(pts, labs, z_max=args.crop_z)
        if len(pts) == 0:
            raise ConfigError(f"--crop-z {args.crop_z} removes every point")
    recon = reconstruction_report(pts, mesh)
    transfer = semantic_3d_transfer(pts, labs, mesh,
                                    num_classes=int(gt.vertex_labels.max()) + 1)
    palette = None
    if args.palette:
        palette = read_palette(_require_file(args.palette, "palette"))
    text = pl.format_recon_table(recon)
    if palette is not None:
        text += "\n\n" + pl.format_seg_table(transfer, palette,
                                             "Semantic transfer (3D)")
    _emit_report({"reconstruction": recon.to_json(),
                  "semantic_3d": transfer.to_json()}, text, args.out)
    return 0


def cmd_synth(args) -> int:
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    scene = garden_scene(args.frames)
    rig = garden_rig(args.width, args.height)
    info = render_synthetic(scene, rig, args.sigma, args.out, seed=args.seed)
    print(f"rendered {info['frames']} frames and {info['cloud_points']} "
          f"cloud points into {info['root']}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="semfuse",
        description="incremental semantic stereo reconstruction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="full pipeline from a JSON config")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("stereo", help="depth maps for every frame")
    s.add_argument("--sequence", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--params", help="JSON file with matcher settings")
    s.set_defaults(fn=cmd_stereo)

    s = sub.add_parser("filter", help="clean one depth map")
    s.add_argument("--depth", required=True)
    s.add_argument("--labels")
    s.add_argument("--palette")
    s.add_argument("--params", help="JSON file with filter settings")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_filter)

    s = sub.add_parser("fuse", help="volumetric fusion to a labeled mesh")
    s.add_argument("--sequence", required=True)
    s.add_argument("--params", help="JSON file with fusion settings")
    s.add_argument("--maps", help="directory of depth/ and labels/ maps")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fuse)

    s = sub.add_parser("eval-depth", help="depth error report")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", help="write JSON report here")
    s.add_argument("--curves", help="write curve CSV here")
    s.set_defaults(fn=cmd_eval_depth)

    s = sub.add_parser("eval-seg", help="segmentation report")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--palette", required=True)
    s.add_argument("--ignore", type=int, nargs="*", default=[])
    s.add_argument("--out", help="write JSON report here")
    s.set_defaults(fn=cmd_eval_seg)

    s = sub.add_parser("eval-3d", help="bidirectional surface distances")
    s.add_argument("--gt", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--crop-z", type=float, default=None)
    s.add_argument("--palette")
    s.add_argument("--out", help="write JSON report here")
    s.set_defaults(fn=cmd_eval_3d)

    s = sub.add_parser("synth", help="render the synthetic garden sequence")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=20)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, SceneIOError, MeshFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:   # noqa: BLE001 - single boundary for exit codes
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
