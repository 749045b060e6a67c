#!/usr/bin/env python3
"""Bring an external stereo recording into the sequence layout.

The pipeline reads one directory layout, documented in
``semfuse.scene_io``:

    root/calib.json         fx, fy, cx, cy, width, height, baseline_m
    root/poses.txt          one 3x4 row-major camera-to-world matrix per line
    root/left/%06d.png      rectified left RGB
    root/right/%06d.png     rectified right RGB
    root/gt_depth/%06d.png  optional, 16-bit millimeters, 0 = invalid
    root/gt_labels/%06d.png optional, 8-bit class indices
    root/palette.json       optional class palette
    root/gt_cloud.ply       optional labeled reference cloud

Every capture rig ships its own calibration and pose conventions, and a
converter that guesses them would fail quietly on the first layout it
did not anticipate. So ``convert()`` below is a stub: it spells out the
writer calls your rig-specific code needs to make, and refuses to run
until you fill it in. ``--check`` then validates the result the same
way the pipeline will read it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from PIL import Image

from semfuse.scene_io import SceneIOError, SequenceReader, frame_path


def convert(src: Path, dst: Path) -> None:
    """Rig-specific conversion goes here.

    The writing half is already solved; map your recording onto these
    calls and delete the raise:

      from semfuse.scene_io import (CameraIntrinsics, StereoRig, Pose,
                                    write_calib, write_poses,
                                    write_image_png, write_depth_png,
                                    write_palette)

      write_calib(StereoRig(CameraIntrinsics(...), baseline), dst / "calib.json")
      write_poses([Pose(R, t), ...], dst / "poses.txt")     # camera-to-world
      write_image_png(left_rgb_uint8, frame_path(dst, "left", i))
      write_image_png(right_rgb_uint8, frame_path(dst, "right", i))

    Conventions that bite: +y is down and +z is forward in camera
    coordinates, poses map camera points into the world, images must be
    rectified with the right camera offset along +x, and depth PNGs are
    millimeters so anything beyond 65.535 m must be dropped to 0.
    """
    raise NotImplementedError(
        f"no converter for your rig yet; edit convert() in {__file__}")


def check_sequence(root: Path) -> int:
    """Read a directory exactly as the pipeline will; returns problem count."""
    problems = 0

    def complain(msg):
        nonlocal problems
        problems += 1
        print(f"problem: {msg}")

    try:
        reader = SequenceReader(root)
    except SceneIOError as e:
        complain(e)
        return problems

    k = reader.rig.intrinsics
    print(f"calib:   {k.width}x{k.height}  fx={k.fx:.1f} fy={k.fy:.1f}  "
          f"baseline={reader.rig.baseline:.4f} m")
    print(f"poses:   {len(reader._poses)}")
    print(f"frames:  {len(reader.frame_ids)} usable"
          + (f" ({reader.frame_ids[0]:06d}..{reader.frame_ids[-1]:06d})"
             if reader.frame_ids else ""))
    if not reader.frame_ids:
        complain("no usable frames (left/*.png with a matching pose line)")

    n_depth = n_labels = 0
    for fid in reader.frame_ids:
        for sub in ("left", "right"):
            path = frame_path(root, sub, fid)
            if not path.is_file():
                complain(f"missing {sub} image {path.name}")
                continue
            size = Image.open(path).size   # header only, cheap
            if size != (k.width, k.height):
                complain(f"{sub}/{path.name} is {size[0]}x{size[1]}, "
                         f"calib says {k.width}x{k.height}")
        n_depth += frame_path(root, "gt_depth", fid).is_file()
        n_labels += frame_path(root, "gt_labels", fid).is_file()

    print(f"gt:      {n_depth} depth, {n_labels} label frames"
          + (", palette" if reader.palette is not None else "")
          + (", cloud" if (root / "gt_cloud.ply").is_file() else ""))
    if n_labels and reader.palette is None:
        complain("gt_labels present but no palette.json; labels will be ignored")

    return problems


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--check", metavar="DIR",
                   help="validate an existing sequence directory")
    p.add_argument("--src", metavar="DIR", help="recording to convert")
    p.add_argument("--dst", metavar="DIR", help="sequence directory to write")
    args = p.parse_args(argv)

    if args.check:
        problems = check_sequence(Path(args.check))
        print("ok" if problems == 0 else f"{problems} problem(s)")
        return 0 if problems == 0 else 2
    if args.src or args.dst:
        if not (args.src and args.dst):
            p.error("--src and --dst go together")
        try:
            convert(Path(args.src), Path(args.dst))
        except NotImplementedError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        return 2 if check_sequence(Path(args.dst)) else 0
    p.error("nothing to do: pass --check DIR or --src/--dst")


if __name__ == "__main__":
    sys.exit(main())
