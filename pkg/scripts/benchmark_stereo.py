#!/usr/bin/env python3
"""Time and score the stereo matcher across image sizes.

For each size, renders one noise-free frame of the garden scene, runs
the matcher once (after a throwaway call that absorbs JIT compilation),
and compares the disparity against the analytic ground truth wherever
both are valid. Sky has no finite disparity, so coverage is relative to
ground-truth-valid pixels only.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from semfuse.scene_io import SequenceReader
from semfuse.stereo import SgbmParams, compute_depth
from semfuse.synthetic import garden_rig, garden_scene, render_synthetic


def parse_size(text: str):
    w, _, h = text.partition("x")
    return int(w), int(h)


def bench_size(width, height, params, repeats):
    with tempfile.TemporaryDirectory(prefix="bench_stereo_") as tmp:
        seq = Path(tmp) / "seq"
        render_synthetic(garden_scene(1), garden_rig(width, height), 0.0, seq)
        reader = SequenceReader(seq)
        left = reader.load_left(0).pixels
        right = reader.load_right(0).pixels
        rig = reader.rig
        gt = reader.load_gt_depth(0).values

    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        disp, _ = compute_depth(left, right, rig, params)
        best = min(best, time.perf_counter() - t0)

    fb = rig.intrinsics.fx * rig.baseline
    gt_disp = np.where(gt > 0, fb / np.where(gt > 0, gt, 1.0), 0.0)
    both = (gt > 0) & disp.valid
    err = np.abs(disp.values[both] - gt_disp[both])
    return {
        "size": f"{width}x{height}",
        "time_s": best,
        "mpix_s": width * height / best / 1e6,
        "coverage": both.sum() / max((gt > 0).sum(), 1),
        "within_1px": float((err < 1.0).mean()) if err.size else float("nan"),
        "median_px": float(np.median(err)) if err.size else float("nan"),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", nargs="+", default=["160x120", "320x240", "640x480"],
                   metavar="WxH")
    p.add_argument("--repeats", type=int, default=3,
                   help="timed runs per size; best is reported")
    args = p.parse_args(argv)

    # one tiny call so compilation time never lands in a measurement
    warm = garden_rig(32, 16)
    zeros = np.zeros((16, 32, 3), dtype=np.uint8)
    compute_depth(zeros, zeros, warm, SgbmParams())
    params = SgbmParams()

    head = (f"{'size':<9} {'best[s]':>8} {'Mpix/s':>7} {'coverage':>9} "
            f"{'<1px':>7} {'median[px]':>11}")
    print(head)
    print("-" * len(head))
    for size in args.sizes:
        w, h = parse_size(size)
        r = bench_size(w, h, params, args.repeats)
        print(f"{r['size']:<9} {r['time_s']:>8.2f} {r['mpix_s']:>7.3f} "
              f"{r['coverage']:>9.3f} {r['within_1px']:>7.3f} "
              f"{r['median_px']:>11.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
