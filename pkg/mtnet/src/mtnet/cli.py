"""Command-line entry points.

Exit codes: 0 success, 2 configuration/data problems, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, NetConfig, TrainConfig, load_config
from .data import DataError, load_training_set
from .infer import infer_sequence
from .io import MapIOError
from .train import fit, load_checkpoint, save_checkpoint

log = logging.getLogger("mtnet")


def cmd_train(args) -> int:
    net_cfg = load_config(NetConfig, args.net) if args.net else NetConfig()
    train_cfg = load_config(TrainConfig, args.train) if args.train else TrainConfig()
    dataset = load_training_set(args.data, args.raw, net_cfg, train_cfg.clip_max)
    log.info("training on %d frames for %d epochs", len(dataset), train_cfg.epochs)

    model, history = fit(net_cfg, train_cfg, dataset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, train_cfg, out)

    curves = out.with_suffix(".losses.csv")
    with open(curves, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "total", "seg", "depth"])
        w.writeheader()
        w.writerows(history)
    last = history[-1]
    print(f"checkpoint: {out} (final loss {last['total']:.4f}, "
          f"seg {last['seg']:.4f}, depth {last['depth']:.4f})")
    print(f"curves: {curves}")
    return 0


def cmd_infer(args) -> int:
    model, train_cfg = load_checkpoint(args.ckpt)
    n = infer_sequence(model, args.sequence, args.raw, args.out,
                       train_cfg.clip_max)
    print(f"wrote {n} refined frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mtnet",
        description="joint semantic segmentation and residual depth refinement")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train on a sequence with ground truth")
    s.add_argument("--data", required=True,
                   help="sequence directory (left/, gt_depth/, gt_labels/)")
    s.add_argument("--raw", required=True,
                   help="directory holding depth/%%06d.png from the stereo tool")
    s.add_argument("--out", required=True, help="checkpoint path to write")
    s.add_argument("--net", help="JSON file with architecture settings")
    s.add_argument("--train", help="JSON file with optimization settings")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("infer", help="write refined maps for a sequence")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--sequence", required=True)
    s.add_argument("--raw", required=True,
                   help="directory holding depth/%%06d.png from the stereo tool")
    s.add_argument("--out", required=True, help="maps directory to write")
    s.set_defaults(fn=cmd_infer)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DataError, MapIOError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:   # noqa: BLE001 - single boundary for exit codes
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
