#!/usr/bin/env python3
"""Generate the synthetic demo inputs (panorama, segments, labels, depth,
config) into a directory, ready for the CLI pipeline."""

import argparse

from panosplat.demo import write_demo_inputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir")
    ap.add_argument("--width", type=int, default=512, help="panorama width (2:1)")
    ap.add_argument("--rig-size", type=int, default=128, help="supervision view size")
    ap.add_argument("--stride", type=int, default=2)
    ap.add_argument("--iters", type=int, nargs=3, metavar=("SKY", "BG", "FG"),
                    default=[40, 60, 40])
    args = ap.parse_args()
    cfg = write_demo_inputs(
        args.outdir, width=args.width, rig_size=args.rig_size, stride=args.stride,
        train_iterations={"3": args.iters[0], "2": args.iters[1], "1": args.iters[2]},
    )
    print(f"wrote demo inputs; run e.g.\n  panosplat --config {cfg} ingest")


if __name__ == "__main__":
    main()
