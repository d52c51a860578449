"""Command-line driver: ingest | build | train | render | eval | export."""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import EngineError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="panosplat",
        description="Layered panorama to Gaussian-splat scene engine",
    )
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--keep-dynamic", action="store_true", default=None,
                        help="retain the dynamic layer instead of removing it")
    parser.add_argument("--backend-inpaint", choices=["baseline", "adapter"], default=None)
    parser.add_argument("--parser", dest="parser_backend",
                        choices=["rules", "adapter"], default=None)
    parser.add_argument("--stride", type=int, default=None)
    parser.add_argument("--out", default=None, help="override output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="validate and normalize inputs")
    sub.add_parser("build", help="layer parsing, recovery, and splat initialization")
    sub.add_parser("train", help="layered back-to-front optimization")
    p_render = sub.add_parser("render", help="render a camera trajectory")
    p_render.add_argument("--trajectory", required=True)
    p_render.add_argument("--bundle", default=None)
    p_render.add_argument("--layers", default=None,
                          help="comma-separated layer indices, e.g. 2,3")
    p_eval = sub.add_parser("eval", help="held-out metrics and movement robustness")
    p_eval.add_argument("--bundle", default=None)
    p_export = sub.add_parser("export", help="verify and re-export a bundle")
    p_export.add_argument("--bundle", default=None)
    p_export.add_argument("--dest", default=None)
    return parser


def apply_overrides(config, args):
    if args.seed is not None:
        config.seed = args.seed
    if args.keep_dynamic:
        config.keep_dynamic = True
    if args.backend_inpaint is not None:
        config.inpaint_backend = args.backend_inpaint
    if args.parser_backend is not None:
        config.parser_backend = args.parser_backend
    if args.stride is not None:
        config.stride = args.stride
    if args.out is not None:
        config.out = args.out
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(pipeline.load_config(args.config), args)
        if args.command == "ingest":
            report = pipeline.cmd_ingest(config)
            print(json.dumps(report["pano"]))
        elif args.command == "build":
            _, scene = pipeline.cmd_build(config)
            print(json.dumps({str(k): len(v) for k, v in scene.layers.items()}))
        elif args.command == "train":
            _, order, _ = pipeline.cmd_train(config)
            print(json.dumps({"layer_order": order,
                              "iterations": [config.train.iterations.get(l, 0)
                                             for l in order]}))
        elif args.command == "render":
            layers = ([int(x) for x in args.layers.split(",")]
                      if args.layers else None)
            frames = pipeline.cmd_render(config, args.trajectory,
                                         bundle_path=args.bundle, layers=layers)
            print(json.dumps({"frames": len(frames)}))
        elif args.command == "eval":
            report = pipeline.cmd_eval(config, bundle_path=args.bundle)
            print(json.dumps({"psnr_mean": report["psnr_mean"],
                              "offsets": report["movement_robustness"]["offsets"]}))
        elif args.command == "export":
            manifest = pipeline.cmd_export(config, bundle_path=args.bundle,
                                           dest=args.dest)
            print(json.dumps({"layers": len(manifest["layers"])}))
    except (EngineError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
