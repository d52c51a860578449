#!/usr/bin/env python3
"""Export the paired synthetic scenes as bundles plus golden renders for
the browser viewer's parity tests (frontend/tests/fixtures)."""

import argparse
import json
from pathlib import Path

import numpy as np

from panosplat.bundle import export_bundle
from panosplat.geometry import CameraIntrinsics, CameraView
from panosplat.metrics import count_holes
from panosplat.rasterizer import render_scene
from panosplat.synthetic import build_layered_scene, build_single_layer_scene

SIZE = 96
FOV = np.pi / 2


def dump_render(scene, pose, outdir, tag):
    view = CameraView(CameraIntrinsics(FOV, FOV, SIZE, SIZE),
                      yaw=pose["yaw"], pitch=pose["pitch"],
                      position=np.asarray(pose["position"]))
    r = render_scene(scene, view)
    (outdir / f"render_{tag}.f32").write_bytes(
        r.color.astype("<f4").tobytes())
    (outdir / f"alpha_{tag}.f32").write_bytes(r.alpha.astype("<f4").tobytes())
    return count_holes(r)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                         / "frontend" / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scenes = {"layered": build_layered_scene(), "single": build_single_layer_scene()}
    meta = {"size": SIZE, "fov": FOV, "poses": {}, "holes": {}}
    for name, scene in scenes.items():
        export_bundle(scene, out / name)
        md = scene.mean_depth()
        off = 0.2 * md / np.sqrt(2.0)
        poses = {
            "center": {"yaw": 0.0, "pitch": 0.0, "position": [0.0, 0.0, 0.0]},
            "offset20": {"yaw": 0.0, "pitch": 0.0, "position": [off, 0.0, off]},
        }
        meta["poses"][name] = poses
        meta["holes"][name] = {
            tag: dump_render(scene, pose, out, f"{name}_{tag}")
            for tag, pose in poses.items()
        }
        meta.setdefault("mean_depth", {})[name] = md
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    print(json.dumps(meta["holes"], indent=2))


if __name__ == "__main__":
    main()
