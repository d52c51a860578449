"""Synthetic demo inputs: a small panorama with segments, labels and depth.

The scene is a textured room-scale world: sky dome overhead, a striped
wall band with ground below it, a few near trees, and one pedestrian
(the dynamic object).  Good enough to exercise every pipeline stage in
seconds, with known layer structure for assertions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import imgio

LABELS = {1: "sky", 2: "building", 3: "road", 4: "tree", 5: "person"}


def _disk(shape, center, radius):
    ii, jj = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (ii - center[0]) ** 2 + (jj - center[1]) ** 2 <= radius**2


def make_demo_arrays(width=512, seed=7):
    height = width // 2
    H, W = height, width
    rng = np.random.default_rng(seed)

    horizon = int(0.55 * H)
    ground_start = int(0.75 * H)

    seg = np.ones((H, W), dtype=np.int32)  # sky
    seg[horizon:ground_start] = 2  # wall band
    seg[ground_start:] = 3  # ground

    pano = np.zeros((H, W, 3))
    ii = np.arange(H, dtype=np.float64)[:, None]
    jj = np.arange(W, dtype=np.float64)[None, :]
    sky_t = np.clip(ii / horizon, 0, 1)
    pano[..., 0] = 0.35 + 0.35 * sky_t
    pano[..., 1] = 0.55 + 0.25 * sky_t
    pano[..., 2] = 0.95 - 0.10 * sky_t
    wall = (seg == 2)
    stripes = 0.5 + 0.2 * np.sin(2 * np.pi * jj / 32) + 0.08 * np.sin(2 * np.pi * ii / 12)
    pano[..., 0] = np.where(wall, 0.55 * stripes + 0.25, pano[..., 0])
    pano[..., 1] = np.where(wall, 0.35 * stripes + 0.18, pano[..., 1])
    pano[..., 2] = np.where(wall, 0.25 * stripes + 0.12, pano[..., 2])
    ground = (seg == 3)
    gshade = 0.35 + 0.15 * (ii - ground_start) / max(H - ground_start, 1) \
        + 0.05 * np.sin(2 * np.pi * jj / 24)
    for c, base in enumerate((1.0, 0.95, 0.85)):
        pano[..., c] = np.where(ground, np.clip(gshade * base, 0, 1), pano[..., c])

    depth = np.full((H, W), 30.0)  # sky placeholder, replaced by the sky shell
    depth[wall] = 8.0
    ramp = (ii - ground_start) / max(H - ground_start, 1)
    depth = np.where(ground, 8.0 - 5.5 * np.clip(ramp, 0, 1), depth)

    tree_centers = [(horizon + 6, int(0.2 * W)), (horizon + 10, int(0.62 * W)),
                    (horizon + 4, int(0.85 * W))]
    for center in tree_centers:
        tree = _disk((H, W), center, H // 16)
        seg[tree] = 4
        depth[tree] = 3.0
        pano[tree] = [0.12, 0.45, 0.15]
        speckle = rng.normal(0, 0.03, (int(tree.sum()), 3))
        pano[tree] = np.clip(pano[tree] + speckle, 0, 1)

    person = _disk((H, W), (ground_start + 2, int(0.42 * W)), H // 20)
    seg[person] = 5
    depth[person] = 2.0
    pano[person] = [0.85, 0.15, 0.12]

    return pano, seg, depth


def write_demo_inputs(outdir, width=512, seed=7, train_iterations=None,
                      rig_size=128, stride=2):
    """Write pano/segments/labels/depth plus a ready-to-run config.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pano, seg, depth = make_demo_arrays(width, seed)
    imgio.save_png(outdir / "pano.png", pano)
    imgio.save_segments_png(outdir / "segments.png", seg)
    imgio.atomic_write(outdir / "labels.json",
                       json.dumps({str(k): v for k, v in LABELS.items()}).encode())
    imgio.save_pfm(outdir / "depth.pfm", depth)
    if train_iterations is None:
        train_iterations = {"3": 40, "2": 60, "1": 40, "0": 40}
    config = {
        "panorama": "pano.png",
        "segments": "segments.png",
        "labels": "labels.json",
        "depth": "depth.pfm",
        "out": "out",
        "seed": 0,
        "pano_width": width,
        "stride": stride,
        "train": {"iterations": train_iterations},
        "rig": {"width": rig_size, "height": rig_size},
    }
    imgio.atomic_write(outdir / "config.json", json.dumps(config, indent=2).encode())
    return outdir / "config.json"
