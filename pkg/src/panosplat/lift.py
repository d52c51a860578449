"""Lift recovered panorama layers to 3D: point clouds and initial splats.

Each masked pixel unprojects along its viewing ray to its radial depth.
Initial splats cover the angular footprint of one source pixel at the
point's depth, so a freshly lifted layer renders gap-free even though
densification stays disabled throughout training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import MissingDepthError
from .scene import SplatLayer

INIT_OPACITY = 0.7


@dataclass
class LayerPoints:
    positions: np.ndarray  # (N, 3)
    colors: np.ndarray  # (N, 3)
    pixels: np.ndarray  # (N, 2) source (i, j)

    def __len__(self):
        return len(self.positions)


def pano_to_points(layer_rgb, layer_depth, mask, stride=1):
    """One point per masked pixel (row-major, subsampled by stride)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rgb = np.asarray(layer_rgb, dtype=np.float64)
    depth = np.asarray(layer_depth, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    H, W = mask.shape
    sub = np.zeros_like(mask)
    sub[::stride, ::stride] = True
    ii, jj = np.nonzero(mask & sub)
    d = depth[ii, jj]
    bad = d <= 0
    if bad.any():
        raise MissingDepthError(list(zip(ii[bad].tolist(), jj[bad].tolist())))
    if ii.size == 0:
        return LayerPoints(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2), np.int64))
    pos = geometry.unproject(ii.astype(np.float64), jj.astype(np.float64), d, (H, W))
    return LayerPoints(pos, rgb[ii, jj], np.stack([ii, jj], axis=1))


def points_to_splats(points: LayerPoints, pano_width, stride=1, opacity=INIT_OPACITY,
                     spread=1.0):
    """Initialize splats from lifted points.

    Identity rotation; isotropic scale = depth * (2*pi/pano_width) *
    stride * spread, the angular footprint of one source pixel at that
    depth; constant initial opacity.
    """
    n = len(points)
    if n == 0:
        return SplatLayer.empty()
    depth = np.linalg.norm(points.positions, axis=1)
    scale = depth * (2.0 * np.pi / pano_width) * stride * spread
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return SplatLayer(
        positions=points.positions.copy(),
        rotations=rot,
        log_scales=np.log(scale)[:, None] * np.ones((1, 3)),
        opacity_logits=np.full(n, np.log(opacity / (1.0 - opacity))),
        colors=points.colors.copy(),
    )


def save_ply(path, layer_points: dict):
    """Binary little-endian PLY with xyz, rgb and layer index, for debugging."""
    total = sum(len(p) for p in layer_points.values())
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {total}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "property uchar layer\nend_header\n"
    ).encode("ascii")
    record = struct.Struct("<fffBBBB")
    chunks = [header]
    for layer in sorted(layer_points):
        pts = layer_points[layer]
        rgb8 = np.clip(np.rint(pts.colors * 255.0), 0, 255).astype(np.uint8)
        for p, c in zip(pts.positions, rgb8):
            chunks.append(record.pack(p[0], p[1], p[2], c[0], c[1], c[2], layer))
    from .imgio import atomic_write

    atomic_write(path, b"".join(chunks))


def load_ply(path):
    """Reader for the writer above; returns (positions, colors, layers)."""
    with open(path, "rb") as f:
        data = f.read()
    head_end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:head_end].decode("ascii").splitlines()
    count = next(int(line.split()[-1]) for line in header if line.startswith("element vertex"))
    record = struct.Struct("<fffBBBB")
    pos = np.empty((count, 3))
    col = np.empty((count, 3))
    lay = np.empty(count, dtype=np.int32)
    for k in range(count):
        x, y, z, r, g, b, l = record.unpack_from(data, head_end + k * record.size)
        pos[k] = (x, y, z)
        col[k] = (r / 255.0, g / 255.0, b / 255.0)
        lay[k] = l
    return pos, col, lay
