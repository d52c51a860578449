"""Paired synthetic scenes for the occlusion ablation and self-reconstruction.

World: a full sky dome at 20 m, a wall arc (8 m, elevations within +-40
degrees, longitudes within +-95 degrees) and foreground disk clusters at
3 m in front of the wall.  The layered scene keeps each surface complete
(the wall continues behind the disks, the dome behind the wall); the
single-layer scene holds only what a capture from the scene center sees,
so sideways camera motion opens alpha holes behind the disks.

Measurement views must face the arc; `ablation_poses` provides them.
"""

import numpy as np

from panosplat.geometry import CameraIntrinsics, CameraView
from panosplat.scene import SplatLayer, SplatScene

SKY_R = 20.0
WALL_R = 8.0
DISK_R = 3.0
BAND = np.deg2rad(40.0)  # wall half-height around the equator
ARC = np.deg2rad(95.0)  # wall half-width around phi = 0

DISK_CENTERS = [(0.0, 0.0), (0.8, 0.1), (-0.85, -0.1)]
DISK_ANGULAR_RADIUS = 0.32


def _grid_directions(rows, cols):
    theta = (np.arange(rows) + 0.5) * np.pi / rows
    phi = (np.arange(cols) + 0.5) * 2 * np.pi / cols - np.pi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(tt)
    dirs = np.stack([st * np.cos(pp), np.cos(tt), st * np.sin(pp)], axis=-1)
    return dirs.reshape(-1, 3), tt.reshape(-1), pp.reshape(-1), 2 * np.pi / cols


def _in_disk(phi, elevation):
    hit = np.zeros(phi.shape, dtype=bool)
    for cphi, celev in DISK_CENTERS:
        d2 = (np.mod(phi - cphi + np.pi, 2 * np.pi) - np.pi) ** 2 + (elevation - celev) ** 2
        hit |= d2 <= DISK_ANGULAR_RADIUS**2
    return hit


def _colors_sky(dirs):
    return np.stack([
        0.4 + 0.2 * dirs[:, 1],
        0.6 + 0.2 * dirs[:, 1],
        0.9 * np.ones(len(dirs)),
    ], axis=1).clip(0.02, 0.98)


def _colors_wall(phi, elevation):
    stripe = 0.5 + 0.25 * np.sin(8 * phi) + 0.1 * np.sin(23 * elevation)
    return np.stack([0.3 + 0.4 * stripe, 0.25 + 0.3 * stripe, 0.2 + 0.2 * stripe],
                    axis=1).clip(0.02, 0.98)


def _colors_disk(phi, elevation):
    return np.stack([0.15 + 0.1 * np.sin(5 * phi), 0.5 + 0.2 * np.cos(7 * elevation),
                     0.2 * np.ones(len(phi))], axis=1).clip(0.02, 0.98)


def _layer(dirs, radius, colors, step, opacity=0.92, spread=0.8):
    n = len(dirs)
    scale = radius * step * spread
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return SplatLayer(
        positions=dirs * radius,
        rotations=rot,
        log_scales=np.full((n, 3), np.log(scale)),
        opacity_logits=np.full(n, np.log(opacity / (1 - opacity))),
        colors=colors,
    )


def _regions(rows, cols):
    dirs, theta, phi, step = _grid_directions(rows, cols)
    elevation = np.pi / 2 - theta
    wall_region = (np.abs(elevation) <= BAND) & (np.abs(phi) <= ARC)
    disks = wall_region & _in_disk(phi, elevation)
    return dirs, phi, elevation, step, wall_region, disks


def build_layered_scene(rows=44, cols=88):
    """Complete per-layer content (about 5k splats at the default grid):
    disks (1), the full wall arc including behind the disks (2), and the
    full sky dome (3)."""
    dirs, phi, elevation, step, wall_region, disks = _regions(rows, cols)
    sky = _layer(dirs, SKY_R, _colors_sky(dirs), step)
    wall = _layer(dirs[wall_region], WALL_R,
                  _colors_wall(phi[wall_region], elevation[wall_region]), step)
    fg = _layer(dirs[disks], DISK_R, _colors_disk(phi[disks], elevation[disks]), step)
    return SplatScene({1: fg, 2: wall, 3: sky},
                      {"pano_width": cols, "pano_height": rows})


def build_single_layer_scene(rows=44, cols=88):
    """Only the surfaces visible from the scene center, in one layer."""
    dirs, phi, elevation, step, wall_region, disks = _regions(rows, cols)
    wall_visible = wall_region & ~disks
    sky_visible = ~wall_region
    parts = [
        _layer(dirs[disks], DISK_R, _colors_disk(phi[disks], elevation[disks]), step),
        _layer(dirs[wall_visible], WALL_R,
               _colors_wall(phi[wall_visible], elevation[wall_visible]), step),
        _layer(dirs[sky_visible], SKY_R, _colors_sky(dirs[sky_visible]), step),
    ]
    return SplatScene({1: SplatLayer.concatenate(parts)},
                      {"pano_width": cols, "pano_height": rows})


def ablation_poses(offset_m, size=96, fov=np.pi / 2):
    """Poses at four diagonal horizontal offsets, always facing the arc."""
    intr = CameraIntrinsics(fov, fov, size, size)
    poses = []
    for ang in (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4):
        position = np.array([offset_m * np.cos(ang), 0.0, offset_m * np.sin(ang)])
        for yaw in (-0.45, 0.0, 0.45):
            poses.append(CameraView(intr, yaw=yaw, pitch=0.0, position=position))
    return poses


def perturb_scene(scene, rng, rel=0.05):
    """Parameter noise for self-reconstruction: ~5 percent per group,
    positions relative to each splat's own footprint."""
    noisy = scene.copy()
    for layer in noisy.layers.values():
        n = len(layer)
        footprint = np.exp(layer.log_scales[:, :1])
        layer.positions += rng.normal(0, rel, (n, 3)) * footprint
        layer.rotations += rng.normal(0, rel, (n, 4))
        layer.normalize_rotations()
        layer.log_scales += rng.normal(0, rel, (n, 3))
        layer.opacity_logits += rng.normal(0, 2 * rel, n)
        layer.colors += rng.normal(0, rel, (n, 3))
    return noisy
