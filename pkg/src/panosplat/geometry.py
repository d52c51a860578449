"""Equirectangular / spherical / perspective coordinate math.

Conventions used throughout the package:
  - Panorama: row-major (H, W, 3) float array, values in [0, 1], W = 2H.
    Row 0 is the top pole.
  - Angles: theta is the polar angle from the top pole in [0, pi];
    phi is longitude in (-pi, pi].  Pixel (i, j) maps to
    theta = pi*i/H, phi = -2*pi*j/W + pi.
  - World frame: right-handed, +y toward the top pole, camera at origin.
    Unit direction for (theta, phi) is
    (sin(theta)*cos(phi), cos(theta), sin(theta)*sin(phi)).
  - Camera views: yaw = center longitude, pitch = elevation above the
    equator.  Camera space is x right, y down, z forward; pixel centers
    sit at integer+0.5 coordinates.
  - Interpolation: longitude wraps, latitude clamps at the poles.
    Bilinear for RGB, nearest-neighbor for masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, GeometryError

TWO_PI = 2.0 * np.pi


def normalize_longitude(phi):
    """Wrap longitude into (-pi, pi]."""
    phi = np.asarray(phi, dtype=np.float64)
    wrapped = phi - TWO_PI * np.floor((phi + np.pi) / TWO_PI)
    # floor boundary: exactly -pi must come back as +pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


def pixel_to_angles(i, j, pano_dims):
    """Map pixel indices to (theta, phi).

    Fractional coordinates are accepted; indices must lie in
    [0, H) x [0, W).
    """
    H, W = pano_dims
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    if np.any(i < 0) or np.any(i >= H) or np.any(j < 0) or np.any(j >= W):
        raise GeometryError(f"pixel index out of range for {H}x{W} panorama")
    theta = np.pi * i / H
    phi = normalize_longitude(-TWO_PI * j / W + np.pi)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def angles_to_pixel(theta, phi, pano_dims):
    """Exact inverse of :func:`pixel_to_angles`; returns continuous (i, j)."""
    H, W = pano_dims
    theta = np.asarray(theta, dtype=np.float64)
    phi = normalize_longitude(phi)
    i = theta * H / np.pi
    j = (np.pi - np.asarray(phi, dtype=np.float64)) * W / TWO_PI
    # phi = -pi + eps maps just below W; fold the closed endpoint
    j = np.where(j >= W, j - W, j)
    if i.ndim == 0:
        return float(i), float(j)
    return i, j


def direction_from_angles(theta, phi):
    """Unit direction(s) for polar angle theta and longitude phi."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1)


def angles_from_direction(d):
    """Inverse of :func:`direction_from_angles`; phi is 0 at the poles."""
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    if np.any(n == 0.0):
        raise GeometryError("zero-norm direction")
    theta = np.arccos(np.clip(d[..., 1] / n, -1.0, 1.0))
    phi = np.arctan2(d[..., 2], d[..., 0])
    at_pole = np.minimum(theta, np.pi - theta) == 0.0
    phi = np.where(at_pole, 0.0, phi)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def unproject(i, j, depth, pano_dims):
    """Lift pixel(s) with radial depth to 3D points; ||p|| == depth."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise GeometryError("depth must be positive")
    theta, phi = pixel_to_angles(i, j, pano_dims)
    return depth[..., None] * direction_from_angles(theta, phi) if depth.ndim \
        else depth * direction_from_angles(theta, phi)


def project_point(p):
    """Radial projection of 3D point(s) back to (theta, phi, depth)."""
    p = np.asarray(p, dtype=np.float64)
    depth = np.linalg.norm(p, axis=-1)
    if np.any(depth == 0.0):
        raise GeometryError("cannot project the origin")
    theta, phi = angles_from_direction(p)
    if p.ndim == 1:
        return theta, phi, float(depth)
    return theta, phi, depth


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics shared by every view of a rig."""

    fov_x: float
    fov_y: float
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.fov_x < np.pi and 0.0 < self.fov_y < np.pi):
            raise GeometryError("fov must be in (0, pi)")

    @property
    def fx(self):
        return 0.5 * self.width / np.tan(0.5 * self.fov_x)

    @property
    def fy(self):
        return 0.5 * self.height / np.tan(0.5 * self.fov_y)

    @property
    def cx(self):
        return 0.5 * self.width

    @property
    def cy(self):
        return 0.5 * self.height


@dataclass(frozen=True)
class CameraView:
    """One perspective camera: shared intrinsics plus yaw/pitch/position."""

    intrinsics: CameraIntrinsics
    yaw: float
    pitch: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def forward(self):
        cp = np.cos(self.pitch)
        return np.array([cp * np.cos(self.yaw), np.sin(self.pitch), cp * np.sin(self.yaw)])

    def right(self):
        # limit of world_up x forward along the yaw meridian; defined at the poles
        return np.array([np.sin(self.yaw), 0.0, -np.cos(self.yaw)])

    def up(self):
        return np.cross(self.forward(), self.right())

    def world_to_cam(self):
        """3x3 rotation: world direction -> (right, down, forward) components."""
        return np.stack([self.right(), -self.up(), self.forward()])

    def pixel_rays(self):
        """World-space unit ray directions through every pixel center, (H, W, 3)."""
        intr = self.intrinsics
        u = (np.arange(intr.width, dtype=np.float64) + 0.5 - intr.cx) / intr.fx
        v = (np.arange(intr.height, dtype=np.float64) + 0.5 - intr.cy) / intr.fy
        uu, vv = np.meshgrid(u, v)
        cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
        cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
        return cam @ self.world_to_cam()  # rows of M = cam axes, so v_cam @ M = v_world

    def contains_directions(self, dirs):
        """Frustum test for world directions of any leading shape."""
        intr = self.intrinsics
        cam = np.asarray(dirs, dtype=np.float64) @ self.world_to_cam().T
        tx = np.tan(0.5 * intr.fov_x)
        ty = np.tan(0.5 * intr.fov_y)
        z = cam[..., 2]
        eps = 1e-12
        return (z > 0) & (np.abs(cam[..., 0]) <= z * tx + eps) & (np.abs(cam[..., 1]) <= z * ty + eps)


@dataclass(frozen=True)
class CameraRig:
    """Ordered set of views sharing one set of intrinsics."""

    views: tuple

    def __post_init__(self):
        if not self.views:
            raise GeometryError("rig needs at least one view")
        intr = self.views[0].intrinsics
        if any(v.intrinsics != intr for v in self.views):
            raise GeometryError("rig views must share intrinsics")

    @property
    def intrinsics(self):
        return self.views[0].intrinsics

    def __len__(self):
        return len(self.views)


def coverage_gaps(views, step_deg=1.0):
    """Directions on a step_deg grid not inside any view frustum.

    Returns a list of (theta_deg, phi_deg) pairs; empty means full coverage.
    """
    thetas = np.deg2rad(np.arange(0.0, 180.0 + step_deg / 2, step_deg))
    phis = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    dirs = direction_from_angles(tt, pp)
    covered = np.zeros(tt.shape, dtype=bool)
    for view in views:
        covered |= view.contains_directions(dirs)
    miss = ~covered
    return list(zip(np.rad2deg(tt[miss]), np.rad2deg(pp[miss])))


def build_rig(intrinsics, yaw_count=8, pitch_rows=(-np.pi / 4, 0.0, np.pi / 4),
              include_poles=True, check_coverage=True):
    """Evenly spaced yaw rings at each pitch row, plus optional pole views."""
    if yaw_count < 1:
        raise GeometryError("yaw_count must be >= 1")
    views = []
    for pitch in pitch_rows:
        for k in range(yaw_count):
            views.append(CameraView(intrinsics, yaw=TWO_PI * k / yaw_count, pitch=float(pitch)))
    if include_poles:
        views.append(CameraView(intrinsics, yaw=0.0, pitch=np.pi / 2))
        views.append(CameraView(intrinsics, yaw=0.0, pitch=-np.pi / 2))
    if check_coverage:
        gaps = coverage_gaps(views)
        if gaps:
            raise CoverageError(gaps)
    return CameraRig(tuple(views))


def default_rig(width=512, height=512):
    """fov 90 deg, 8 yaws x pitch {-45, 0, +45} + both poles (26 views)."""
    intr = CameraIntrinsics(np.pi / 2, np.pi / 2, width, height)
    return build_rig(intr)


def _gather_bilinear(img, i_f, j_f):
    """Bilinear sample at continuous coords; j wraps, i clamps at the poles."""
    H, W = img.shape[:2]
    i_f = np.clip(i_f, 0.0, float(H - 1))
    i0 = np.floor(i_f).astype(np.int64)
    i1 = np.minimum(i0 + 1, H - 1)
    fi = i_f - i0
    j_f = np.mod(j_f, W)
    j0 = np.floor(j_f).astype(np.int64)
    j1 = np.mod(j0 + 1, W)
    fj = j_f - j0
    if img.ndim == 3:
        fi = fi[..., None]
        fj = fj[..., None]
    top = (1.0 - fj) * img[i0, j0] + fj * img[i0, j1]
    bot = (1.0 - fj) * img[i1, j0] + fj * img[i1, j1]
    return (1.0 - fi) * top + fi * bot


def _gather_nearest(img, i_f, j_f):
    H, W = img.shape[:2]
    i_n = np.clip(np.floor(i_f + 0.5).astype(np.int64), 0, H - 1)
    j_n = np.mod(np.floor(j_f + 0.5).astype(np.int64), W)
    return img[i_n, j_n]


def _gnomonic_source_coords(view, pano_dims):
    theta, phi = angles_from_direction(view.pixel_rays())
    return angles_to_pixel(theta, phi, pano_dims)


def sample_perspective(pano, view, mode="gnomonic"):
    """Sample a perspective image from an equirectangular panorama.

    gnomonic: cast the true pinhole ray per pixel and interpolate the
    panorama where it points; supervision and the rasterizer then share
    a camera model.  linear: the direct pixel mapping
    x_e = (x*fov_x + 2*yaw + 2*pi) / (4*pi) * W and
    y_e = (y*fov_y + 2*pitch + pi) / (4*pi) * H with x, y in [-1, 1],
    kept as an alternate mode even though it is not a pinhole projection.
    """
    pano = np.asarray(pano, dtype=np.float64)
    pano_dims = pano.shape[:2]
    if mode == "gnomonic":
        i_f, j_f = _gnomonic_source_coords(view, pano_dims)
    elif mode == "linear":
        i_f, j_f = linear_source_coords(view, pano_dims)
    else:
        raise GeometryError(f"unknown sampling mode {mode!r}")
    return _gather_bilinear(pano, i_f, j_f)


def linear_source_coords(view, pano_dims):
    """Literal linear mapping from normalized view coords to pano pixels."""
    H, W = pano_dims
    intr = view.intrinsics
    x = 2.0 * (np.arange(intr.width, dtype=np.float64) + 0.5) / intr.width - 1.0
    y = 2.0 * (np.arange(intr.height, dtype=np.float64) + 0.5) / intr.height - 1.0
    xx, yy = np.meshgrid(x, y)
    x_e = (xx * intr.fov_x + 2.0 * view.yaw + TWO_PI) / (2.0 * TWO_PI) * W
    y_e = (yy * intr.fov_y + 2.0 * view.pitch + np.pi) / (2.0 * TWO_PI) * H
    return y_e, x_e


def project_mask(mask, view):
    """Perspective binary mask via the gnomonic ray mapping, nearest-neighbor."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise GeometryError("mask must be 2D")
    i_f, j_f = _gnomonic_source_coords(view, mask.shape)
    out = _gather_nearest(mask, i_f, j_f)
    return (out > 0).astype(np.uint8)
