"""Differentiable CPU rasterization of 3D Gaussian splats.

Forward: first-order (EWA-style) projection of each Gaussian to a 2D
mean/covariance, depth sort, and per-pixel front-to-back alpha
compositing.  Backward: the exact adjoint of the forward arithmetic,
including the quaternion-normalization, log-scale and logit-opacity
reparameterizations, evaluated by a reverse sweep that reconstructs
per-pixel transmittance from the stored final value.

Everything is float64 and sequential in a fixed order, so renders and
gradients are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidSplatError
from .scene import PARAM_GROUPS, SplatLayer

NEAR_PLANE = 0.01
ALPHA_CLAMP = 0.999
T_EARLYOUT = 1e-4
COV_DILATION = 0.3  # px^2 added to the projected covariance diagonal
CULL_SIGMA = 3.0
J_RATIO_LIMIT = 1.3  # frustum multiple at which the projection Jacobian clamps


@dataclass
class RenderedView:
    color: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W) accumulated opacity
    depth: np.ndarray  # (H, W) expected depth under compositing weights

    def __post_init__(self):
        self._cache = None


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray  # (2,) pixel coords
    cov2d: np.ndarray  # (2, 2) px^2, before low-pass dilation
    depth: float


@dataclass
class GradientSet:
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    @staticmethod
    def zeros(n):
        return GradientSet(
            np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3)),
            np.zeros(n), np.zeros((n, 3)),
        )


def quat_to_rotmat(q):
    """(N, 4) unit quaternions (w, x, y, z) to (N, 3, 3) rotation matrices."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class _Projection:
    """Per-splat view-dependent quantities shared by forward and backward."""

    __slots__ = (
        "qhat", "qnorm", "R", "s", "A", "sigma_w", "sigma_c", "t", "depth",
        "mean2d", "J", "ratio_clamped_x", "ratio_clamped_y", "cov_raw",
        "cov", "conic", "radius", "bbox", "color", "opacity", "valid",
        "order", "M", "fx", "fy",
    )


def _project(layer: SplatLayer, view):
    intr = view.intrinsics
    n = len(layer)
    P = _Projection()
    q = layer.rotations
    P.qnorm = np.linalg.norm(q, axis=1)
    if np.any(P.qnorm == 0):
        raise InvalidSplatError("zero-norm quaternion")
    P.qhat = q / P.qnorm[:, None]
    P.R = quat_to_rotmat(P.qhat)
    P.s = np.exp(layer.log_scales)
    P.A = P.R * P.s[:, None, :]
    P.sigma_w = np.einsum("nik,njk->nij", P.A, P.A)
    P.M = view.world_to_cam()
    P.t = (layer.positions - np.asarray(view.position, dtype=np.float64)) @ P.M.T
    P.depth = P.t[:, 2].copy()
    P.fx, P.fy = intr.fx, intr.fy

    valid = P.depth > NEAR_PLANE
    tz = np.where(valid, P.t[:, 2], 1.0)  # placeholder; culled rows never used
    P.mean2d = np.stack(
        [P.fx * P.t[:, 0] / tz + intr.cx, P.fy * P.t[:, 1] / tz + intr.cy], axis=1
    )

    limx = J_RATIO_LIMIT * np.tan(0.5 * intr.fov_x)
    limy = J_RATIO_LIMIT * np.tan(0.5 * intr.fov_y)
    rx_raw = P.t[:, 0] / tz
    ry_raw = P.t[:, 1] / tz
    rx = np.clip(rx_raw, -limx, limx)
    ry = np.clip(ry_raw, -limy, limy)
    P.ratio_clamped_x = np.abs(rx_raw) > limx
    P.ratio_clamped_y = np.abs(ry_raw) > limy
    P.J = np.zeros((n, 2, 3))
    P.J[:, 0, 0] = P.fx / tz
    P.J[:, 0, 2] = -P.fx * rx / tz
    P.J[:, 1, 1] = P.fy / tz
    P.J[:, 1, 2] = -P.fy * ry / tz

    P.sigma_c = np.einsum("ab,nbc,dc->nad", P.M, P.sigma_w, P.M)
    P.cov_raw = np.einsum("nab,nbc,ndc->nad", P.J, P.sigma_c, P.J)
    P.cov = P.cov_raw.copy()
    P.cov[:, 0, 0] += COV_DILATION
    P.cov[:, 1, 1] += COV_DILATION

    a, b, c = P.cov[:, 0, 0], P.cov[:, 0, 1], P.cov[:, 1, 1]
    det = a * c - b * b
    valid &= det > 0
    det_safe = np.where(det > 0, det, 1.0)
    P.conic = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=1)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    P.radius = np.ceil(CULL_SIGMA * np.sqrt(np.maximum(lam_max, 0.0)))

    valid &= np.isfinite(P.mean2d).all(axis=1) & np.isfinite(P.radius)
    mx = np.where(valid, P.mean2d[:, 0], 0.0)
    my = np.where(valid, P.mean2d[:, 1], 0.0)
    rad = np.where(valid, P.radius, 0.0)
    x0 = np.maximum(np.floor(mx - rad), 0).astype(np.int64)
    x1 = np.minimum(np.ceil(mx + rad), intr.width - 1).astype(np.int64)
    y0 = np.maximum(np.floor(my - rad), 0).astype(np.int64)
    y1 = np.minimum(np.ceil(my + rad), intr.height - 1).astype(np.int64)
    valid &= (x0 <= x1) & (y0 <= y1)
    P.bbox = np.stack([x0, x1, y0, y1], axis=1)
    P.valid = valid
    P.color = np.clip(layer.colors, 0.0, 1.0)
    P.opacity = _sigmoid(layer.opacity_logits)
    # ascending view depth, stable tie-break on the original splat index
    idx = np.nonzero(valid)[0]
    P.order = idx[np.lexsort((idx, P.depth[idx]))]
    return P


def project_gaussian(layer: SplatLayer, index, view):
    """Project one splat; None when culled (behind the near plane or its
    3-sigma ellipse misses the image).  The returned covariance is the raw
    projection, before the rasterizer's low-pass dilation."""
    P = _project(layer, view)
    if not P.valid[index]:
        return None
    return ProjectedGaussian(P.mean2d[index].copy(), P.cov_raw[index].copy(),
                             float(P.depth[index]))


@njit(cache=True)
def _forward_kernel(order, means, conics, colors, opacities, depths, bboxes, H, W):
    C = np.zeros((H, W, 3))
    T = np.ones((H, W))
    depth_acc = np.zeros((H, W))
    sentinel = len(order) + 1
    thresh = np.full((H, W), sentinel, dtype=np.int64)
    for s_pos in range(len(order)):
        s = order[s_pos]
        x0, x1, y0, y1 = bboxes[s, 0], bboxes[s, 1], bboxes[s, 2], bboxes[s, 3]
        a, b, c = conics[s, 0], conics[s, 1], conics[s, 2]
        for py in range(y0, y1 + 1):
            dy = py + 0.5 - means[s, 1]
            for px in range(x0, x1 + 1):
                if s_pos >= thresh[py, px]:
                    continue
                dx = px + 0.5 - means[s, 0]
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                if power > 0.0:
                    continue
                alpha = opacities[s] * np.exp(power)
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                t = T[py, px]
                w = alpha * t
                C[py, px, 0] += colors[s, 0] * w
                C[py, px, 1] += colors[s, 1] * w
                C[py, px, 2] += colors[s, 2] * w
                depth_acc[py, px] += depths[s] * w
                t_new = t * (1.0 - alpha)
                T[py, px] = t_new
                if t_new < T_EARLYOUT:
                    thresh[py, px] = s_pos + 1
    return C, T, depth_acc, thresh


@njit(cache=True)
def _backward_kernel(order, means, conics, colors, opacities, bboxes,
                     T_final, thresh, suffix, grad_img):
    n = means.shape[0]
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))  # full-matrix grads: (q00, q01+q10, q11)
    g_opacity = np.zeros(n)
    g_color = np.zeros((n, 3))
    T_after = T_final.copy()
    for s_pos in range(len(order) - 1, -1, -1):
        s = order[s_pos]
        x0, x1, y0, y1 = bboxes[s, 0], bboxes[s, 1], bboxes[s, 2], bboxes[s, 3]
        a, b, c = conics[s, 0], conics[s, 1], conics[s, 2]
        for py in range(y0, y1 + 1):
            dy = py + 0.5 - means[s, 1]
            for px in range(x0, x1 + 1):
                if s_pos >= thresh[py, px]:
                    continue
                dx = px + 0.5 - means[s, 0]
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                if power > 0.0:
                    continue
                expp = np.exp(power)
                alpha_raw = opacities[s] * expp
                alpha = alpha_raw
                if alpha > ALPHA_CLAMP:
                    alpha = ALPHA_CLAMP
                one_m = 1.0 - alpha
                t_i = T_after[py, px] / one_m
                w = alpha * t_i
                g0 = grad_img[py, px, 0]
                g1 = grad_img[py, px, 1]
                g2 = grad_img[py, px, 2]
                g_color[s, 0] += g0 * w
                g_color[s, 1] += g1 * w
                g_color[s, 2] += g2 * w
                dLda = (
                    g0 * (colors[s, 0] * t_i - suffix[py, px, 0] / one_m)
                    + g1 * (colors[s, 1] * t_i - suffix[py, px, 1] / one_m)
                    + g2 * (colors[s, 2] * t_i - suffix[py, px, 2] / one_m)
                )
                suffix[py, px, 0] += colors[s, 0] * w
                suffix[py, px, 1] += colors[s, 1] * w
                suffix[py, px, 2] += colors[s, 2] * w
                T_after[py, px] = t_i
                if alpha_raw > ALPHA_CLAMP:
                    continue  # clamped: d alpha / d params = 0
                g_opacity[s] += dLda * expp
                dLdp = dLda * alpha
                g_mean[s, 0] += dLdp * (a * dx + b * dy)
                g_mean[s, 1] += dLdp * (b * dx + c * dy)
                g_conic[s, 0] += dLdp * (-0.5 * dx * dx)
                g_conic[s, 1] += dLdp * (-dx * dy)
                g_conic[s, 2] += dLdp * (-0.5 * dy * dy)
    return g_mean, g_conic, g_opacity, g_color


def rasterize(layer: SplatLayer, view, background=(0.0, 0.0, 0.0)):
    """Render splats into the view; front-to-back compositing with early
    termination, remaining transmittance filled with the background."""
    layer.check_finite()
    intr = view.intrinsics
    H, W = intr.height, intr.width
    bg = np.asarray(background, dtype=np.float64)
    if len(layer) == 0:
        out = RenderedView(np.tile(bg, (H, W, 1)), np.zeros((H, W)), np.zeros((H, W)))
        out._cache = None
        return out
    P = _project(layer, view)
    C, T, depth_acc, thresh = _forward_kernel(
        P.order, P.mean2d, P.conic, P.color, P.opacity, P.depth, P.bbox, H, W
    )
    alpha = 1.0 - T
    color = C + bg[None, None, :] * T[:, :, None]
    depth = np.zeros_like(depth_acc)
    np.divide(depth_acc, alpha, out=depth, where=alpha > 0)
    out = RenderedView(color, alpha, depth)
    out._cache = (P, T, thresh, bg)
    return out


def rasterize_backward(layer: SplatLayer, view, grad_color, rendered=None):
    """Gradients of a scalar loss w.r.t. every splat parameter, given the
    per-pixel loss gradient of the rendered color image.  Culled splats
    receive zeros."""
    n = len(layer)
    if n == 0:
        return GradientSet.zeros(0)
    cache = rendered._cache if rendered is not None else None
    if cache is None:
        rendered = rasterize(layer, view)
        cache = rendered._cache
    P, T, thresh, bg = cache
    grad_color = np.ascontiguousarray(grad_color, dtype=np.float64)
    suffix = bg[None, None, :] * T[:, :, None]
    g_mean, g_conic, g_opacity, g_color = _backward_kernel(
        P.order, P.mean2d, P.conic, P.color, P.opacity, P.bbox,
        T, thresh, suffix, grad_color,
    )

    grads = GradientSet.zeros(n)
    live = P.order
    if live.size == 0:
        return grads

    # conic -> 2D covariance: Q = cov^-1, dL/dcov = -Q G_Q Q
    G_Q = np.zeros((n, 2, 2))
    G_Q[:, 0, 0] = g_conic[:, 0]
    G_Q[:, 0, 1] = G_Q[:, 1, 0] = 0.5 * g_conic[:, 1]
    G_Q[:, 1, 1] = g_conic[:, 2]
    Q = np.zeros((n, 2, 2))
    Q[:, 0, 0] = P.conic[:, 0]
    Q[:, 0, 1] = Q[:, 1, 0] = P.conic[:, 1]
    Q[:, 1, 1] = P.conic[:, 2]
    G_cov = -np.einsum("nab,nbc,ncd->nad", Q, G_Q, Q)

    # cov = J sigma_c J^T (+ dilation): dL/dsigma_c = J^T G J, dL/dJ = 2 G J sigma_c
    G_sigc = np.einsum("nba,nbc,ncd->nad", P.J, G_cov, P.J)
    G_J = 2.0 * np.einsum("nab,nbc,ncd->nad", G_cov, P.J, P.sigma_c)

    tz = P.t[:, 2].copy()
    tz[~P.valid] = 1.0
    fx, fy = P.fx, P.fy
    inv_tz = 1.0 / tz
    inv_tz2 = inv_tz * inv_tz
    rx = -P.J[:, 0, 2] * tz / fx  # recover the clamped ratios
    ry = -P.J[:, 1, 2] * tz / fy
    free_x = (~P.ratio_clamped_x).astype(np.float64)
    free_y = (~P.ratio_clamped_y).astype(np.float64)

    g_t = np.zeros((n, 3))
    # through the 2D mean (unclamped pinhole projection)
    g_t[:, 0] += g_mean[:, 0] * fx * inv_tz
    g_t[:, 1] += g_mean[:, 1] * fy * inv_tz
    g_t[:, 2] += -(g_mean[:, 0] * fx * P.t[:, 0] + g_mean[:, 1] * fy * P.t[:, 1]) * inv_tz2
    # through the Jacobian entries
    gJ00, gJ02 = G_J[:, 0, 0], G_J[:, 0, 2]
    gJ11, gJ12 = G_J[:, 1, 1], G_J[:, 1, 2]
    g_t[:, 2] += -gJ00 * fx * inv_tz2 - gJ11 * fy * inv_tz2
    g_t[:, 2] += gJ02 * fx * rx * inv_tz2 + gJ12 * fy * ry * inv_tz2
    # clamped ratios stop the gradient through rx, ry
    g_t[:, 0] += gJ02 * (-fx * inv_tz2) * free_x
    g_t[:, 2] += gJ02 * (fx * P.t[:, 0] * inv_tz * inv_tz2) * free_x
    g_t[:, 1] += gJ12 * (-fy * inv_tz2) * free_y
    g_t[:, 2] += gJ12 * (fy * P.t[:, 1] * inv_tz * inv_tz2) * free_y

    grads.positions[:] = g_t @ P.M

    # sigma_c = M sigma_w M^T ; sigma_w = A A^T ; A = R diag(s)
    G_sigw = np.einsum("ba,nbc,cd->nad", P.M, G_sigc, P.M)
    G_A = 2.0 * np.einsum("nab,nbc->nac", G_sigw, P.A)
    g_s = np.einsum("nik,nik->nk", G_A, P.R)
    grads.log_scales[:] = g_s * P.s
    G_R = G_A * P.s[:, None, :]

    w, x, y, z = P.qhat[:, 0], P.qhat[:, 1], P.qhat[:, 2], P.qhat[:, 3]
    r = G_R
    gw = 2 * (-z * r[:, 0, 1] + y * r[:, 0, 2] + z * r[:, 1, 0] - x * r[:, 1, 2]
              - y * r[:, 2, 0] + x * r[:, 2, 1])
    gx = 2 * (y * r[:, 0, 1] + z * r[:, 0, 2] + y * r[:, 1, 0] - 2 * x * r[:, 1, 1]
              - w * r[:, 1, 2] + z * r[:, 2, 0] + w * r[:, 2, 1] - 2 * x * r[:, 2, 2])
    gy = 2 * (-2 * y * r[:, 0, 0] + x * r[:, 0, 1] + w * r[:, 0, 2] + x * r[:, 1, 0]
              + z * r[:, 1, 2] - w * r[:, 2, 0] + z * r[:, 2, 1] - 2 * y * r[:, 2, 2])
    gz = 2 * (-2 * z * r[:, 0, 0] - w * r[:, 0, 1] + x * r[:, 0, 2] + w * r[:, 1, 0]
              - 2 * z * r[:, 1, 1] + y * r[:, 1, 2] + x * r[:, 2, 0] + y * r[:, 2, 1])
    g_qhat = np.stack([gw, gx, gy, gz], axis=1)
    proj = np.einsum("ni,ni->n", P.qhat, g_qhat)
    grads.rotations[:] = (g_qhat - P.qhat * proj[:, None]) / P.qnorm[:, None]

    o = P.opacity
    grads.opacity_logits[:] = g_opacity * o * (1.0 - o)
    inside = (layer.colors > 0.0) & (layer.colors < 1.0)
    grads.colors[:] = g_color * inside

    dead = ~P.valid
    for g in PARAM_GROUPS:
        getattr(grads, g)[dead] = 0.0
    return grads


def render_scene(scene, view, layer_filter=None, background=(0.0, 0.0, 0.0)):
    """Rasterize the union of the selected layers, globally depth-sorted."""
    if layer_filter is None:
        layer_filter = sorted(scene.layers)
    layer_filter = list(layer_filter)
    if not layer_filter:
        raise ValueError("layer filter must select at least one layer")
    merged, _ = scene.gather(layer_filter)
    return rasterize(merged, view, background)
