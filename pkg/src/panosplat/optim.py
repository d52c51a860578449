"""Layered scene optimization.

Layers train back-to-front (sky, background, foreground, then dynamic
when kept).  While layer l trains, layers k >= l are rendered together so
the loss sees the composite against deeper, already-trained content, but
parameter updates are applied to layer l alone; every other layer's
buffers are bitwise untouched.

The loss is (1 - lambda) * masked L1 + lambda * D-SSIM with lambda 0.2,
D-SSIM = (1 - SSIM) / 2.  SSIM uses the standard 11x11 Gaussian window
(sigma 1.5, C1 = 0.01^2, C2 = 0.03^2) over valid windows; masked inputs
are zeroed outside the mask, which also zeroes the loss gradient there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from . import geometry
from .errors import DivergenceError
from .rasterizer import rasterize, rasterize_backward
from .scene import PARAM_GROUPS, SplatLayer

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

DEFAULT_ITERATIONS = {3: 3000, 2: 4000, 1: 3000, 0: 3000}
DEFAULT_LEARNING_RATES = {
    "positions": 1.6e-4,
    "rotations": 1e-3,
    "log_scales": 5e-3,
    "opacity_logits": 5e-2,
    "colors": 2.5e-3,
}


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - size // 2
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


_WINDOW = _gaussian_window()
_PAD = SSIM_WINDOW // 2


def _valid_conv(img):
    out = convolve1d(img, _WINDOW, axis=0, mode="constant")
    out = convolve1d(out, _WINDOW, axis=1, mode="constant")
    return out[_PAD:-_PAD, _PAD:-_PAD]


def _valid_conv_adjoint(g, shape):
    full = np.zeros(shape)
    full[_PAD:-_PAD, _PAD:-_PAD] = g
    out = convolve1d(full, _WINDOW, axis=0, mode="constant")
    return convolve1d(out, _WINDOW, axis=1, mode="constant")


def ssim(a, b, grad=False):
    """Mean SSIM over valid windows; channels averaged.  With grad=True,
    also returns dSSIM/da."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("ssim inputs must share a shape")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"ssim needs images at least {SSIM_WINDOW} px per side")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    mu1, mu2 = _valid_conv(a), _valid_conv(b)
    m11, m22, m12 = _valid_conv(a * a), _valid_conv(b * b), _valid_conv(a * b)
    s1 = m11 - mu1**2
    s2 = m22 - mu2**2
    s12 = m12 - mu1 * mu2
    A1 = 2 * mu1 * mu2 + SSIM_C1
    A2 = 2 * s12 + SSIM_C2
    B1 = mu1**2 + mu2**2 + SSIM_C1
    B2 = s1 + s2 + SSIM_C2
    smap = (A1 * A2) / (B1 * B2)
    value = float(smap.mean())
    if not grad:
        return value
    g = 1.0 / smap.size
    ds_dA1 = A2 / (B1 * B2)
    ds_dA2 = A1 / (B1 * B2)
    ds_dB1 = -smap / B1
    ds_dB2 = -smap / B2
    g_mu1 = g * (ds_dA1 * 2 * mu2 + ds_dB1 * 2 * mu1
                 + ds_dB2 * (-2 * mu1) + ds_dA2 * 2 * (-mu2))
    g_m11 = g * ds_dB2
    g_m12 = g * ds_dA2 * 2
    da = (_valid_conv_adjoint(g_mu1, a.shape)
          + 2 * a * _valid_conv_adjoint(g_m11, a.shape)
          + b * _valid_conv_adjoint(g_m12, a.shape))
    return value, da


def d_ssim(a, b):
    return (1.0 - ssim(a, b)) / 2.0


@dataclass
class LossResult:
    loss: float
    grad: np.ndarray  # dL / d render, (H, W, 3)
    l1: float
    dssim: float


def combine_loss(l1, ssim_value, lam=0.2):
    """(1 - lambda) * L1 + lambda * (1 - SSIM) / 2."""
    return (1.0 - lam) * l1 + lam * (1.0 - ssim_value) / 2.0


def compute_loss(render_color, gt, mask, lam=0.2):
    """Masked weighted L1 + D-SSIM; None when the mask is empty (view
    skipped, not an error)."""
    mask = np.asarray(mask, dtype=np.float64)
    n_masked = mask.sum()
    if n_masked == 0:
        return None
    m3 = mask[..., None]
    a = np.asarray(render_color, dtype=np.float64) * m3
    b = np.asarray(gt, dtype=np.float64) * m3
    diff = a - b
    denom = n_masked * a.shape[-1]
    l1 = float(np.abs(diff).sum() / denom)
    g_l1 = np.sign(diff) / denom
    ssim_val, ds_da = ssim(a, b, grad=True)
    dssim = (1.0 - ssim_val) / 2.0
    loss = combine_loss(l1, ssim_val, lam)
    grad = ((1.0 - lam) * g_l1 + lam * (-0.5) * ds_da) * m3
    return LossResult(loss, grad, l1, dssim)


@dataclass
class TrainConfig:
    lam: float = 0.2
    iterations: dict = field(default_factory=lambda: dict(DEFAULT_ITERATIONS))
    learning_rates: dict = field(default_factory=lambda: dict(DEFAULT_LEARNING_RATES))
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if any(lr <= 0 for lr in self.learning_rates.values()):
            raise ValueError("learning rates must be positive")
        self.iterations = {int(k): int(v) for k, v in self.iterations.items()}


@dataclass
class LayerSupervision:
    """Per rig view: perspective ground truth of the layer's recovered
    panorama plus the projected visibility mask (union of this layer and
    everything behind it)."""

    layer: int
    gt: list
    masks: list


def build_supervision(stack, rig, layer):
    visibility = np.zeros_like(stack.masks[0])
    for k in range(layer, 4):
        visibility |= stack.masks[k].astype(visibility.dtype)
    gt, masks = [], []
    for view in rig.views:
        gt.append(geometry.sample_perspective(stack.rgb[layer], view))
        masks.append(geometry.project_mask(visibility, view).astype(np.float64))
    return LayerSupervision(layer, gt, masks)


class Adam:
    """Per-group first-order adaptive updates (bias-corrected)."""

    def __init__(self, layer: SplatLayer, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = {g: np.zeros_like(getattr(layer, g)) for g in PARAM_GROUPS}
        self.v = {g: np.zeros_like(getattr(layer, g)) for g in PARAM_GROUPS}

    def step(self, layer: SplatLayer, grads):
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for g in PARAM_GROUPS:
            grad = getattr(grads, g)
            self.m[g] = c.beta1 * self.m[g] + (1 - c.beta1) * grad
            self.v[g] = c.beta2 * self.v[g] + (1 - c.beta2) * grad**2
            m_hat = self.m[g] / bc1
            v_hat = self.v[g] / bc2
            getattr(layer, g)[:] -= c.learning_rates[g] * m_hat / (np.sqrt(v_hat) + c.eps)


def training_view_indices(rig, parity=0):
    """Views used for optimization; the complementary parity is held out
    for evaluation."""
    return [i for i in range(len(rig.views)) if i % 2 == parity]


def train_layer(scene, layer, supervision: LayerSupervision, rig, config: TrainConfig,
                iterations=None, log_fn=None, checkpoint_fn=None, background=(0, 0, 0)):
    """Optimize one layer in place; all other layers stay bitwise intact."""
    if iterations is None:
        iterations = config.iterations.get(layer, 0)
    target = scene.layers[layer]
    render_layers = sorted(k for k in scene.layers if k >= layer)
    view_ids = [i for i in training_view_indices(rig)
                if supervision.masks[i].sum() > 0]
    if not view_ids or iterations == 0 or len(target) == 0:
        return scene
    optimizer = Adam(target, config)
    start = config.seed % len(view_ids)
    merged, ids = scene.gather(render_layers)
    own = ids == layer
    for it in range(iterations):
        vid = view_ids[(start + it) % len(view_ids)]
        view = rig.views[vid]
        for g in PARAM_GROUPS:  # refresh the trained rows in the merged copy
            getattr(merged, g)[own] = getattr(target, g)
        rendered = rasterize(merged, view, background)
        result = compute_loss(rendered.color, supervision.gt[vid],
                              supervision.masks[vid], config.lam)
        if result is None:
            continue
        if not np.isfinite(result.loss):
            raise DivergenceError(it, layer)
        grads = rasterize_backward(merged, view, result.grad, rendered)
        masked = _slice_gradients(grads, own)
        optimizer.step(target, masked)
        target.normalize_rotations()
        if log_fn is not None:
            log_fn({"iter": it, "layer": int(layer), "view": vid,
                    "loss": result.loss, "l1": result.l1, "dssim": result.dssim})
        if checkpoint_fn is not None and config.checkpoint_every > 0 \
                and (it + 1) % config.checkpoint_every == 0:
            checkpoint_fn(scene, layer, it)
    return scene


def _slice_gradients(grads, keep):
    from .rasterizer import GradientSet

    out = GradientSet.zeros(int(keep.sum()))
    for g in PARAM_GROUPS:
        getattr(out, g)[:] = getattr(grads, g)[keep]
    return out


def train_scene(scene, stack, rig, config: TrainConfig, log_fn=None, checkpoint_fn=None):
    """Back-to-front layer schedule: sky, background, foreground, dynamic."""
    order = [l for l in (3, 2, 1, 0) if l in scene.layers]
    for layer in order:
        supervision = build_supervision(stack, rig, layer)
        train_layer(scene, layer, supervision, rig, config,
                    log_fn=log_fn, checkpoint_fn=checkpoint_fn)
    return scene, order
