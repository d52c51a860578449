"""Evaluation metrics: PSNR, SSIM re-export, and hole counting."""

from __future__ import annotations

import numpy as np

from .optim import ssim  # noqa: F401  (one SSIM for loss and eval)

PSNR_CAP = 99.0  # dB; reported for identical images instead of +inf


def psnr(a, b, mask=None):
    """Peak signal-to-noise ratio on [0, 1] images, optionally restricted
    to a binary mask; identical inputs report the 99 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.sum() == 0:
            return PSNR_CAP
        a = a[m]
        b = b[m]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def count_holes(rendered, alpha_threshold=0.5):
    """Fraction of pixels whose accumulated alpha falls below threshold."""
    alpha = rendered.alpha if hasattr(rendered, "alpha") else np.asarray(rendered)
    return float(np.mean(alpha < alpha_threshold))
