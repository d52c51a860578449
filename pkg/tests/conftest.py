import numpy as np
import pytest

from panosplat import geometry


def smooth_pano(height=256, rng=None, amplitude=0.25):
    """Low-frequency RGB panorama; gentle enough for bilinear comparisons."""
    width = 2 * height
    i = np.arange(height, dtype=np.float64)[:, None]
    j = np.arange(width, dtype=np.float64)[None, :]
    theta = np.pi * i / height
    phi = 2 * np.pi * j / width
    r = 0.5 + amplitude * np.sin(theta) * np.cos(phi)
    g = 0.5 + amplitude * np.cos(theta)
    b = 0.5 + amplitude * np.sin(theta) * np.sin(phi)
    pano = np.stack([r * np.ones_like(phi), g * np.ones_like(phi), b], axis=-1)
    if rng is not None:
        pano = np.clip(pano + rng.normal(0.0, 0.002, pano.shape), 0.0, 1.0)
    return pano


def direction_color(dirs, amplitude=0.25):
    """The same smooth colors as :func:`smooth_pano`, evaluated on directions."""
    d = np.asarray(dirs, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 2], d[..., 0])
    r = 0.5 + amplitude * np.sin(theta) * np.cos(-phi + np.pi)
    g = 0.5 + amplitude * np.cos(theta)
    b = 0.5 + amplitude * np.sin(theta) * np.sin(-phi + np.pi)
    return np.stack([r, g, b], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_rig():
    return geometry.default_rig(width=64, height=64)
