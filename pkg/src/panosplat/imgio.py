"""Image and depth-map file IO.

Color images move as 8-bit PNG/JPEG, segment maps as 16-bit indexed PNG,
depth as 32-bit float PFM (meters, 0 = missing) or 16-bit PNG with a JSON
sidecar {"scale_m_per_unit": s}.  In memory everything is float64; color
in [0, 1].
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestError


def atomic_write(path, data: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_uint8(img):
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(img):
    return np.asarray(img, dtype=np.float64) / 255.0


def save_png(path, img):
    """img: float (H, W, 3) or (H, W) in [0, 1], or uint8."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    import io

    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


def load_image(path):
    """Any PIL-readable RGB(A) image as float64 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def save_segments_png(path, label_image):
    arr = np.asarray(label_image)
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise IngestError(f"{path}: instance ids must fit in uint16")
    import io

    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint16)).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


def load_segments_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise IngestError(f"{path}: segment map must be single-channel")
    return arr.astype(np.int32)


def save_pfm(path, data):
    """Single-channel float32 PFM, little-endian, rows stored bottom-up."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise IngestError("PFM writer expects a 2D array")
    header = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    atomic_write(path, header + np.flipud(arr).tobytes())


def load_pfm(path):
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise IngestError(f"{path}: not a grayscale PFM file")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(count * 4), dtype=dtype, count=count)
    if data.size != count:
        raise IngestError(f"{path}: truncated PFM payload")
    return np.flipud(data.reshape(h, w)).astype(np.float64)


def load_depth(path):
    """PFM, or 16-bit PNG + JSON sidecar {"scale_m_per_unit": s}."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return load_pfm(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise IngestError(f"{path}: 16-bit PNG depth needs a JSON sidecar with scale_m_per_unit")
    with open(sidecar) as f:
        meta = json.load(f)
    scale = float(meta["scale_m_per_unit"])
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise IngestError(f"{path}: depth PNG must be single-channel")
    return arr.astype(np.float64) * scale
