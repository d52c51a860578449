"""Scene bundle serialization.

A bundle is a directory: manifest.json plus one binary file per layer.
Records are little-endian float32, 14 values per splat, field order fixed:

    pos.x pos.y pos.z  quat.w quat.x quat.y quat.z
    scale.x scale.y scale.z (linear, meters)  opacity (linear)  r g b

The manifest carries per-file sha256 checksums, verified on load; any
mismatch, truncation or version skew is a BundleError.  Scale and opacity
are stored linearly and converted back to the engine's log/logit domains
on load.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import BundleError
from .imgio import atomic_write
from .scene import SplatLayer, SplatScene

BUNDLE_VERSION = 1
FLOATS_PER_SPLAT = 14
OPACITY_CLAMP = 1e-7  # keeps the logit finite after the float32 round trip


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def layer_records(layer: SplatLayer):
    """(N, 14) float32 records in wire order."""
    scale = np.exp(layer.log_scales)
    opacity = np.clip(_sigmoid(layer.opacity_logits), OPACITY_CLAMP, 1.0 - OPACITY_CLAMP)
    rec = np.concatenate(
        [layer.positions, layer.rotations, scale, opacity[:, None], layer.colors], axis=1
    )
    return np.ascontiguousarray(rec, dtype="<f4")


def records_to_layer(rec):
    rec = np.asarray(rec, dtype=np.float64)
    opacity = np.clip(rec[:, 10], OPACITY_CLAMP, 1.0 - OPACITY_CLAMP)
    return SplatLayer(
        positions=rec[:, 0:3],
        rotations=rec[:, 3:7],
        log_scales=np.log(rec[:, 7:10]),
        opacity_logits=np.log(opacity / (1.0 - opacity)),
        colors=rec[:, 11:14],
    )


def export_bundle(scene: SplatScene, path):
    """Write the bundle; returns the manifest dict."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layers = []
    for index in sorted(scene.layers):
        layer = scene.layers[index]
        payload = layer_records(layer).tobytes()
        fname = f"layer_{index}.bin"
        atomic_write(path / fname, payload)
        layers.append({
            "index": int(index),
            "count": len(layer),
            "file": fname,
            "sha256": hashlib.sha256(payload).hexdigest(),
        })
    manifest = {
        "version": BUNDLE_VERSION,
        "units": "meters",
        "pano_width": int(scene.metadata.get("pano_width", 0)),
        "pano_height": int(scene.metadata.get("pano_height", 0)),
        "mean_depth": scene.mean_depth(),
        "layers": layers,
    }
    atomic_write(path / "manifest.json",
                 json.dumps(manifest, indent=2, sort_keys=True).encode())
    return manifest


def load_manifest(path):
    path = Path(path)
    try:
        with open(path / "manifest.json") as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise BundleError(f"no manifest.json under {path}") from e
    if manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(
            f"bundle version {manifest.get('version')} != supported {BUNDLE_VERSION}"
        )
    return manifest


def load_bundle(path):
    """Verify checksums and rebuild the SplatScene."""
    path = Path(path)
    manifest = load_manifest(path)
    layers = {}
    for entry in manifest["layers"]:
        payload = (path / entry["file"]).read_bytes()
        digest = hashlib.sha256(payload).hexdigest()
        if digest != entry["sha256"]:
            raise BundleError(f"checksum mismatch for {entry['file']}")
        expected = entry["count"] * FLOATS_PER_SPLAT * 4
        if len(payload) != expected:
            raise BundleError(
                f"{entry['file']}: {len(payload)} bytes, expected {expected}"
            )
        rec = np.frombuffer(payload, dtype="<f4").reshape(entry["count"], FLOATS_PER_SPLAT)
        layers[int(entry["index"])] = records_to_layer(rec)
    metadata = {
        "pano_width": manifest.get("pano_width", 0),
        "pano_height": manifest.get("pano_height", 0),
        "mean_depth": manifest.get("mean_depth", 0.0),
    }
    return SplatScene(layers, metadata)


def bundle_checksums(path):
    """{layer file name: sha256} as recorded in the manifest."""
    manifest = load_manifest(Path(path))
    return {e["file"]: e["sha256"] for e in manifest["layers"]}
