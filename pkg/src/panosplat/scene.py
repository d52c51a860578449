"""In-memory splat scene containers.

A layer's splats are stored struct-of-arrays in float64: position,
unit quaternion (w, x, y, z), log-domain scale, logit-domain opacity,
and unconstrained RGB clamped at render time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSplatError

PARAM_GROUPS = ("positions", "rotations", "log_scales", "opacity_logits", "colors")


@dataclass
class SplatLayer:
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        n = len(self.positions)
        shapes = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "log_scales": (n, 3),
            "opacity_logits": (n,),
            "colors": (n, 3),
        }
        for name, shape in shapes.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)

    def __len__(self):
        return len(self.positions)

    def copy(self):
        return SplatLayer(*(getattr(self, g).copy() for g in PARAM_GROUPS))

    def check_finite(self):
        for g in PARAM_GROUPS:
            if not np.isfinite(getattr(self, g)).all():
                raise InvalidSplatError(f"non-finite values in {g}")
        return self

    def normalize_rotations(self):
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InvalidSplatError("zero-norm quaternion")
        self.rotations /= norms
        return self

    @staticmethod
    def empty():
        return SplatLayer(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3))
        )

    @staticmethod
    def concatenate(layers):
        if not layers:
            return SplatLayer.empty()
        return SplatLayer(
            *(np.concatenate([getattr(l, g) for l in layers]) for g in PARAM_GROUPS)
        )


@dataclass
class SplatScene:
    layers: dict
    metadata: dict = field(default_factory=dict)

    def total_splats(self):
        return sum(len(l) for l in self.layers.values())

    def copy(self):
        return SplatScene({k: v.copy() for k, v in self.layers.items()}, dict(self.metadata))

    def gather(self, layer_filter):
        """Concatenated splats of the selected layers (ascending layer index),
        plus each splat's source layer id."""
        keys = sorted(k for k in self.layers if k in set(layer_filter))
        if not keys:
            raise ValueError("layer filter selects no layers")
        parts = [self.layers[k] for k in keys]
        ids = np.concatenate(
            [np.full(len(self.layers[k]), k, dtype=np.int32) for k in keys]
        ) if parts else np.zeros(0, np.int32)
        return SplatLayer.concatenate(parts), ids

    def mean_depth(self):
        """Mean distance of all splats from the scene origin."""
        total, count = 0.0, 0
        for l in self.layers.values():
            if len(l):
                total += float(np.linalg.norm(l.positions, axis=1).sum())
                count += len(l)
        return total / count if count else 0.0
