"""Assign segmentation instances to the four near-to-far scene layers.

The hierarchy is fixed: dynamic objects (0), foreground (1), background
(2), sky (3).  Assignment is driven either by an ordered rules file
(first match wins) or by an external adapter process speaking
newline-delimited JSON on stdin/stdout.
"""

from __future__ import annotations

import fnmatch
import json
import selectors
import subprocess
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources

import numpy as np

from .errors import AdapterProtocolError, UnclassifiedLabelError


class LayerIndex(IntEnum):
    DYNAMIC = 0
    FOREGROUND = 1
    BACKGROUND = 2
    SKY = 3


LAYER_NAMES = {l.name.lower(): l for l in LayerIndex}


def parse_layer(value):
    """Accept an int 0..3 or a (case-insensitive) layer name."""
    if isinstance(value, LayerIndex):
        return value
    if isinstance(value, bool):
        raise ValueError("layer must be an int or name")
    if isinstance(value, int):
        return LayerIndex(value)
    if isinstance(value, str) and value.lower() in LAYER_NAMES:
        return LAYER_NAMES[value.lower()]
    raise ValueError(f"not a layer: {value!r}")


@dataclass(frozen=True)
class SegmentMap:
    """Per-pixel instance ids plus an id -> semantic label table."""

    label_image: np.ndarray
    labels: dict

    def __post_init__(self):
        present = set(np.unique(self.label_image).tolist())
        missing = present - set(self.labels)
        if missing:
            raise ValueError(f"instance ids without labels: {sorted(missing)}")

    @property
    def ids(self):
        return sorted(np.unique(self.label_image).tolist())


@dataclass(frozen=True)
class LayerRules:
    """Ordered (pattern, layer) pairs; patterns are case-insensitive
    substrings, or globs when they contain *, ? or [."""

    rules: tuple
    default: LayerIndex | None = None

    def match(self, label):
        low = label.lower()
        for pattern, layer in self.rules:
            p = pattern.lower()
            if any(ch in p for ch in "*?["):
                if fnmatch.fnmatchcase(low, p):
                    return layer
            elif p in low:
                return layer
        return self.default


def load_rules(path, default=None):
    """Rules JSON: either a bare ordered array of {pattern, layer} or
    {"rules": [...], "default": <layer>}."""
    with open(path) as f:
        doc = json.load(f)
    if isinstance(doc, dict):
        entries = doc["rules"]
        if default is None and doc.get("default") is not None:
            default = parse_layer(doc["default"])
    else:
        entries = doc
    rules = tuple((e["pattern"], parse_layer(e["layer"])) for e in entries)
    return LayerRules(rules, default=default)


def default_rules(default=None):
    """The bundled open-vocabulary rules file."""
    with resources.files("panosplat.data").joinpath("default_rules.json").open() as f:
        doc = json.load(f)
    rules = tuple((e["pattern"], parse_layer(e["layer"])) for e in doc)
    return LayerRules(rules, default=default)


def classify_segments(seg: SegmentMap, rules: LayerRules):
    """Map every instance id to a LayerIndex; first matching rule wins."""
    assignment = {}
    unmatched = []
    for sid in seg.ids:
        layer = rules.match(seg.labels[sid])
        if layer is None:
            unmatched.append(seg.labels[sid])
        else:
            assignment[sid] = layer
    if unmatched:
        raise UnclassifiedLabelError(unmatched)
    return assignment


def build_layer_masks(seg: SegmentMap, assignment):
    """Four binary masks partitioning the pixel grid."""
    missing = set(seg.ids) - set(assignment)
    if missing:
        raise ValueError(f"assignment does not cover ids {sorted(missing)}")
    layer_of = np.zeros(max(seg.ids) + 1, dtype=np.int8)
    for sid, layer in assignment.items():
        layer_of[sid] = int(layer)
    layer_image = layer_of[seg.label_image]
    return [(layer_image == l).astype(np.uint8) for l in range(4)]


class AdapterClient:
    """Owns one external classifier process; one in-flight request at a time.

    Protocol: one JSON object per line on stdin, one per line back on
    stdout.  Request {"labels": {"1": "tree", ...}, "image_path": "..."},
    response {"assignments": {"1": 1, ...}}.
    """

    def __init__(self, command, timeout=60.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc = None

    def _ensure_started(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
            )

    def request(self, payload):
        self._ensure_started()
        proc = self._proc
        try:
            proc.stdin.write(json.dumps(payload) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise AdapterProtocolError(f"adapter process not accepting input: {e}") from e
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        if not sel.select(timeout=self.timeout):
            proc.kill()
            raise AdapterProtocolError(f"adapter timed out after {self.timeout}s")
        line = proc.stdout.readline()
        if not line:
            raise AdapterProtocolError("adapter closed its stdout")
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise AdapterProtocolError(f"malformed adapter response: {e}") from e

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def request_adapter_assignment(seg: SegmentMap, image_path, adapter: AdapterClient):
    """Same contract as classify_segments, answered by the adapter."""
    payload = {
        "labels": {str(sid): seg.labels[sid] for sid in seg.ids},
        "image_path": str(image_path),
    }
    response = adapter.request(payload)
    raw = response.get("assignments")
    if not isinstance(raw, dict):
        raise AdapterProtocolError("response lacks an 'assignments' object")
    assignment = {}
    for sid in seg.ids:
        if str(sid) not in raw:
            raise AdapterProtocolError(f"adapter response omits instance id {sid}")
        value = raw[str(sid)]
        if not isinstance(value, int) or not 0 <= value <= 3:
            raise AdapterProtocolError(f"layer value {value!r} for id {sid} not in 0..3")
        assignment[sid] = LayerIndex(value)
    return assignment
