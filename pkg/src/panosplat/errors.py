"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class GeometryError(EngineError, ValueError):
    """Out-of-range pixel index, non-positive depth, or degenerate point."""


class CoverageError(EngineError):
    """Camera rig leaves part of the sphere unobserved."""

    def __init__(self, uncovered):
        self.uncovered = list(uncovered)
        preview = ", ".join(
            f"(theta={t:.1f}deg, phi={p:.1f}deg)" for t, p in self.uncovered[:5]
        )
        more = "" if len(self.uncovered) <= 5 else f" (+{len(self.uncovered) - 5} more)"
        super().__init__(f"{len(self.uncovered)} directions uncovered: {preview}{more}")


class UnclassifiedLabelError(EngineError, ValueError):
    """Segment labels matched no rule and no default layer is configured."""

    def __init__(self, labels):
        self.labels = sorted(labels)
        super().__init__(f"unclassified labels: {self.labels}")


class AdapterProtocolError(EngineError):
    """External adapter timed out, crashed, or returned an invalid response."""


class DegenerateHoleError(EngineError, ValueError):
    """Inpainting hole covers the entire image; nothing to propagate."""


class InsufficientBoundaryError(EngineError, ValueError):
    """A hole component has no known-depth neighbor to anchor the fill."""


class MissingDepthError(EngineError, ValueError):
    """Depth is missing inside a region that must be lifted to 3D."""

    def __init__(self, pixels):
        self.pixels = [tuple(p) for p in pixels]
        preview = ", ".join(str(p) for p in self.pixels[:5])
        more = "" if len(self.pixels) <= 5 else f" (+{len(self.pixels) - 5} more)"
        super().__init__(f"missing depth at {len(self.pixels)} masked pixels: {preview}{more}")


class InvalidSplatError(EngineError, ValueError):
    """Splat parameters contain NaN or infinity."""


class DivergenceError(EngineError):
    """Training loss became non-finite."""

    def __init__(self, iteration, layer):
        self.iteration = iteration
        self.layer = layer
        super().__init__(f"non-finite loss at iteration {iteration} (layer {layer})")


class BundleError(EngineError):
    """Scene bundle is corrupt: checksum or version mismatch, truncated payload."""


class ConfigError(EngineError, ValueError):
    """Pipeline configuration is malformed or references missing files."""


class IngestError(EngineError, ValueError):
    """Input validation failure, with file and pixel coordinates when known."""
