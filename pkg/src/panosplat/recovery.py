"""Occlusion-guided layer recovery: RGB inpainting and depth completion.

Removal runs near-to-far: inpainting the dynamic mask yields the complete
foreground panorama, inpainting the foreground mask yields the background
panorama, and so on.  The built-in RGB baseline is a seam-aware multiscale
push-pull fill; depth holes are filled harmonically and clamped so that a
recovered layer is never nearer than the occluder it replaces.

Both fills are non-destructive: pixels outside the hole are returned
bit-for-bit.
"""

from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import imgio
from .errors import (
    AdapterProtocolError,
    DegenerateHoleError,
    InsufficientBoundaryError,
)

DEPTH_ORDER_EPS = 0.01  # meters; minimum layer-to-layer separation


def _downsample(value, weight):
    """Weighted 2x2 decimation; odd dims replicate the last row/column."""
    H, W = weight.shape
    if H % 2 or W % 2:
        value = np.pad(value, [(0, H % 2), (0, W % 2)] + [(0, 0)] * (value.ndim - 2), mode="edge")
        weight = np.pad(weight, [(0, H % 2), (0, W % 2)], mode="edge")
        H, W = weight.shape
    w4 = weight.reshape(H // 2, 2, W // 2, 2)
    v4 = value.reshape(H // 2, 2, W // 2, 2, -1)
    wsum = w4.sum(axis=(1, 3))
    vsum = (v4 * w4[:, :, :, :, None]).sum(axis=(1, 3))
    out = np.zeros_like(vsum)
    np.divide(vsum, wsum[:, :, None], out=out, where=wsum[:, :, None] > 0)
    return out.reshape(H // 2, W // 2, -1), wsum / 4.0


def _upsample_wrap(coarse, fine_shape):
    """Bilinear 2x upsample; columns wrap (longitude), rows clamp."""
    Hc, Wc = coarse.shape[:2]
    H, W = fine_shape
    i = np.clip((np.arange(H) - 0.5) / 2.0, 0, Hc - 1)
    j = np.mod((np.arange(W) - 0.5) / 2.0, Wc)
    i0 = np.floor(i).astype(int)
    i1 = np.minimum(i0 + 1, Hc - 1)
    fi = (i - i0)[:, None, None]
    j0 = np.floor(j).astype(int)
    j1 = np.mod(j0 + 1, Wc)
    fj = (j - j0)[None, :, None]
    a = coarse[i0][:, j0] * (1 - fj) + coarse[i0][:, j1] * fj
    b = coarse[i1][:, j0] * (1 - fj) + coarse[i1][:, j1] * fj
    return a * (1 - fi) + fi * b


def push_pull_fill(image, hole):
    """Multiscale fill of hole pixels from surrounding content.

    Every filled value is a convex combination of known pixels, so fills
    stay inside the known color hull.  Longitude wrap is honored at every
    pyramid level, which keeps the result consistent across the seam.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    hole = np.asarray(hole).astype(bool)
    if hole.all():
        raise DegenerateHoleError("hole covers the entire image")
    levels = [(img * ~hole[..., None], (~hole).astype(np.float64))]
    while levels[-1][1].min() <= 0.0 and levels[-1][1].size > 1:
        levels.append(_downsample(*levels[-1]))
    value, weight = levels[-1]
    for fine_value, fine_weight in reversed(levels[:-1]):
        up = _upsample_wrap(value, fine_weight.shape)
        unknown = fine_weight == 0.0
        fine_value = fine_value.copy()
        fine_value[unknown] = up[unknown]
        value, weight = fine_value, np.maximum(fine_weight, unknown * 1.0)
    out = np.where(hole[..., None], value, img)
    return out[..., 0] if squeeze else out


@dataclass
class InpaintAdapter:
    """External inpainting via the file contract.

    The engine writes input.png, mask.png and prompt.txt into a fresh work
    directory, appends that directory to the configured command, and reads
    output.png back.  A nonzero exit is an adapter error.  Output is only
    consulted inside the hole, so the non-destructive guarantee holds
    regardless of what the tool returns.
    """

    command: list
    prompt: str = "no objects present"
    keep_workdirs: bool = False

    def fill(self, image, hole):
        workdir = Path(tempfile.mkdtemp(prefix="inpaint_"))
        imgio.save_png(workdir / "input.png", image)
        imgio.save_png(workdir / "mask.png", hole.astype(np.float64))
        (workdir / "prompt.txt").write_text(self.prompt)
        result = subprocess.run([*self.command, str(workdir)], capture_output=True)
        if result.returncode != 0:
            raise AdapterProtocolError(
                f"inpaint adapter exited {result.returncode}: {result.stderr[-500:]!r}"
            )
        out_path = workdir / "output.png"
        if not out_path.exists():
            raise AdapterProtocolError("inpaint adapter produced no output.png")
        out = imgio.load_image(out_path)
        if out.shape != np.asarray(image).shape:
            raise AdapterProtocolError("inpaint adapter changed the image size")
        if not self.keep_workdirs:
            import shutil

            shutil.rmtree(workdir, ignore_errors=True)
        return out


def inpaint_rgb(image, hole, backend="baseline"):
    """Fill hole pixels; everything outside the hole is returned bitwise."""
    image = np.asarray(image, dtype=np.float64)
    hole = np.asarray(hole).astype(bool)
    if hole.shape != image.shape[:2]:
        raise ValueError("hole mask dims must match the image")
    if not hole.any():
        return image.copy()
    if backend == "baseline":
        return push_pull_fill(image, hole)
    filled = backend.fill(image, hole)
    return np.where(hole[..., None], filled, image)


def remove_layer(current, mask, backend="baseline"):
    """One recovery step: inpaint the removed layer's mask, producing the
    next-deeper complete panorama."""
    return inpaint_rgb(current, mask, backend)


def _wrapped_components(hole):
    """Connected components of the hole, horizontal wrap included."""
    from scipy import ndimage

    labels, n = ndimage.label(hole)
    if n == 0:
        return labels, 0
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    left, right = labels[:, 0], labels[:, -1]
    for a, b in zip(left, right):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra
    remap = np.array([find(a) for a in range(n + 1)])
    return remap[labels], n


def harmonic_fill(depth, hole):
    """Discrete Laplace solve over hole pixels, Dirichlet boundary from
    known depth, longitude-wrapped stencil."""
    depth = np.asarray(depth, dtype=np.float64)
    hole = np.asarray(hole).astype(bool)
    H, W = depth.shape
    if not hole.any():
        return depth.copy()

    comp, n = _wrapped_components(hole)
    idx = -np.ones((H, W), dtype=np.int64)
    ii, jj = np.nonzero(hole)
    idx[ii, jj] = np.arange(ii.size)

    rows, cols, vals = [], [], []
    rhs = np.zeros(ii.size)
    diag = np.zeros(ii.size)
    touched = set()
    for di, dj, wrap in ((-1, 0, False), (1, 0, False), (0, -1, True), (0, 1, True)):
        ni = ii + di
        nj = np.mod(jj + dj, W) if wrap else jj + dj
        in_grid = (ni >= 0) & (ni < H)
        diag[in_grid] += 1.0
        sel = in_grid.nonzero()[0]
        nbr_hole = hole[ni[sel], nj[sel]]
        h_sel = sel[nbr_hole]
        rows.extend(idx[ii[h_sel], jj[h_sel]])
        cols.extend(idx[ni[h_sel], nj[h_sel]])
        vals.extend([-1.0] * h_sel.size)
        k_sel = sel[~nbr_hole]
        kd = depth[ni[k_sel], nj[k_sel]]
        if np.any(kd <= 0):
            raise InsufficientBoundaryError("hole boundary contains missing depth")
        rhs[idx[ii[k_sel], jj[k_sel]]] += kd
        touched.update(comp[ii[k_sel], jj[k_sel]].tolist())

    anchored = set(touched)
    all_comps = set(comp[ii, jj].tolist())
    if all_comps - anchored:
        raise InsufficientBoundaryError(
            f"{len(all_comps - anchored)} hole component(s) touch no known depth"
        )

    m = ii.size
    A = sparse.coo_matrix(
        (np.concatenate([diag, np.asarray(vals)]),
         (np.concatenate([np.arange(m), np.asarray(rows, dtype=np.int64)]),
          np.concatenate([np.arange(m), np.asarray(cols, dtype=np.int64)]))),
        shape=(m, m),
    ).tocsr()
    solution = spsolve(A, rhs)
    out = depth.copy()
    out[ii, jj] = solution
    return out


def complete_depth(rgb, depth, hole, occluder_depth=None, eps=DEPTH_ORDER_EPS):
    """Harmonic depth completion with the layer-ordering clamp.

    The baseline is texture-free (rgb is accepted for interface parity
    with learned completers but not consulted).  Filled values are raised
    to occluder_depth + eps wherever the occluder has known depth; known
    values are returned bitwise.
    """
    hole = np.asarray(hole).astype(bool)
    out = harmonic_fill(depth, hole)
    if occluder_depth is not None:
        occ = np.asarray(occluder_depth, dtype=np.float64)
        clampable = hole & (occ > 0)
        out[clampable] = np.maximum(out[clampable], occ[clampable] + eps)
    return out


@dataclass
class LayerStack:
    """The four-layer decomposition: masks partition the grid; rgb / depth
    hold each layer's complete recovered panorama."""

    masks: list
    rgb: dict
    depth: dict
    keep_dynamic: bool = False

    @property
    def layers(self):
        return sorted(self.rgb)

    def validate(self, eps=DEPTH_ORDER_EPS):
        total = sum(m.astype(np.int64) for m in self.masks)
        if not (total == 1).all():
            raise AssertionError("layer masks do not partition the pixel grid")
        for k in self.layers:
            for l in self.layers:
                if k < l:
                    on_k = self.masks[k].astype(bool)
                    if not (self.depth[l][on_k] >= self.depth[k][on_k] + eps - 1e-12).all():
                        raise AssertionError(f"depth ordering violated for layers {k} < {l}")
        return self


def assign_sky_depth(stack: LayerStack, factor=2.0):
    """Constant sky depth at factor x the deepest finite scene depth."""
    candidates = [stack.depth[l] for l in (1, 2) if l in stack.depth]
    finite = [d[np.isfinite(d) & (d > 0)] for d in candidates]
    finite = [f for f in finite if f.size]
    if not finite:
        raise ValueError("no finite depth available for the sky shell")
    max_depth = max(float(f.max()) for f in finite)
    return np.full(stack.masks[0].shape, factor * max_depth)


def build_layer_stack(pano, masks, fg_depth, backend="baseline",
                      keep_dynamic=False, sky_factor=2.0):
    """Run recovery near-to-far and assemble the complete LayerStack.

    Without keep_dynamic the dynamic mask is inpainted away (RGB and
    depth) and its pixels are folded into the foreground mask, so the
    remaining three masks still partition the grid and the recovered
    region is supervised and lifted like any other foreground content.
    """
    pano = np.asarray(pano, dtype=np.float64)
    fg_depth = np.asarray(fg_depth, dtype=np.float64)
    masks = [np.asarray(m).astype(np.uint8) for m in masks]
    total = sum(m.astype(np.int64) for m in masks)
    if not (total == 1).all():
        raise ValueError("masks must partition the pixel grid")

    dynamic = masks[0].astype(bool)
    rgb, depth = {}, {}
    out_masks = [m.copy() for m in masks]

    if dynamic.any():
        rgb1 = inpaint_rgb(pano, dynamic, backend)
        d1 = complete_depth(rgb1, np.where(dynamic, 0.0, fg_depth), dynamic,
                            occluder_depth=np.where(dynamic, fg_depth, 0.0))
    else:
        rgb1 = pano.copy()
        d1 = fg_depth.copy()

    if keep_dynamic:
        rgb[0] = pano.copy()
        depth[0] = fg_depth.copy()
    else:
        out_masks[1] = (masks[1] | masks[0]).astype(np.uint8)
        out_masks[0] = np.zeros_like(masks[0])

    rgb[1], depth[1] = rgb1, d1
    rgb[2] = remove_layer(rgb[1], out_masks[1], backend)
    depth[2] = complete_depth(rgb[2], np.where(out_masks[1] > 0, 0.0, depth[1]),
                              out_masks[1], occluder_depth=depth[1])
    rgb[3] = remove_layer(rgb[2], out_masks[2], backend)

    stack = LayerStack(out_masks, rgb, depth, keep_dynamic=keep_dynamic)
    depth[3] = assign_sky_depth(stack, factor=sky_factor)
    return stack.validate()
