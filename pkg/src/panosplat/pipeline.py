"""End-to-end pipeline: ingest, build, train, render, eval, export.

Stage outputs live under the configured output directory:

    ingest/   validated panorama / segments / depth + validation report
    build/    per-layer masks, recovered RGB + depth, point clouds,
              and the initialized splat bundle
    train/    training log (ndjson), checkpoints, final scene bundle
    eval/     metrics report (PSNR / SSIM on held-out views, hole table)
    render/   trajectory frames

Every stage reloads its inputs from the previous stage's files, so a
fixed config and seed reproduce identical bundles bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bundle as bundlemod
from . import geometry, imgio, lift, metrics, optim, parsing, recovery
from .errors import ConfigError, IngestError
from .optim import TrainConfig
from .rasterizer import render_scene
from .scene import SplatScene


@dataclass
class RigConfig:
    fov_x_deg: float = 90.0
    fov_y_deg: float = 90.0
    width: int = 512
    height: int = 512
    yaw_count: int = 8
    pitch_deg: list = field(default_factory=lambda: [-45.0, 0.0, 45.0])
    include_poles: bool = True

    def build(self):
        intr = geometry.CameraIntrinsics(
            np.deg2rad(self.fov_x_deg), np.deg2rad(self.fov_y_deg),
            int(self.width), int(self.height),
        )
        return geometry.build_rig(
            intr, yaw_count=self.yaw_count,
            pitch_rows=[np.deg2rad(p) for p in self.pitch_deg],
            include_poles=self.include_poles,
        )


@dataclass
class PipelineConfig:
    panorama: str = ""
    segments: str = ""
    labels: str = ""
    depth: str = ""
    rules: str | None = None
    out: str = "out"
    seed: int = 0
    keep_dynamic: bool = False
    inpaint_backend: str = "baseline"  # baseline | adapter
    parser_backend: str = "rules"  # rules | adapter
    inpaint_adapter_cmd: list | None = None
    parser_adapter_cmd: list | None = None
    adapter_timeout_s: float = 60.0
    adapter_fallback_rules: bool = False
    default_layer: int | None = None
    pano_width: int = 2048
    strict_aspect: bool = False
    stride: int = 2
    sky_depth_factor: float = 2.0
    init_opacity: float = 0.7
    init_spread: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    rig: RigConfig = field(default_factory=RigConfig)

    def __post_init__(self):
        if self.inpaint_backend not in ("baseline", "adapter"):
            raise ConfigError(f"inpaint_backend {self.inpaint_backend!r} not known")
        if self.parser_backend not in ("rules", "adapter"):
            raise ConfigError(f"parser_backend {self.parser_backend!r} not known")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.pano_width % 2:
            raise ConfigError("pano_width must be even")

    @property
    def pano_height(self):
        return self.pano_width // 2

    def out_dir(self):
        return Path(self.out)


def _from_dict(cls, doc, where):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys under {where}: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key == "train":
            kwargs[key] = _from_dict(TrainConfig, value, "train")
        elif key == "rig":
            kwargs[key] = _from_dict(RigConfig, value, "rig")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def load_config(path):
    with open(path) as f:
        doc = json.load(f)
    cfg = _from_dict(PipelineConfig, doc, "<root>")
    base = Path(path).parent
    for key in ("panorama", "segments", "labels", "depth", "rules"):
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            setattr(cfg, key, str(base / value))
    if cfg.out and not Path(cfg.out).is_absolute():
        cfg.out = str(base / cfg.out)
    return cfg


def _nearest_resize(arr, shape):
    H, W = shape
    hi, wi = arr.shape[:2]
    rows = np.minimum((np.arange(H) * hi) // H, hi - 1)
    cols = np.minimum((np.arange(W) * wi) // W, wi - 1)
    return arr[rows][:, cols]


def _bilinear_resize_rgb(img, shape):
    from PIL import Image

    H, W = shape
    im = Image.fromarray(imgio.to_uint8(img))
    return imgio.from_uint8(np.asarray(im.resize((W, H), Image.BILINEAR)))


# -------------------------------------------------------------- ingest


def cmd_ingest(config: PipelineConfig):
    out = config.out_dir() / "ingest"
    out.mkdir(parents=True, exist_ok=True)
    warnings = []

    pano = imgio.load_image(config.panorama)
    H0, W0 = pano.shape[:2]
    if W0 != 2 * H0:
        if config.strict_aspect:
            raise IngestError(
                f"{config.panorama}: {W0}x{H0} is not 2:1 equirectangular"
            )
        warnings.append(f"panorama {W0}x{H0} is not 2:1; resampling distorts")
    target = (config.pano_height, config.pano_width)
    if (H0, W0) != target:
        warnings.append(f"panorama resampled {W0}x{H0} -> {target[1]}x{target[0]}")
        pano = _bilinear_resize_rgb(pano, target)

    seg_img = imgio.load_segments_png(config.segments)
    if seg_img.shape != target:
        seg_img = _nearest_resize(seg_img, target)
    with open(config.labels) as f:
        labels = {int(k): str(v) for k, v in json.load(f).items()}
    seg = parsing.SegmentMap(seg_img, labels)

    depth = imgio.load_depth(config.depth)
    neg = np.nonzero(depth < 0)
    if neg[0].size:
        i, j = int(neg[0][0]), int(neg[1][0])
        raise IngestError(
            f"{config.depth}: negative depth {depth[i, j]:.4g} at pixel ({i}, {j})"
        )
    if not np.isfinite(depth).all():
        bad = np.nonzero(~np.isfinite(depth))
        raise IngestError(
            f"{config.depth}: non-finite depth at pixel ({int(bad[0][0])}, {int(bad[1][0])})"
        )
    if depth.shape != target:
        depth = _nearest_resize(depth, target)

    imgio.save_png(out / "pano.png", pano)
    imgio.save_segments_png(out / "segments.png", seg.label_image)
    imgio.atomic_write(out / "labels.json",
                       json.dumps({str(k): v for k, v in labels.items()},
                                  sort_keys=True).encode())
    imgio.save_pfm(out / "depth.pfm", depth)
    report = {
        "pano": {"width": target[1], "height": target[0]},
        "segments": {"instances": len(seg.ids)},
        "depth": {"min": float(depth[depth > 0].min()) if (depth > 0).any() else 0.0,
                  "max": float(depth.max()),
                  "missing_fraction": float(np.mean(depth == 0))},
        "warnings": warnings,
    }
    imgio.atomic_write(out / "validation.json", json.dumps(report, indent=2).encode())
    return report


# -------------------------------------------------------------- build


def _load_rules(config):
    if config.rules:
        return parsing.load_rules(config.rules, default=(
            parsing.parse_layer(config.default_layer)
            if config.default_layer is not None else None))
    return parsing.default_rules(default=(
        parsing.parse_layer(config.default_layer)
        if config.default_layer is not None else None))


def _classify(config, seg, image_path):
    if config.parser_backend == "adapter":
        if not config.parser_adapter_cmd:
            raise ConfigError("parser_backend=adapter needs parser_adapter_cmd")
        client = parsing.AdapterClient(config.parser_adapter_cmd,
                                       timeout=config.adapter_timeout_s)
        try:
            with client:
                return parsing.request_adapter_assignment(seg, image_path, client)
        except Exception:
            if not config.adapter_fallback_rules:
                raise
    return parsing.classify_segments(seg, _load_rules(config))


def _inpaint_backend(config):
    if config.inpaint_backend == "adapter":
        if not config.inpaint_adapter_cmd:
            raise ConfigError("inpaint_backend=adapter needs inpaint_adapter_cmd")
        return recovery.InpaintAdapter(config.inpaint_adapter_cmd)
    return "baseline"


def content_mask(stack, layer):
    """Pixels whose content belongs to `layer` in its recovered panorama:
    the layer's own region plus everything it extends behind (all nearer
    layers); the sky shell covers the full sphere."""
    if layer == 3:
        return np.ones_like(stack.masks[0])
    out = np.zeros_like(stack.masks[0])
    for k in range(0, layer + 1):
        out |= stack.masks[k].astype(out.dtype)
    return out


def cmd_build(config: PipelineConfig):
    ingest_dir = config.out_dir() / "ingest"
    if not (ingest_dir / "pano.png").exists():
        raise ConfigError(f"run ingest first: {ingest_dir} is missing artifacts")
    out = config.out_dir() / "build"
    out.mkdir(parents=True, exist_ok=True)

    pano = imgio.load_image(ingest_dir / "pano.png")
    seg_img = imgio.load_segments_png(ingest_dir / "segments.png")
    with open(ingest_dir / "labels.json") as f:
        labels = {int(k): v for k, v in json.load(f).items()}
    seg = parsing.SegmentMap(seg_img, labels)
    depth = imgio.load_depth(ingest_dir / "depth.pfm")

    assignment = _classify(config, seg, str(ingest_dir / "pano.png"))
    masks = parsing.build_layer_masks(seg, assignment)
    imgio.atomic_write(out / "assignment.json",
                       json.dumps({str(k): int(v) for k, v in assignment.items()},
                                  sort_keys=True).encode())

    stack = recovery.build_layer_stack(
        pano, masks, depth, backend=_inpaint_backend(config),
        keep_dynamic=config.keep_dynamic, sky_factor=config.sky_depth_factor,
    )

    clouds = {}
    for layer in stack.layers:
        imgio.save_png(out / f"mask_{layer}.png", stack.masks[layer].astype(np.float64))
        imgio.save_png(out / f"layer_{layer}_rgb.png", stack.rgb[layer])
        imgio.save_pfm(out / f"layer_{layer}_depth.pfm", stack.depth[layer])
        cmask = content_mask(stack, layer)
        clouds[layer] = lift.pano_to_points(stack.rgb[layer], stack.depth[layer],
                                            cmask, stride=config.stride)
    lift.save_ply(out / "cloud.ply", clouds)
    for layer, pts in clouds.items():
        lift.save_ply(out / f"layer_{layer}.ply", {layer: pts})

    scene = SplatScene(
        {
            layer: lift.points_to_splats(
                pts, pano.shape[1], stride=config.stride,
                opacity=config.init_opacity, spread=config.init_spread,
            )
            for layer, pts in clouds.items()
        },
        {"pano_width": pano.shape[1], "pano_height": pano.shape[0]},
    )
    bundlemod.export_bundle(scene, out / "init_bundle")
    meta = {
        "keep_dynamic": config.keep_dynamic,
        "layers": [int(l) for l in stack.layers],
        "stride": config.stride,
        "splat_counts": {str(l): len(scene.layers[l]) for l in scene.layers},
    }
    imgio.atomic_write(out / "stack.json", json.dumps(meta, indent=2).encode())
    return stack, scene


def load_stack(config: PipelineConfig):
    build_dir = config.out_dir() / "build"
    with open(build_dir / "stack.json") as f:
        meta = json.load(f)
    masks = []
    shape = None
    for l in range(4):
        p = build_dir / f"mask_{l}.png"
        if p.exists():
            import PIL.Image

            with PIL.Image.open(p) as im:
                m = (np.asarray(im.convert("L")) > 127).astype(np.uint8)
            masks.append(m)
            shape = m.shape
        else:
            masks.append(None)
    masks = [m if m is not None else np.zeros(shape, np.uint8) for m in masks]
    rgb, depth = {}, {}
    for l in meta["layers"]:
        rgb[l] = imgio.load_image(build_dir / f"layer_{l}_rgb.png")
        depth[l] = imgio.load_depth(build_dir / f"layer_{l}_depth.pfm")
    return recovery.LayerStack(masks, rgb, depth, keep_dynamic=meta["keep_dynamic"])


# -------------------------------------------------------------- train


def cmd_train(config: PipelineConfig):
    build_dir = config.out_dir() / "build"
    if not (build_dir / "stack.json").exists():
        raise ConfigError(f"run build first: {build_dir} is missing artifacts")
    out = config.out_dir() / "train"
    out.mkdir(parents=True, exist_ok=True)
    stack = load_stack(config)
    scene = bundlemod.load_bundle(build_dir / "init_bundle")
    rig = config.rig.build()
    config.train.seed = config.seed

    log_path = out / "log.ndjson"
    records = []

    def log_fn(rec):
        records.append(json.dumps(rec, sort_keys=True))

    def checkpoint_fn(s, layer, it):
        bundlemod.export_bundle(s, out / "checkpoint")

    try:
        _, order = optim.train_scene(scene, stack, rig, config.train,
                                     log_fn=log_fn, checkpoint_fn=checkpoint_fn)
    finally:
        imgio.atomic_write(log_path, ("\n".join(records) + "\n").encode()
                           if records else b"")
    manifest = bundlemod.export_bundle(scene, out / "bundle")
    imgio.atomic_write(out / "order.json", json.dumps({"layer_order": order}).encode())
    return scene, order, manifest


# -------------------------------------------------------------- eval


def _reference_layer(stack):
    return 0 if stack.keep_dynamic and 0 in stack.rgb else 1


def holdout_views(rig):
    return [i for i in range(len(rig.views)) if i % 2 == 1]


def movement_poses(rig, mean_depth, offset_frac):
    """Poses for the movement-robustness table: the offset applied along
    four horizontal diagonals, each observed with a yaw ring."""
    poses = []
    r = offset_frac * mean_depth
    for k in range(4):
        ang = np.pi / 4 + k * np.pi / 2
        position = np.array([r * np.cos(ang), 0.0, r * np.sin(ang)])
        for m in range(8):
            poses.append(geometry.CameraView(
                rig.intrinsics, yaw=2 * np.pi * m / 8, pitch=0.0, position=position))
    return poses


def cmd_eval(config: PipelineConfig, bundle_path=None):
    out = config.out_dir() / "eval"
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = Path(bundle_path) if bundle_path else config.out_dir() / "train" / "bundle"
    scene = bundlemod.load_bundle(bundle_path)
    stack = load_stack(config)
    rig = config.rig.build()

    ref = _reference_layer(stack)
    visibility = np.zeros_like(stack.masks[0])
    for k in range(ref, 4):
        visibility |= stack.masks[k].astype(visibility.dtype)

    per_view = []
    for vid in holdout_views(rig):
        view = rig.views[vid]
        rendered = render_scene(scene, view)
        gt = geometry.sample_perspective(stack.rgb[ref], view)
        mask = geometry.project_mask(visibility, view).astype(bool)
        p = metrics.psnr(rendered.color, gt, mask=np.broadcast_to(mask[..., None], gt.shape))
        s = metrics.ssim(rendered.color * mask[..., None], gt * mask[..., None])
        per_view.append({"view": vid, "psnr": p, "ssim": s})

    mean_depth = scene.mean_depth()
    offsets = [0.1, 0.2, 0.3]
    hole_fraction = {}
    for frac in offsets:
        fractions = [
            metrics.count_holes(render_scene(scene, pose))
            for pose in movement_poses(rig, mean_depth, frac)
        ]
        hole_fraction[f"{frac:.1f}"] = float(np.mean(fractions))

    report = {
        "bundle": str(bundle_path),
        "reference_layer": ref,
        "per_view": per_view,
        "psnr_mean": float(np.mean([v["psnr"] for v in per_view])),
        "ssim_mean": float(np.mean([v["ssim"] for v in per_view])),
        "movement_robustness": {
            "offsets": offsets,
            "normalization": "fraction of mean scene depth",
            "mean_scene_depth": mean_depth,
            "hole_fraction": hole_fraction,
        },
    }
    imgio.atomic_write(out / "metrics.json", json.dumps(report, indent=2).encode())
    return report


# -------------------------------------------------------------- render


def load_trajectory(path, mean_depth):
    with open(path) as f:
        poses = json.load(f)
    out = []
    for k, pose in enumerate(poses):
        unknown = set(pose) - {"yaw", "pitch", "position", "offset_frac"}
        if unknown:
            raise ConfigError(f"trajectory pose {k}: unknown keys {sorted(unknown)}")
        if "position" in pose:
            position = np.asarray(pose["position"], dtype=np.float64)
        elif "offset_frac" in pose:
            position = np.asarray(pose["offset_frac"], dtype=np.float64) * mean_depth
        else:
            position = np.zeros(3)
        out.append((float(pose.get("yaw", 0.0)), float(pose.get("pitch", 0.0)), position))
    return out


def cmd_render(config: PipelineConfig, trajectory_path, bundle_path=None, layers=None):
    out = config.out_dir() / "render"
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = Path(bundle_path) if bundle_path else config.out_dir() / "train" / "bundle"
    scene = bundlemod.load_bundle(bundle_path)
    rig = config.rig.build()
    poses = load_trajectory(trajectory_path, scene.mean_depth())
    layer_filter = sorted(scene.layers) if layers is None else sorted(layers)
    frames = []
    for k, (yaw, pitch, position) in enumerate(poses):
        view = geometry.CameraView(rig.intrinsics, yaw=yaw, pitch=pitch, position=position)
        rendered = render_scene(scene, view, layer_filter)
        imgio.save_png(out / f"frame_{k:04d}.png", rendered.color)
        imgio.save_png(out / f"frame_{k:04d}_alpha.png", rendered.alpha)
        frames.append({"frame": k, "hole_fraction": metrics.count_holes(rendered)})
    imgio.atomic_write(out / "frames.json", json.dumps(frames, indent=2).encode())
    return frames


def cmd_export(config: PipelineConfig, bundle_path=None, dest=None):
    """Re-export a bundle (verifying checksums on load); without a source,
    exports the initialized scene from the build stage."""
    src = Path(bundle_path) if bundle_path else config.out_dir() / "build" / "init_bundle"
    dest = Path(dest) if dest else config.out_dir() / "export"
    scene = bundlemod.load_bundle(src)
    return bundlemod.export_bundle(scene, dest)
