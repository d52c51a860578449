"""panosplat: layered panorama-to-3D Gaussian-splat scene engine.

One equirectangular panorama (with segmentation and depth) becomes a
four-layer splat scene: dynamic objects removed, occluded content
recovered per layer, each layer lifted to 3D and optimized back-to-front.
"""

from .bundle import export_bundle, load_bundle
from .geometry import (
    CameraIntrinsics,
    CameraRig,
    CameraView,
    angles_to_pixel,
    build_rig,
    default_rig,
    pixel_to_angles,
    project_mask,
    project_point,
    sample_perspective,
    unproject,
)
from .lift import pano_to_points, points_to_splats
from .metrics import count_holes, psnr
from .optim import TrainConfig, build_supervision, compute_loss, d_ssim, ssim, train_layer, train_scene
from .parsing import LayerIndex, LayerRules, SegmentMap, build_layer_masks, classify_segments
from .pipeline import PipelineConfig, load_config
from .rasterizer import GradientSet, RenderedView, rasterize, rasterize_backward, render_scene
from .recovery import LayerStack, build_layer_stack, complete_depth, inpaint_rgb, remove_layer
from .scene import SplatLayer, SplatScene

__version__ = "0.1.0"
