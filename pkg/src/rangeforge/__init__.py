"""rangeforge: semantic editing of LiDAR scans through their range-view images.

Pipeline: invertible spherical projection, convex-hull semantic masking,
mask-conditioned latent diffusion with a region-focused loss, compositing
back into the scan, and instance-restricted evaluation metrics. A CLI and a
small HTTP service expose the pipeline to the scenario editor.
"""

from .types import NO_RETURN, OrientedBox, Point, PointCloud, RangeImage, SemanticMask
from .tensorfile import read_tensor, tensor_bytes, tensor_from_bytes, write_tensor, TensorFileError
from .projection import (
    ProjectionConfig,
    ProjectionResult,
    bin_center_angles,
    cartesian_to_spherical,
    invert,
    pixel_of,
    project,
)
from .masking import (
    DegenerateHull,
    PixelPolygon,
    apply_mask,
    box_surface_samples,
    convex_hull,
    downsample_mask,
    hull_mask,
    mask_from_box,
    mask_from_labeled_points,
    rasterize_hull,
    seam_split,
)
from .diffusion import (
    NoiseSchedule,
    TrainConfig,
    TrainExample,
    composite,
    decode,
    denormalize_image,
    encode,
    forward_diffuse,
    load_checkpoint,
    make_schedule,
    make_train_example,
    normalize_image,
    region_loss,
    sample,
    save_checkpoint,
    train,
    train_step,
)
from .denoiser import Denoiser, DenoiserConfig, ZeroDenoiser
from .metrics import (
    BevHistogram,
    MetricReport,
    bev_histogram,
    chamfer,
    evaluate_masked_region,
    extract_masked_points,
    jsd,
    mae,
    mmd,
    normalize_unit_sphere,
)
from .dataset import (
    CAR_CLASS_ID,
    GROUND_CLASS_ID,
    ScanRecord,
    SceneSpec,
    build_training_example,
    read_boxes,
    read_labels,
    read_velodyne_bin,
    synthetic_scene,
    write_boxes,
    write_labels,
    write_velodyne_bin,
)

__version__ = "0.1.0"
