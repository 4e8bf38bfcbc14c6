"""splatforge: a software model of a tile-based Gaussian splatting
accelerator, with the matching model-compression pipeline and a
first-order performance estimator.
"""

from .errors import (
    ContainerFormatError,
    PlyParseError,
    SplatforgeError,
    ValidationError,
)
from .scene import (
    CameraView,
    CullStats,
    Gaussian3D,
    GaussianCloud,
    look_at,
    make_camera,
    validate_cloud,
)
from .ply import load_ply, save_ply
from .container import CompressedModel, container_nbytes, read_compressed, write_compressed
from .projection import (
    OpTally,
    Splat2D,
    Splats,
    cull_near_plane,
    near_plane_mask,
    op_count,
    project_cloud,
    project_full,
    project_zeroskip,
    tile_grid,
)
from .sh import evaluate_sh, evaluate_sh_many, sh_basis
from .sorting import (
    EvtState,
    SorterConfig,
    SortKey,
    TileBins,
    bin_tiles,
    depth_codes,
    depth_to_code,
    evt_select_max,
    sort_tile,
    sorter_cycles,
)
from .raster import (
    FrameResult,
    FrameStats,
    PixelState,
    RenderOptions,
    RenderStats,
    blend_pixel,
    render_frame,
    render_tile,
    splat_alpha,
)
from .compress import (
    CompressionReport,
    PruneSchedule,
    ShAccounting,
    compress,
    decompress,
    prune_step,
    significance,
    survivor_count,
    truncate_sh,
    vq_assign,
    vq_train,
)
from .perf import PerfConfig, PerfReport, StageProfile, model_frame, rate_report, stage1_ops
from .synthetic import camera_for_cloud, default_camera, gen_synthetic, ring_views
from .images import psnr, read_image, read_ppm, write_png, write_ppm

__version__ = "0.1.0"
