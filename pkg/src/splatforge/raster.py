"""Pipeline stage 3: front-to-back alpha compositing over sorted splats.

Per pixel, color accumulates as C += T * alpha * c with transmittance
T *= (1 - alpha). Contributions below the alpha floor are pruned; once
T drops under the termination threshold the pixel stops consuming
splats. Tiles are independent, so frames can render them concurrently.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .scene import CameraView, CullStats, GaussianCloud
from .projection import Splats, Splat2D, project_cloud, near_plane_mask, tile_grid
from .sorting import (
    DEFAULT_SORTER,
    OccupancyRecord,
    SorterConfig,
    TileBins,
    bin_tiles,
    depth_codes,
    sort_tile,
    sorter_cycles,
)

ALPHA_CLAMP = np.float32(0.99)
DEFAULT_TAU = 1e-4
DEFAULT_ALPHA_MIN = 1.0 / 255.0


@dataclass
class PixelState:
    """Accumulated color, remaining transmittance, and termination flag."""

    color: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    transmittance: float = 1.0
    terminated: bool = False


@dataclass
class RenderStats:
    """Partition of presented (splat, pixel) pairs."""

    blended: int = 0
    alpha_pruned: int = 0
    early_terminated: int = 0

    @property
    def pairs_total(self) -> int:
        return self.blended + self.alpha_pruned + self.early_terminated

    @property
    def termination_rate(self) -> float:
        total = self.pairs_total
        return self.early_terminated / total if total else 0.0

    def merge(self, other: "RenderStats") -> "RenderStats":
        return RenderStats(
            self.blended + other.blended,
            self.alpha_pruned + other.alpha_pruned,
            self.early_terminated + other.early_terminated,
        )


def splat_alpha(splat: Splat2D, px: np.ndarray) -> float:
    """Effective opacity of a splat at a pixel center, clamped to 0.99."""
    d = np.asarray(px, dtype=np.float32) - splat.mean2d
    a, b, c = (np.float32(v) for v in splat.conic)
    qf = a * d[0] * d[0] + 2.0 * b * d[0] * d[1] + c * d[1] * d[1]
    return float(np.minimum(np.float32(splat.opacity) * np.exp(np.float32(-0.5) * qf), ALPHA_CLAMP))


def blend_pixel(
    state: PixelState,
    alpha: float,
    color: np.ndarray,
    tau: float = DEFAULT_TAU,
    alpha_min: float = DEFAULT_ALPHA_MIN,
) -> PixelState:
    """One compositing step; contributions under alpha_min are skipped.

    Alpha above the 0.99 ceiling is clamped, matching splat_alpha.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha {alpha} outside [0, 1]")
    alpha = min(alpha, float(ALPHA_CLAMP))
    if alpha < alpha_min:
        return replace(state)
    a = np.float32(alpha)
    t = np.float32(state.transmittance)
    new_color = state.color + t * a * np.asarray(color, dtype=np.float32)
    new_t = float(t * (np.float32(1.0) - a))
    return PixelState(color=new_color, transmittance=new_t, terminated=new_t < tau)


@dataclass
class RenderOptions:
    tau: float = DEFAULT_TAU
    alpha_min: float = DEFAULT_ALPHA_MIN
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    path: str = "zeroskip"
    tile_size: int = 16
    threads: int = 1
    sorter: str = "evt"  # "evt" runs the modeled hardware sort, "fast" a library sort
    fp16_emulation: bool = False
    check_sorted: bool = False

    def __post_init__(self) -> None:
        if self.tile_size < 1:
            raise ValidationError("tile size must be >= 1")
        if not (0.0 <= self.tau <= 1.0 and 0.0 <= self.alpha_min <= 1.0):
            raise ValidationError("tau and alpha_min must lie in [0, 1]")
        if self.sorter not in ("evt", "fast"):
            raise ValidationError(f"unknown sorter {self.sorter!r}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


def _blend_block(
    splats: Splats,
    order: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    tau: float,
    alpha_min: float,
    background: np.ndarray,
) -> tuple[np.ndarray, RenderStats]:
    """Vectorised compositing of ordered splats over a pixel block."""
    n_px = xs.size
    if len(order) == 0:
        block = np.broadcast_to(background, (n_px, 3)).astype(np.float32)
        return block.copy(), RenderStats()

    u = splats.mean2d[order, 0][:, None]
    v = splats.mean2d[order, 1][:, None]
    a = splats.conic[order, 0][:, None]
    b = splats.conic[order, 1][:, None]
    c = splats.conic[order, 2][:, None]
    dx = xs[None, :] - u
    dy = ys[None, :] - v
    qf = a * dx * dx + np.float32(2.0) * b * dx * dy + c * dy * dy
    alpha = np.minimum(
        splats.opacity[order][:, None] * np.exp(np.float32(-0.5) * qf), ALPHA_CLAMP
    )
    pruned = alpha < np.float32(alpha_min)
    alpha_eff = np.where(pruned, np.float32(0.0), alpha)

    t_after = np.cumprod(np.float32(1.0) - alpha_eff, axis=0)
    t_before = np.vstack([np.ones((1, n_px), dtype=np.float32), t_after[:-1]])
    processed = t_before >= np.float32(tau)

    weights = np.where(processed, t_before * alpha_eff, np.float32(0.0))
    color = np.einsum("np,nc->pc", weights, splats.color[order], optimize=False)
    t_final = np.where(processed, t_after, np.float32(np.inf)).min(axis=0)
    block = color + t_final[:, None] * background

    stats = RenderStats(
        blended=int(np.count_nonzero(processed & ~pruned)),
        alpha_pruned=int(np.count_nonzero(processed & pruned)),
        early_terminated=int(np.count_nonzero(~processed)),
    )
    return block.astype(np.float32), stats


def render_tile(
    splats: Splats,
    order: np.ndarray,
    origin: tuple[int, int],
    image_size: tuple[int, int],
    opts: RenderOptions,
) -> tuple[np.ndarray, RenderStats]:
    """Composite one tile; returns (block (th, tw, 3), stats).

    ``order`` must list splat indices front to back (ascending depth
    code). The block is clipped at the image border, so a bottom or
    right edge tile may be smaller than ``opts.tile_size``.
    """
    width, height = image_size
    x0, y0 = origin
    tw = min(opts.tile_size, width - x0)
    th = min(opts.tile_size, height - y0)
    if tw <= 0 or th <= 0:
        raise ValidationError("tile origin outside the image")
    if opts.check_sorted and len(order):
        codes = depth_codes(splats.depth[order])
        if np.any(np.diff(codes.astype(np.int32)) < 0):
            raise ValidationError("render_tile requires front-to-back ordered input")

    px = (x0 + np.arange(tw, dtype=np.float32)) + np.float32(0.5)
    py = (y0 + np.arange(th, dtype=np.float32)) + np.float32(0.5)
    xs = np.tile(px, th)
    ys = np.repeat(py, tw)
    bg = np.asarray(opts.background, dtype=np.float32)
    block, stats = _blend_block(splats, order, xs, ys, opts.tau, opts.alpha_min, bg)
    return block.reshape(th, tw, 3), stats


@dataclass
class SorterUsage:
    """Frame-level aggregate of the per-tile occupancy records."""

    max_tile_keys: int = 0
    tiles_overflowed: int = 0
    overflow_entries_total: int = 0
    overflow_excess_tiles: int = 0

    def add(self, rec: OccupancyRecord) -> None:
        self.max_tile_keys = max(self.max_tile_keys, rec.n_keys)
        if rec.overflow_used > 0:
            self.tiles_overflowed += 1
        self.overflow_entries_total += rec.overflow_used
        if rec.overflow_excess > 0:
            self.overflow_excess_tiles += 1


@dataclass
class FrameStats:
    """Everything the performance model needs from one functional render."""

    width: int
    height: int
    tile_size: int
    path: str
    n_total: int
    cull: CullStats
    n_projected: int
    tile_counts: np.ndarray
    render: RenderStats
    sorter_cycles_total: int
    sorter_usage: SorterUsage

    @property
    def n_tiles(self) -> int:
        return int(self.tile_counts.size)


@dataclass
class FrameResult:
    image: np.ndarray  # (H, W, 3) f32 in [0, 1]
    stats: FrameStats
    splats: Splats
    bins: TileBins


def _tile_order(
    bins: TileBins, tile_id: int, sorter: str, cfg: SorterConfig
) -> np.ndarray:
    codes, values = bins.tile(tile_id)
    if sorter == "evt":
        ordered, _ = sort_tile(codes, values, cfg)
        return ordered
    return values[np.argsort(codes, kind="stable")]


def render_frame(
    scene,
    cam: CameraView,
    opts: RenderOptions | None = None,
    sorter_cfg: SorterConfig = DEFAULT_SORTER,
) -> FrameResult:
    """Render a full frame from a GaussianCloud or a CompressedModel."""
    opts = opts or RenderOptions()
    if not isinstance(scene, GaussianCloud):
        from .compress import decompress  # CompressedModel input

        scene = decompress(scene)

    n_total = len(scene)
    keep, cull_stats = near_plane_mask(scene, cam)
    splats = project_cloud(
        scene,
        cam,
        keep_mask=keep,
        path=opts.path,
        tile_size=opts.tile_size,
        fp16_emulation=opts.fp16_emulation,
    )
    grid = tile_grid(cam.width, cam.height, opts.tile_size)
    bins = bin_tiles(splats, grid)

    image = np.empty((cam.height, cam.width, 3), dtype=np.float32)
    usage = SorterUsage()
    cycles_total = 0
    for count in bins.counts:
        usage.add(OccupancyRecord.for_count(int(count), sorter_cfg))
        cycles_total += sorter_cycles(int(count), sorter_cfg)

    tiles_x, tiles_y = grid

    def run_tile(tile_id: int) -> tuple[int, np.ndarray, RenderStats]:
        order = _tile_order(bins, tile_id, opts.sorter, sorter_cfg)
        ty, tx = divmod(tile_id, tiles_x)
        block, stats = render_tile(
            splats,
            order,
            (tx * opts.tile_size, ty * opts.tile_size),
            (cam.width, cam.height),
            opts,
        )
        return tile_id, block, stats

    tile_ids = range(tiles_x * tiles_y)
    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(run_tile, tile_ids))
    else:
        results = [run_tile(t) for t in tile_ids]

    render_stats = RenderStats()
    for tile_id, block, stats in results:
        ty, tx = divmod(tile_id, tiles_x)
        y0, x0 = ty * opts.tile_size, tx * opts.tile_size
        image[y0 : y0 + block.shape[0], x0 : x0 + block.shape[1]] = block
        render_stats = render_stats.merge(stats)

    frame_stats = FrameStats(
        width=cam.width,
        height=cam.height,
        tile_size=opts.tile_size,
        path=opts.path,
        n_total=n_total,
        cull=cull_stats,
        n_projected=len(splats),
        tile_counts=bins.counts,
        render=render_stats,
        sorter_cycles_total=cycles_total,
        sorter_usage=usage,
    )
    return FrameResult(image=image, stats=frame_stats, splats=splats, bins=bins)
