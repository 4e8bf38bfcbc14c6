"""First-order cycle and throughput model of the four-stage pipeline.

Stage cycle estimates are simple declared models: stage 0 streams one
point per cycle, stage 1 divides the projection op count over a 6-MAC
array at a configurable utilization, stages 2 and 3 divide sorter
cycles and blended pairs over 4-way parallel units. Frame time is the
slower of the point-based and tile-based halves plus a fill/drain
constant, reflecting the frame-level pipeline between them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .projection import op_count
from .raster import FrameStats

TILE_HISTOGRAM_BIN = 100


@dataclass(frozen=True)
class PerfConfig:
    clock_hz: float = 800e6
    macs: int = 6
    stage1_utilization: float = 0.516
    sorter_parallelism: int = 4
    raster_parallelism: int = 4
    fill_drain_cycles: int = 10_000
    stage0_fill_latency: int = 4


DEFAULT_PERF = PerfConfig()


def stage1_ops(n_survivors: int, path: str = "zeroskip") -> int:
    """Total projection-datapath operations for n culling survivors."""
    if n_survivors < 0:
        raise ValidationError("survivor count must be non-negative")
    return op_count(path).total * n_survivors


@dataclass(frozen=True)
class StageProfile:
    stage: int
    items: int
    cycles: int
    utilization: float


@dataclass
class PerfReport:
    stages: list[StageProfile]
    frame_cycles: int
    clock_hz: float
    fps: float
    mpix_per_s: float
    width: int
    height: int
    tiles_x: int
    tiles_y: int
    culling_rate: float
    termination_rate: float
    tile_histogram: list[tuple[int, int]]  # (bin_start, tile count)
    sorter: dict

    @property
    def n_tiles(self) -> int:
        return self.tiles_x * self.tiles_y

    def to_dict(self) -> dict:
        return {
            "stages": [
                {
                    "stage": s.stage,
                    "items": s.items,
                    "cycles": s.cycles,
                    "utilization": s.utilization,
                }
                for s in self.stages
            ],
            "frame_cycles": self.frame_cycles,
            "clock_hz": self.clock_hz,
            "fps": self.fps,
            "mpix_per_s": self.mpix_per_s,
            "width": self.width,
            "height": self.height,
            "tiles": {"x": self.tiles_x, "y": self.tiles_y, "total": self.n_tiles},
            "culling_rate": self.culling_rate,
            "termination_rate": self.termination_rate,
            "tile_histogram": [[lo, n] for lo, n in self.tile_histogram],
            "sorter": self.sorter,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def tile_histogram(tile_counts: np.ndarray, bin_width: int = TILE_HISTOGRAM_BIN) -> list[tuple[int, int]]:
    """Tile-density histogram: (bin start, number of tiles) per occupied bin."""
    counts = np.asarray(tile_counts, dtype=np.int64)
    if counts.size == 0:
        return []
    bins = counts // bin_width
    out = np.bincount(bins)
    return [(int(b * bin_width), int(c)) for b, c in enumerate(out) if c > 0]


def model_frame(stats: FrameStats, clock_hz: float | None = None, cfg: PerfConfig = DEFAULT_PERF) -> PerfReport:
    """Estimate per-stage cycles, frame time, FPS, and pixel throughput."""
    clock = cfg.clock_hz if clock_hz is None else float(clock_hz)
    if clock <= 0:
        raise ValidationError("clock must be positive")

    n_total = stats.n_total
    n_survivors = stats.cull.total - stats.cull.culled
    s0_cycles = n_total + cfg.stage0_fill_latency if n_total else 0
    s0 = StageProfile(0, n_total, s0_cycles, n_total / s0_cycles if s0_cycles else 0.0)

    ops = stage1_ops(n_survivors, stats.path)
    s1_cycles = math.ceil(ops / (cfg.macs * cfg.stage1_utilization)) if ops else 0
    s1 = StageProfile(1, n_survivors, s1_cycles, cfg.stage1_utilization if ops else 0.0)

    keys_total = int(np.sum(stats.tile_counts))
    s2_cycles = math.ceil(stats.sorter_cycles_total / cfg.sorter_parallelism)
    s2 = StageProfile(2, keys_total, s2_cycles, 1.0 if s2_cycles else 0.0)

    blended = stats.render.blended
    s3_cycles = math.ceil(blended / cfg.raster_parallelism)
    s3 = StageProfile(3, blended, s3_cycles, 1.0 if s3_cycles else 0.0)

    preprocess = max(s0_cycles, s1_cycles)
    rendering = max(s2_cycles, s3_cycles)
    frame_cycles = max(preprocess, rendering) + cfg.fill_drain_cycles

    fps = clock / frame_cycles
    mpix = fps * stats.width * stats.height / 1e6

    from .projection import tile_grid

    tiles_x, tiles_y = tile_grid(stats.width, stats.height, stats.tile_size)
    usage = stats.sorter_usage
    return PerfReport(
        stages=[s0, s1, s2, s3],
        frame_cycles=frame_cycles,
        clock_hz=clock,
        fps=fps,
        mpix_per_s=mpix,
        width=stats.width,
        height=stats.height,
        tiles_x=tiles_x,
        tiles_y=tiles_y,
        culling_rate=stats.cull.rate,
        termination_rate=stats.render.termination_rate,
        tile_histogram=tile_histogram(stats.tile_counts),
        sorter={
            "max_tile_keys": usage.max_tile_keys,
            "tiles_overflowed": usage.tiles_overflowed,
            "overflow_entries_total": usage.overflow_entries_total,
            "overflow_excess_tiles": usage.overflow_excess_tiles,
            "cycles_total": stats.sorter_cycles_total,
        },
    )


@dataclass
class RateReport:
    culling_rate: float
    termination_rate: float
    tile_histogram: list[tuple[int, int]]
    cull_total: int
    cull_culled: int
    pairs: dict

    def to_dict(self) -> dict:
        return {
            "culling_rate": self.culling_rate,
            "termination_rate": self.termination_rate,
            "tile_histogram": [[lo, n] for lo, n in self.tile_histogram],
            "cull": {"total": self.cull_total, "culled": self.cull_culled},
            "pairs": self.pairs,
        }


def rate_report(stats: FrameStats) -> RateReport:
    """Culling/termination rates and tile density from render counters."""
    r = stats.render
    return RateReport(
        culling_rate=stats.cull.rate,
        termination_rate=r.termination_rate,
        tile_histogram=tile_histogram(stats.tile_counts),
        cull_total=stats.cull.total,
        cull_culled=stats.cull.culled,
        pairs={
            "blended": r.blended,
            "alpha_pruned": r.alpha_pruned,
            "early_terminated": r.early_terminated,
            "total": r.pairs_total,
        },
    )
