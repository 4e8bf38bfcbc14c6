"""Pipeline stage 2: tile binning and comparison-free depth sorting.

Keys are 15-bit half-precision depth patterns (the sign bit is dropped:
all surviving depths are positive). The sorter repeatedly extracts the
largest key by filtering candidates through (3, 4, 4, 4) bit groups,
resolving duplicates toward the lowest element index with
``fo & (-fo)``. Sorting the bitwise complement of the code makes the
max-first hardware emit splats front to back.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError
from .projection import Splats, tile_grid

DEPTH_CODE_BITS = 15
DEPTH_CODE_MASK = (1 << DEPTH_CODE_BITS) - 1
FP16_MAX = np.float16(65504.0)


def depth_codes(depths: np.ndarray) -> np.ndarray:
    """Vectorised 15-bit depth codes; saturates above the fp16 range."""
    d = np.asarray(depths, dtype=np.float32)
    if d.size and (not np.all(np.isfinite(d)) or np.any(d <= 0)):
        raise ValidationError("depth codes require positive finite depths")
    with np.errstate(over="ignore"):
        h = d.astype(np.float16)
    h = np.where(np.isinf(h), FP16_MAX, h)
    return h.view(np.uint16)


def depth_to_code(depth: float) -> int:
    """15-bit code of one positive depth; ordering of codes matches depths."""
    return int(depth_codes(np.array([depth]))[0])


@dataclass
class SorterConfig:
    """Capacity and timing model of the hardware sorting unit."""

    sub_sorters: int = 4
    sub_capacity: int = 256
    per_tile_local: int = 2000
    bit_groups: tuple[int, ...] = (3, 4, 4, 4)
    global_overflow_entries: int = 3072  # 12 KB keys / 4 B per entry
    merge_overhead_cycles: int = 8  # per batch when batching kicks in

    def __post_init__(self) -> None:
        if sum(self.bit_groups) != DEPTH_CODE_BITS:
            raise ValidationError(f"bit groups {self.bit_groups} must sum to {DEPTH_CODE_BITS}")

    @property
    def batch_size(self) -> int:
        return self.sub_sorters * self.sub_capacity


DEFAULT_SORTER = SorterConfig()


@dataclass
class EvtState:
    """Element vector table: bit i set while element i is unsorted."""

    evt: int
    emitted: int = 0

    @classmethod
    def full(cls, n: int) -> "EvtState":
        return cls(evt=(1 << n) - 1)

    @property
    def pending(self) -> int:
        return self.evt.bit_count()


def evt_select_max(
    codes, evt: int, bit_groups: tuple[int, ...] = (3, 4, 4, 4)
) -> tuple[int, int]:
    """One selection step: index of the largest code among EVT candidates.

    Candidates are narrowed one bit group at a time, most significant
    first. If several elements share the maximum, the surviving mask is
    reduced with fo & (-fo), keeping only its lowest set bit, so ties
    break toward the smallest index. Returns (index, updated evt).
    """
    if evt == 0:
        raise ValidationError("EVT is empty; nothing left to select")
    fo = evt
    shift = DEPTH_CODE_BITS
    for group in bit_groups:
        shift -= group
        mask = (1 << group) - 1
        best = -1
        narrowed = 0
        m = fo
        while m:
            bit = m & (-m)
            i = bit.bit_length() - 1
            gv = (int(codes[i]) >> shift) & mask
            if gv > best:
                best = gv
                narrowed = bit
            elif gv == best:
                narrowed |= bit
            m ^= bit
        fo = narrowed
    iso = fo & (-fo)
    return iso.bit_length() - 1, evt & ~iso


@njit(cache=True)
def _selection_sort_desc(keys, lo, hi, out, out_pos):  # pragma: no cover - jitted
    """Emit indices of keys[lo:hi] in descending order, lowest index first on ties."""
    n = hi - lo
    emitted = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        best = -1
        best_i = -1
        for i in range(n):
            if not emitted[i]:
                k = int(keys[lo + i])
                if k > best:
                    best = k
                    best_i = i
        emitted[best_i] = True
        out[out_pos + t] = lo + best_i


@njit(cache=True)
def _evt_sort_desc(keys, batch_size, out):  # pragma: no cover - jitted
    """Batched max-first sort: per-batch selection, then a k-way merge."""
    n = keys.shape[0]
    if n == 0:
        return
    n_batches = (n + batch_size - 1) // batch_size
    if n_batches == 1:
        _selection_sort_desc(keys, 0, n, out, 0)
        return
    runs = np.empty(n, dtype=np.int64)
    for b in range(n_batches):
        lo = b * batch_size
        hi = min(n, lo + batch_size)
        _selection_sort_desc(keys, lo, hi, runs, lo)
    ptr = np.zeros(n_batches, dtype=np.int64)
    for t in range(n):
        best = -1
        best_b = -1
        for b in range(n_batches):
            lo = b * batch_size
            hi = min(n, lo + batch_size)
            p = ptr[b]
            if p < hi - lo:
                k = int(keys[runs[lo + p]])
                if k > best:
                    best = k
                    best_b = b
        lo = best_b * batch_size
        out[t] = runs[lo + ptr[best_b]]
        ptr[best_b] += 1


@dataclass
class OccupancyRecord:
    """Buffer usage for one tile's sort."""

    n_keys: int
    local_fill: int
    overflow_used: int
    overflow_excess: int

    @classmethod
    def for_count(cls, n: int, cfg: SorterConfig) -> "OccupancyRecord":
        overflow = max(0, n - cfg.per_tile_local)
        return cls(
            n_keys=n,
            local_fill=min(n, cfg.per_tile_local),
            overflow_used=overflow,
            overflow_excess=max(0, overflow - cfg.global_overflow_entries),
        )


def sort_tile(
    codes: np.ndarray,
    values: np.ndarray,
    cfg: SorterConfig = DEFAULT_SORTER,
    order: str = "front_to_back",
) -> tuple[np.ndarray, OccupancyRecord]:
    """Sort one tile's keys; returns (values in emit order, occupancy).

    front_to_back emits ascending depth, ties by insertion order. The
    functional result is a correct total sort regardless of buffer
    capacity; capacity overruns are recorded, not errors.
    """
    codes = np.asarray(codes, dtype=np.uint16)
    values = np.asarray(values)
    if codes.shape != values.shape:
        raise ValidationError("codes and values must have matching length")
    if np.any(codes > DEPTH_CODE_MASK):
        raise ValidationError("depth codes exceed 15 bits")
    if order == "front_to_back":
        keys = (~codes) & np.uint16(DEPTH_CODE_MASK)
    elif order == "back_to_front":
        keys = codes
    else:
        raise ValueError(f"unknown sort order {order!r}")
    out = np.empty(len(codes), dtype=np.int64)
    _evt_sort_desc(keys, cfg.batch_size, out)
    return values[out], OccupancyRecord.for_count(len(codes), cfg)


def sorter_cycles(n_keys: int, cfg: SorterConfig = DEFAULT_SORTER) -> int:
    """Modeled cycles to sort one tile: 2 per output plus batching overhead."""
    if n_keys < 0:
        raise ValidationError("key count must be non-negative")
    if n_keys == 0:
        return 0
    n_batches = -(-n_keys // cfg.batch_size)
    cycles = 2 * n_keys
    if n_batches > 1:
        cycles += cfg.merge_overhead_cycles * n_batches
    return cycles


@dataclass(frozen=True)
class SortKey:
    """One sorter entry: where (tile), when (depth code), and which splat."""

    tile_id: int
    depth_code: int
    value: int


@dataclass
class TileBins:
    """CSR layout of per-tile keys over the full tile grid."""

    tiles_x: int
    tiles_y: int
    counts: np.ndarray  # (T,) keys per tile
    offsets: np.ndarray  # (T+1,) CSR offsets into codes/values
    codes: np.ndarray  # (K,) uint16 depth codes
    values: np.ndarray  # (K,) splat indices

    @property
    def n_tiles(self) -> int:
        return self.tiles_x * self.tiles_y

    def tile(self, tile_id: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets[tile_id], self.offsets[tile_id + 1]
        return self.codes[lo:hi], self.values[lo:hi]

    def keys_for(self, tile_id: int) -> list[SortKey]:
        codes, values = self.tile(tile_id)
        return [SortKey(tile_id, int(c), int(v)) for c, v in zip(codes, values)]


def bin_tiles(splats: Splats, grid: tuple[int, int]) -> TileBins:
    """Emit one <tile, depth> key per (splat, covered tile) pair.

    Keys within a tile keep splat order, which is what gives equal-depth
    codes their stable front-to-back tie behaviour downstream.
    """
    tiles_x, tiles_y = grid
    n_tiles = tiles_x * tiles_y
    tr = splats.tile_range
    widths = np.maximum(tr[:, 2] - tr[:, 0] + 1, 0).astype(np.int64)
    heights = np.maximum(tr[:, 3] - tr[:, 1] + 1, 0).astype(np.int64)
    areas = widths * heights
    total = int(areas.sum())
    if total == 0:
        return TileBins(
            tiles_x,
            tiles_y,
            counts=np.zeros(n_tiles, dtype=np.int64),
            offsets=np.zeros(n_tiles + 1, dtype=np.int64),
            codes=np.zeros(0, dtype=np.uint16),
            values=np.zeros(0, dtype=np.int64),
        )
    splat_ids = np.repeat(np.arange(len(splats), dtype=np.int64), areas)
    starts = np.concatenate([[0], np.cumsum(areas)[:-1]])
    rank = np.arange(total, dtype=np.int64) - np.repeat(starts, areas)
    w = widths[splat_ids]
    tx = tr[splat_ids, 0] + rank % w
    ty = tr[splat_ids, 1] + rank // w
    tile_ids = ty * tiles_x + tx
    if np.any((tx < 0) | (tx >= tiles_x) | (ty < 0) | (ty >= tiles_y)):
        raise ValidationError("splat tile range extends outside the grid")

    codes_per_splat = depth_codes(splats.depth)
    order = np.argsort(tile_ids, kind="stable")
    counts = np.bincount(tile_ids, minlength=n_tiles).astype(np.int64)
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return TileBins(
        tiles_x,
        tiles_y,
        counts=counts,
        offsets=offsets,
        codes=codes_per_splat[splat_ids[order]],
        values=splat_ids[order],
    )


def warm_up() -> None:
    """Trigger JIT compilation of the sorter kernels."""
    dummy = np.array([3, 1, 2], dtype=np.uint16)
    out = np.empty(3, dtype=np.int64)
    _evt_sort_desc(dummy, 2, out)
    _evt_sort_desc(dummy, 8, out)
