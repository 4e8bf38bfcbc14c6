"""Model compression: iterative significance pruning, SH-degree
truncation with accounting, k-means vector quantization of SH
coefficients and colors, and fp16 packing into a CompressedModel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .container import CompressedModel, container_nbytes
from .errors import ValidationError
from .projection import near_plane_mask, project_cloud
from .scene import (
    CameraView,
    GaussianCloud,
    RAW_PARAMS_PER_GAUSSIAN,
    SH_BASIS_COUNT,
    normalize_quaternions,
)

SIGNIFICANCE_VOLUME_EXPONENT = 0.1


@dataclass(frozen=True)
class PruneSchedule:
    """Per-iteration pruning rates, applied to the surviving count."""

    rates: tuple[float, ...] = (0.4, 0.4, 0.4, 0.2)

    def __post_init__(self) -> None:
        if not self.rates:
            raise ValidationError("prune schedule must contain at least one rate")
        for r in self.rates:
            if not 0.0 < r < 1.0:
                raise ValidationError(f"prune rate {r} outside (0, 1)")


DEFAULT_SCHEDULE = PruneSchedule()


def significance(
    cloud: GaussianCloud,
    views: Sequence[CameraView],
    volume_exponent: float = SIGNIFICANCE_VOLUME_EXPONENT,
) -> np.ndarray:
    """Per-Gaussian rendering significance.

    Sums covered-tile count x opacity x volume^beta over the views,
    using the renderer's own culling and footprint logic. Gaussians
    invisible in every view score zero.
    """
    if len(views) == 0:
        raise ValidationError("significance requires at least one view")
    n = len(cloud)
    volume = np.exp(np.sum(cloud.scales.astype(np.float64), axis=1))
    scores = np.zeros(n, dtype=np.float64)
    for cam in views:
        keep, _ = near_plane_mask(cloud, cam)
        splats = project_cloud(cloud, cam, keep_mask=keep)
        tiles = np.zeros(n, dtype=np.float64)
        tiles[splats.source_index] = splats.tiles_covered
        scores += tiles * cloud.opacities * (volume**volume_exponent)
    if not np.all(np.isfinite(scores)):
        raise ValidationError("non-finite significance score")
    return scores


def survivor_count(n: int, rate: float) -> int:
    """Survivors after one pruning step: round((1 - rate) * n), half up."""
    return int(np.floor((1.0 - rate) * n + 0.5))


def prune_step(cloud: GaussianCloud, scores: np.ndarray, rate: float) -> GaussianCloud:
    """Drop the lowest-scoring Gaussians, lowest index first on ties.

    Survivors keep their relative order.
    """
    if not 0.0 < rate < 1.0:
        raise ValidationError(f"prune rate {rate} outside (0, 1)")
    n = len(cloud)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (n,):
        raise ValidationError(f"scores shape {scores.shape} != ({n},)")
    n_remove = n - survivor_count(n, rate)
    order = np.lexsort((np.arange(n), scores))  # score asc, index asc
    removed = order[:n_remove]
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    return cloud.take(np.flatnonzero(keep))


@dataclass(frozen=True)
class ShAccounting:
    """Effect of an SH degree reduction on the 59-parameter Gaussian."""

    elements_removed: int
    param_reduction: float
    compute_reduction: float


# Recorded per-step compute savings; the 1->0 step is extrapolated from
# the element ratio. Steps compose additively against the degree-3 cost.
_SH_COMPUTE_STEP = {(3, 2): 0.35, (2, 1): 0.17, (1, 0): 0.10}


def truncate_sh(cloud: GaussianCloud, target_degree: int) -> tuple[GaussianCloud, ShAccounting]:
    """Hard-truncate SH coefficients above target_degree.

    Accounting is measured against the full 59-parameter Gaussian
    (3 mean + 3 scale + 4 rotation + 1 opacity + 48 SH).
    """
    current = cloud.sh_degree
    if target_degree not in SH_BASIS_COUNT:
        raise ValidationError(f"target degree {target_degree} outside 0..3")
    if target_degree > current:
        raise ValidationError(f"target degree {target_degree} above current {current}")
    b_from, b_to = SH_BASIS_COUNT[current], SH_BASIS_COUNT[target_degree]
    removed = 3 * (b_from - b_to)
    compute = 0.0
    for d in range(current, target_degree, -1):
        compute += _SH_COMPUTE_STEP[(d, d - 1)]
    out = GaussianCloud(
        means=cloud.means,
        scales=cloud.scales,
        rotations=cloud.rotations,
        opacities=cloud.opacities,
        sh=np.ascontiguousarray(cloud.sh[:, :, :b_to]),
    )
    acct = ShAccounting(
        elements_removed=removed,
        param_reduction=removed / RAW_PARAMS_PER_GAUSSIAN,
        compute_reduction=compute,
    )
    return out, acct


def _pairwise_sq_dists(vectors: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Exact squared distances (M, K); broadcasted, chunk at the caller."""
    diff = vectors[:, None, :] - codebook[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff, optimize=False)


def vq_assign(vectors: np.ndarray, codebook: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Nearest-codeword index per vector; ties go to the lowest index."""
    vectors = np.asarray(vectors, dtype=np.float64)
    codebook = np.asarray(codebook, dtype=np.float64)
    if vectors.ndim != 2 or codebook.ndim != 2 or vectors.shape[1] != codebook.shape[1]:
        raise ValidationError(
            f"dimension mismatch: vectors {vectors.shape} vs codebook {codebook.shape}"
        )
    out = np.empty(vectors.shape[0], dtype=np.int64)
    for lo in range(0, vectors.shape[0], chunk):
        hi = min(lo + chunk, vectors.shape[0])
        out[lo:hi] = np.argmin(_pairwise_sq_dists(vectors[lo:hi], codebook), axis=1)
    return out


def _farthest_point_init(vectors: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic greedy farthest-point seeding from a fixed RNG."""
    m = vectors.shape[0]
    rng = np.random.default_rng(seed)
    picks = np.empty(k, dtype=np.int64)
    picks[0] = rng.integers(m)
    min_d = np.sum((vectors - vectors[picks[0]]) ** 2, axis=1)
    for j in range(1, k):
        picks[j] = int(np.argmax(min_d))
        np.minimum(min_d, np.sum((vectors - vectors[picks[j]]) ** 2, axis=1), out=min_d)
    return vectors[picks].copy()


def vq_train(
    vectors: np.ndarray,
    k: int,
    iters: int = 20,
    seed: int = 0,
) -> tuple[np.ndarray, list[float]]:
    """Train a k-means codebook under squared-error distortion.

    Returns (codebook (k, D), mse history). The history records mean
    squared quantization error at each assignment, and is non-increasing.
    Duplicate codewords are permitted when k exceeds the number of
    distinct vectors.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise ValidationError("vq_train needs a non-empty (M, D) matrix")
    if k < 1:
        raise ValidationError("codebook size must be >= 1")
    if iters < 1:
        raise ValidationError("iteration count must be >= 1")
    if vectors.shape[1] == 0:
        return np.zeros((k, 0)), [0.0]

    codebook = _farthest_point_init(vectors, k, seed)
    history: list[float] = []
    prev_assign = None
    for _ in range(iters):
        assign = vq_assign(vectors, codebook)
        err = vectors - codebook[assign]
        history.append(float(np.mean(np.sum(err * err, axis=1))))
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        sums = np.zeros_like(codebook)
        np.add.at(sums, assign, vectors)
        nonempty = counts > 0
        codebook[nonempty] = sums[nonempty] / counts[nonempty, None]
    return codebook, history


def has_duplicate_rows(codebook: np.ndarray) -> bool:
    return len(np.unique(codebook, axis=0)) < codebook.shape[0]


@dataclass
class CompressionReport:
    """Sizes, ratios, and quantization error of one compression run."""

    raw_bytes: int
    container_bytes: int
    ratio: float
    schedule: tuple[float, ...]
    survivors_per_step: list[int]
    target_degree: int
    sh_accounting: ShAccounting
    stage_bytes: dict[str, int]
    dc_mse: list[float]
    sh_mse: list[float]
    dc_duplicates: bool
    sh_duplicates: bool

    def to_dict(self) -> dict:
        return {
            "raw_bytes": self.raw_bytes,
            "container_bytes": self.container_bytes,
            "ratio": self.ratio,
            "schedule": list(self.schedule),
            "survivors_per_step": self.survivors_per_step,
            "target_degree": self.target_degree,
            "sh_accounting": {
                "elements_removed": self.sh_accounting.elements_removed,
                "param_reduction": self.sh_accounting.param_reduction,
                "compute_reduction": self.sh_accounting.compute_reduction,
            },
            "stage_bytes": self.stage_bytes,
            "vq": {
                "dc_mse": self.dc_mse,
                "sh_mse": self.sh_mse,
                "dc_duplicates": self.dc_duplicates,
                "sh_duplicates": self.sh_duplicates,
            },
        }


def _raw_bytes(n: int, basis: int = 16) -> int:
    return n * (11 + 3 * basis) * 4


def compress(
    cloud: GaussianCloud,
    views: Sequence[CameraView],
    schedule: PruneSchedule | Sequence[float] | None = DEFAULT_SCHEDULE,
    target_degree: int = 1,
    k_dc: int = 256,
    k_sh: int = 256,
    seed: int = 0,
    vq_iters: int = 20,
    finetune: Callable[[GaussianCloud], GaussianCloud] | None = None,
) -> tuple[CompressedModel, CompressionReport]:
    """Run the full pipeline: prune, reduce SH degree, quantize, pack.

    ``finetune`` is called on the surviving cloud after each prune step;
    it defaults to the identity (no training loop here), which costs
    some reconstruction quality versus a fine-tuned model.
    """
    if isinstance(schedule, PruneSchedule):
        rates: tuple[float, ...] = schedule.rates
    elif schedule is None:
        rates = ()
    else:
        rates = tuple(schedule)

    n_original = len(cloud)
    survivors = [n_original]
    for rate in rates:
        scores = significance(cloud, views)
        cloud = prune_step(cloud, scores, rate)
        if finetune is not None:
            cloud = finetune(cloud)
        survivors.append(len(cloud))

    pruned_n = len(cloud)
    cloud, acct = truncate_sh(cloud, target_degree)
    basis = SH_BASIS_COUNT[target_degree]
    n = len(cloud)

    dc = cloud.sh[:, :, 0].reshape(n, 3).astype(np.float64)
    dc_codebook, dc_mse = vq_train(dc, k_dc, iters=vq_iters, seed=seed)
    dc_index = vq_assign(dc, dc_codebook)

    if basis > 1:
        rest = cloud.sh[:, :, 1:].reshape(n, 3 * (basis - 1)).astype(np.float64)
        sh_codebook, sh_mse = vq_train(rest, k_sh, iters=vq_iters, seed=seed + 1)
        sh_index = vq_assign(rest, sh_codebook)
    else:
        sh_codebook = np.zeros((1, 0))
        sh_index = np.zeros(n, dtype=np.int64)
        sh_mse = [0.0]

    model = CompressedModel(
        count=n,
        sh_degree=target_degree,
        positions=cloud.means.astype(np.float16),
        scales=cloud.scales.astype(np.float16),
        rotations=cloud.rotations.astype(np.float16),
        opacities=cloud.opacities.astype(np.float16),
        dc_codebook=dc_codebook.astype(np.float16),
        sh_codebook=sh_codebook.astype(np.float16),
        dc_index=dc_index.astype(np.uint32),
        sh_index=sh_index.astype(np.uint32),
    )

    raw = _raw_bytes(n_original)
    packed = container_nbytes(model)
    report = CompressionReport(
        raw_bytes=raw,
        container_bytes=packed,
        ratio=raw / packed if packed else float("inf"),
        schedule=rates,
        survivors_per_step=survivors,
        target_degree=target_degree,
        sh_accounting=acct,
        stage_bytes={
            "original": raw,
            "pruned": _raw_bytes(pruned_n),
            "sh_truncated": pruned_n * (11 + 3 * basis) * 4,
            "container": packed,
        },
        dc_mse=dc_mse,
        sh_mse=sh_mse,
        dc_duplicates=has_duplicate_rows(model.dc_codebook),
        sh_duplicates=has_duplicate_rows(model.sh_codebook),
    )
    return model, report


def decompress(model: CompressedModel) -> GaussianCloud:
    """Reconstruct a renderable cloud via codebook lookup and f32 casts."""
    n = model.count
    basis = SH_BASIS_COUNT[model.sh_degree]
    sh = np.zeros((n, 3, basis), dtype=np.float32)
    sh[:, :, 0] = model.dc_codebook.astype(np.float32)[model.dc_index]
    if basis > 1:
        rest = model.sh_codebook.astype(np.float32)[model.sh_index]
        sh[:, :, 1:] = rest.reshape(n, 3, basis - 1)
    return GaussianCloud(
        means=model.positions.astype(np.float32),
        scales=model.scales.astype(np.float32),
        rotations=normalize_quaternions(model.rotations.astype(np.float32)),
        opacities=np.clip(model.opacities.astype(np.float32), 0.0, 1.0),
        sh=sh,
    )
