"""Pipeline stages 0-1: near-plane culling and 3D-to-2D splat projection.

Two projection paths are provided. ``full`` multiplies through the
structurally zero entries of the projection Jacobian; ``zeroskip`` elides
those products. Both evaluate the surviving terms in the same f32 order,
so their outputs are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import CameraView, CullStats, Gaussian3D, GaussianCloud
from .sh import evaluate_sh_many

# low-pass dilation added to the projected covariance diagonal (pixels^2)
COV_DILATION = np.float32(0.3)
# footprint extent in standard deviations, for radii and bounding boxes
SIGMA_EXTENT = 3.0
DEFAULT_TILE_SIZE = 16


@dataclass(frozen=True)
class OpTally:
    """Arithmetic operation counts of the modeled projection datapath."""

    add: int
    mul: int
    div: int
    sub: int

    @property
    def total(self) -> int:
        return self.add + self.mul + self.div + self.sub


# Per-Gaussian costs of the hardware projection unit with and without
# multiplying through the zero Jacobian entries.
PROJECTION_OP_COUNTS = {
    "full": OpTally(add=78, mul=112, div=7, sub=1),
    "zeroskip": OpTally(add=46, mul=42, div=5, sub=1),
}

# Recorded savings row for the zeroskip datapath. The add column is two
# below the arithmetic difference of the tallies above; the row is kept
# as recorded rather than recomputed.
ZEROSKIP_REDUCTION_ROW = {"total": 104, "add": 30, "mul": 70, "div": 2, "sub": 0}


def op_count(path: str) -> OpTally:
    """Static per-Gaussian operation tally of the projection datapath."""
    try:
        return PROJECTION_OP_COUNTS[path]
    except KeyError:
        raise ValueError(f"unknown projection path {path!r}; expected 'full' or 'zeroskip'")


@dataclass(frozen=True)
class Splat2D:
    """A Gaussian projected onto the image plane."""

    mean2d: np.ndarray  # (u, v) pixels
    depth: float  # camera-space z
    conic: np.ndarray  # (a, b, c): upper triangle of the inverse 2D covariance
    color: np.ndarray  # RGB in [0, 1]
    opacity: float
    radius: int  # pixels
    tile_range: tuple[int, int, int, int]  # inclusive (tx0, ty0, tx1, ty1)


EMPTY_TILE_RANGE = (0, 0, -1, -1)


@dataclass
class Splats:
    """Struct-of-arrays batch of projected splats."""

    mean2d: np.ndarray  # (M, 2) f32
    depth: np.ndarray  # (M,) f32
    conic: np.ndarray  # (M, 3) f32
    color: np.ndarray  # (M, 3) f32
    opacity: np.ndarray  # (M,) f32
    radius: np.ndarray  # (M,) i32
    tile_range: np.ndarray  # (M, 4) i32, inclusive; x1 < x0 means off-screen
    source_index: np.ndarray  # (M,) index into the originating cloud

    def __len__(self) -> int:
        return self.mean2d.shape[0]

    def item(self, i: int) -> Splat2D:
        return Splat2D(
            mean2d=self.mean2d[i],
            depth=float(self.depth[i]),
            conic=self.conic[i],
            color=self.color[i],
            opacity=float(self.opacity[i]),
            radius=int(self.radius[i]),
            tile_range=tuple(int(v) for v in self.tile_range[i]),
        )

    @property
    def tiles_covered(self) -> np.ndarray:
        """Number of grid tiles each splat overlaps (0 when off-screen)."""
        w = self.tile_range[:, 2] - self.tile_range[:, 0] + 1
        h = self.tile_range[:, 3] - self.tile_range[:, 1] + 1
        return np.maximum(w, 0) * np.maximum(h, 0)


def quat_to_rotmat(rotations: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions (w, x, y, z); (N, 3, 3) f32."""
    q = np.asarray(rotations, dtype=np.float32)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((q.shape[0], 3, 3), dtype=np.float32)
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def _scaled_axes(cloud: GaussianCloud) -> np.ndarray:
    """L = R @ diag(exp(scale)): columns are the scaled ellipsoid axes."""
    rot = quat_to_rotmat(cloud.rotations)
    s = np.exp(cloud.scales).astype(np.float32)
    return rot * s[:, None, :]


def camera_depths(cloud: GaussianCloud, cam: CameraView) -> np.ndarray:
    """Camera-space z of every Gaussian mean."""
    row = cam.world_to_camera[2]
    return (cloud.means @ row[:3] + row[3]).astype(np.float32)


def near_plane_mask(cloud: GaussianCloud, cam: CameraView) -> tuple[np.ndarray, CullStats]:
    """Keep mask for the AABB depth-interval near-plane test.

    A Gaussian is culled when the far end of its 3-sigma bounding box,
    measured along the camera z axis, is in front of the near plane:
    z + dz < z_near.
    """
    n = len(cloud)
    if n == 0:
        return np.zeros(0, dtype=bool), CullStats(0, 0)
    z = camera_depths(cloud, cam)
    axes = _scaled_axes(cloud)
    # world AABB half-extents of the 3-sigma ellipsoid
    half = SIGMA_EXTENT * np.sqrt(np.sum(axes * axes, axis=2))
    dz = half @ np.abs(cam.world_to_camera[2, :3])
    keep = (z + dz.astype(np.float32)) >= cam.z_near
    stats = CullStats(total=n, culled=int(n - keep.sum()))
    return keep, stats


def cull_near_plane(g: Gaussian3D, cam: CameraView) -> bool:
    """True when the Gaussian is culled by the near-plane test."""
    cloud = GaussianCloud(
        means=g.mean[None],
        scales=g.scale[None],
        rotations=g.rotation[None],
        opacities=np.array([g.opacity]),
        sh=g.sh[None],
    )
    keep, _ = near_plane_mask(cloud, cam)
    return not bool(keep[0])


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def _round_fp16(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return x.astype(np.float16).astype(np.float32)


def _project_arrays(
    means: np.ndarray,
    axes: np.ndarray,
    cam: CameraView,
    path: str,
    fp16_emulation: bool = False,
):
    """Core projection datapath over pre-culled Gaussians.

    Returns (u, v, conic(3), radius_f, valid) where valid marks splats with
    a positive-definite dilated covariance.
    """
    if path not in ("full", "zeroskip"):
        raise ValueError(f"unknown projection path {path!r}")
    q = _round_fp16 if fp16_emulation else _identity

    w2c = cam.world_to_camera
    w00, w01, w02 = (np.float32(w2c[0, k]) for k in range(3))
    w10, w11, w12 = (np.float32(w2c[1, k]) for k in range(3))
    w20, w21, w22 = (np.float32(w2c[2, k]) for k in range(3))
    fx = np.float32(cam.fx)
    fy = np.float32(cam.fy)
    zero = np.float32(0.0)

    mx, my, mz = means[:, 0], means[:, 1], means[:, 2]
    x_cam = q(q(q(w00 * mx) + q(w01 * my)) + q(q(w02 * mz) + np.float32(w2c[0, 3])))
    y_cam = q(q(q(w10 * mx) + q(w11 * my)) + q(q(w12 * mz) + np.float32(w2c[1, 3])))
    z_cam = q(q(q(w20 * mx) + q(w21 * my)) + q(q(w22 * mz) + np.float32(w2c[2, 3])))

    u = q(q(fx * q(x_cam / z_cam)) + np.float32(cam.cx))
    v = q(q(fy * q(y_cam / z_cam)) + np.float32(cam.cy))

    # Jacobian of the pinhole map; entries (0,1) and (1,0) are identically 0
    j00 = q(fx / z_cam)
    j11 = q(fy / z_cam)
    z2 = q(z_cam * z_cam)
    j02 = q(-(q(fx * x_cam) / z2))
    j12 = q(-(q(fy * y_cam) / z2))

    if path == "full":
        t00 = q(q(q(j00 * w00) + q(zero * w10)) + q(j02 * w20))
        t01 = q(q(q(j00 * w01) + q(zero * w11)) + q(j02 * w21))
        t02 = q(q(q(j00 * w02) + q(zero * w12)) + q(j02 * w22))
        t10 = q(q(q(zero * w00) + q(j11 * w10)) + q(j12 * w20))
        t11 = q(q(q(zero * w01) + q(j11 * w11)) + q(j12 * w21))
        t12 = q(q(q(zero * w02) + q(j11 * w12)) + q(j12 * w22))
    else:
        t00 = q(q(j00 * w00) + q(j02 * w20))
        t01 = q(q(j00 * w01) + q(j02 * w21))
        t02 = q(q(j00 * w02) + q(j02 * w22))
        t10 = q(q(j11 * w10) + q(j12 * w20))
        t11 = q(q(j11 * w11) + q(j12 * w21))
        t12 = q(q(j11 * w12) + q(j12 * w22))

    # world covariance, symmetric entries of L L^T
    lmat = axes
    s00 = q(q(q(lmat[:, 0, 0] * lmat[:, 0, 0]) + q(lmat[:, 0, 1] * lmat[:, 0, 1])) + q(lmat[:, 0, 2] * lmat[:, 0, 2]))
    s01 = q(q(q(lmat[:, 0, 0] * lmat[:, 1, 0]) + q(lmat[:, 0, 1] * lmat[:, 1, 1])) + q(lmat[:, 0, 2] * lmat[:, 1, 2]))
    s02 = q(q(q(lmat[:, 0, 0] * lmat[:, 2, 0]) + q(lmat[:, 0, 1] * lmat[:, 2, 1])) + q(lmat[:, 0, 2] * lmat[:, 2, 2]))
    s11 = q(q(q(lmat[:, 1, 0] * lmat[:, 1, 0]) + q(lmat[:, 1, 1] * lmat[:, 1, 1])) + q(lmat[:, 1, 2] * lmat[:, 1, 2]))
    s12 = q(q(q(lmat[:, 1, 0] * lmat[:, 2, 0]) + q(lmat[:, 1, 1] * lmat[:, 2, 1])) + q(lmat[:, 1, 2] * lmat[:, 2, 2]))
    s22 = q(q(q(lmat[:, 2, 0] * lmat[:, 2, 0]) + q(lmat[:, 2, 1] * lmat[:, 2, 1])) + q(lmat[:, 2, 2] * lmat[:, 2, 2]))

    u00 = q(q(q(t00 * s00) + q(t01 * s01)) + q(t02 * s02))
    u01 = q(q(q(t00 * s01) + q(t01 * s11)) + q(t02 * s12))
    u02 = q(q(q(t00 * s02) + q(t01 * s12)) + q(t02 * s22))
    u10 = q(q(q(t10 * s00) + q(t11 * s01)) + q(t12 * s02))
    u11 = q(q(q(t10 * s01) + q(t11 * s11)) + q(t12 * s12))
    u12 = q(q(q(t10 * s02) + q(t11 * s12)) + q(t12 * s22))

    cov_a = q(q(q(u00 * t00) + q(u01 * t01)) + q(u02 * t02))
    cov_b = q(q(q(u00 * t10) + q(u01 * t11)) + q(u02 * t12))
    cov_c = q(q(q(u10 * t10) + q(u11 * t11)) + q(u12 * t12))

    with np.errstate(over="ignore", invalid="ignore"):
        a_d = q(cov_a + COV_DILATION)
        c_d = q(cov_c + COV_DILATION)
        det = q(q(a_d * c_d) - q(cov_b * cov_b))
        valid = np.isfinite(det) & (det > 0)
        det_safe = np.where(valid, det, np.float32(1.0))
        inv_det = q(np.float32(1.0) / det_safe)
        conic = np.stack(
            [q(c_d * inv_det), q(-(cov_b * inv_det)), q(a_d * inv_det)], axis=1
        ).astype(np.float32)

        mid = q(np.float32(0.5) * q(a_d + c_d))
        disc = np.maximum(q(q(mid * mid) - det), np.float32(0.0))
        lam_max = q(mid + q(np.sqrt(disc)))
        radius_f = q(np.float32(SIGMA_EXTENT) * q(np.sqrt(np.maximum(lam_max, np.float32(0.0)))))
        valid &= np.isfinite(radius_f) & np.all(np.isfinite(conic), axis=1)

    return u, v, conic, radius_f, valid


def tile_grid(width: int, height: int, tile_size: int = DEFAULT_TILE_SIZE) -> tuple[int, int]:
    """Tile counts (tiles_x, tiles_y) covering the image."""
    return (-(-width // tile_size), -(-height // tile_size))


def _tile_ranges(
    u: np.ndarray,
    v: np.ndarray,
    radius: np.ndarray,
    cam: CameraView,
    tile_size: int,
) -> np.ndarray:
    """Inclusive tile rectangles; off-screen splats get an empty range."""
    tiles_x, tiles_y = tile_grid(cam.width, cam.height, tile_size)
    x0 = np.floor((u - radius) / tile_size).astype(np.int64)
    x1 = np.floor((u + radius) / tile_size).astype(np.int64)
    y0 = np.floor((v - radius) / tile_size).astype(np.int64)
    y1 = np.floor((v + radius) / tile_size).astype(np.int64)
    tr = np.stack(
        [
            np.clip(x0, 0, tiles_x - 1),
            np.clip(y0, 0, tiles_y - 1),
            np.clip(x1, 0, tiles_x - 1),
            np.clip(y1, 0, tiles_y - 1),
        ],
        axis=1,
    ).astype(np.int32)
    off = (x1 < 0) | (x0 >= tiles_x) | (y1 < 0) | (y0 >= tiles_y)
    tr[off] = np.array(EMPTY_TILE_RANGE, dtype=np.int32)
    return tr


def project_cloud(
    cloud: GaussianCloud,
    cam: CameraView,
    keep_mask: np.ndarray | None = None,
    path: str = "zeroskip",
    tile_size: int = DEFAULT_TILE_SIZE,
    fp16_emulation: bool = False,
) -> Splats:
    """Project culling survivors to screen-space splats.

    Splats whose center depth is in front of the near plane (or whose
    dilated covariance degenerates) are dropped here so every emitted
    splat has depth >= z_near and a positive-definite conic.
    """
    n = len(cloud)
    if keep_mask is None:
        keep_mask = np.ones(n, dtype=bool)
    idx = np.flatnonzero(keep_mask)
    z = camera_depths(cloud, cam)[idx]
    front = z >= cam.z_near
    idx = idx[front]
    z = z[front]

    means = cloud.means[idx]
    axes = _scaled_axes(cloud.take(idx))
    u, v, conic, radius_f, valid = _project_arrays(means, axes, cam, path, fp16_emulation)
    if not np.all(valid):
        idx = idx[valid]
        z = z[valid]
        means = means[valid]
        u, v, conic, radius_f = u[valid], v[valid], conic[valid], radius_f[valid]

    radius = np.ceil(radius_f).astype(np.int32)
    tr = _tile_ranges(u, v, radius, cam, tile_size)

    centers = means.astype(np.float64) - cam.center.astype(np.float64)
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    dirs = (centers / norms).astype(np.float32)
    color = evaluate_sh_many(cloud.sh[idx], dirs)

    return Splats(
        mean2d=np.stack([u, v], axis=1).astype(np.float32),
        depth=z.astype(np.float32),
        conic=conic,
        color=color,
        opacity=cloud.opacities[idx].astype(np.float32),
        radius=radius,
        tile_range=tr,
        source_index=idx.astype(np.int64),
    )


def _project_single(g: Gaussian3D, cam: CameraView, path: str) -> Splat2D:
    cloud = GaussianCloud(
        means=g.mean[None],
        scales=g.scale[None],
        rotations=g.rotation[None],
        opacities=np.array([g.opacity]),
        sh=g.sh[None],
    )
    splats = project_cloud(cloud, cam, path=path)
    if len(splats) == 0:
        raise ValidationError("Gaussian center is in front of the near plane; nothing to project")
    return splats.item(0)


def project_full(g: Gaussian3D, cam: CameraView) -> Splat2D:
    """Projection multiplying through the zero Jacobian entries."""
    return _project_single(g, cam, "full")


def project_zeroskip(g: Gaussian3D, cam: CameraView) -> Splat2D:
    """Projection eliding the structurally zero Jacobian products."""
    return _project_single(g, cam, "zeroskip")


def jacobian(mean_cam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """Analytic 2x3 Jacobian of the pinhole map at a camera-space point."""
    x, y, z = (float(c) for c in mean_cam)
    if z == 0:
        raise ValidationError("Jacobian undefined at z = 0")
    return np.array(
        [
            [fx / z, 0.0, -fx * x / (z * z)],
            [0.0, fy / z, -fy * y / (z * z)],
        ],
        dtype=np.float64,
    )
