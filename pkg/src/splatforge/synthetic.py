"""Deterministic synthetic scenes and camera rigs for tests and demos."""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .scene import CameraView, GaussianCloud, SH_BASIS_COUNT, make_camera, normalize_quaternions

KINDS = ("sphere", "grid", "clustered")

# opacity range where the logit/sigmoid PLY round trip is float-stable
OPACITY_RANGE = (0.35, 0.9)


def gen_synthetic(
    kind: str,
    n: int,
    seed: int = 0,
    sh_degree: int = 3,
    extent: float = 3.0,
) -> GaussianCloud:
    """Generate a reproducible cloud.

    Kinds: sphere (jittered shell of radius ``extent``), grid (regular
    lattice in the [-extent, extent] cube), clustered (8 Gaussian blobs,
    useful for quantization tests). Footprints are sized so typical
    splats span a few pixels at the default cameras.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown scene kind {kind!r}; expected one of {KINDS}")
    if n < 0:
        raise ValidationError("n must be non-negative")
    if sh_degree not in SH_BASIS_COUNT:
        raise ValidationError("sh_degree must be 0..3")
    basis = SH_BASIS_COUNT[sh_degree]
    rng = np.random.default_rng(seed)

    if kind == "sphere":
        dirs = rng.normal(size=(n, 3))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radii = extent * (1.0 + 0.05 * rng.normal(size=(n, 1)))
        means = dirs / norms * radii
    elif kind == "grid":
        side = max(1, int(np.ceil(n ** (1 / 3)))) if n else 1
        axis = np.linspace(-extent, extent, side)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        means = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)[:n]
    else:  # clustered
        centers = rng.uniform(-extent, extent, size=(8, 3))
        which = rng.integers(0, 8, size=n)
        means = centers[which] + 0.15 * extent * rng.normal(size=(n, 3))

    scales = np.log(rng.uniform(0.004, 0.02, size=(n, 3)) * extent)
    rotations = normalize_quaternions(rng.normal(size=(n, 4))) if n else np.zeros((0, 4))
    opacities = rng.uniform(*OPACITY_RANGE, size=n)
    sh = np.zeros((n, 3, basis))
    sh[:, :, 0] = rng.normal(0.0, 0.35, size=(n, 3))
    if basis > 1:
        sh[:, :, 1:] = rng.normal(0.0, 0.05, size=(n, 3, basis - 1))
    return GaussianCloud(means, scales, rotations, opacities.astype(np.float32), sh)


def default_camera(
    extent: float = 3.0,
    width: int = 640,
    height: int = 360,
    z_near: float = 0.01,
) -> CameraView:
    """Deterministic framing camera: outside the scene, looking at its center."""
    eye = (0.0, -2.7 * extent, 0.9 * extent)
    return make_camera(width=width, height=height, eye=eye, z_near=z_near)


def camera_for_cloud(cloud: GaussianCloud, width: int = 640, height: int = 360) -> CameraView:
    """Framing camera derived from the cloud's bounding radius."""
    if len(cloud) == 0:
        return default_camera(width=width, height=height)
    extent = float(np.max(np.linalg.norm(cloud.means, axis=1)))
    return default_camera(extent=max(extent, 1e-3), width=width, height=height)


def ring_views(
    extent: float = 3.0,
    count: int = 8,
    width: int = 640,
    height: int = 360,
) -> list[CameraView]:
    """Evenly spaced orbit of cameras looking at the origin."""
    if count < 1:
        raise ValidationError("ring needs at least one view")
    views = []
    for k in range(count):
        theta = 2.0 * np.pi * k / count
        eye = (
            2.7 * extent * np.cos(theta),
            2.7 * extent * np.sin(theta),
            0.9 * extent,
        )
        views.append(make_camera(width=width, height=height, eye=eye))
    return views
