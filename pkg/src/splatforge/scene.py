"""Scene domain types: Gaussian clouds and pinhole cameras.

A cloud is stored struct-of-arrays so the pipeline stages can run
vectorised; ``Gaussian3D`` is the single-element view used by the
per-Gaussian operations and tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# basis count per spherical-harmonics degree
SH_BASIS_COUNT = {0: 1, 1: 4, 2: 9, 3: 16}
SH_DEGREE_FOR_BASIS = {b: d for d, b in SH_BASIS_COUNT.items()}

# 3 mean + 3 scale + 4 rotation + 1 opacity + 3*16 SH coefficients
RAW_PARAMS_PER_GAUSSIAN = 59
GEOMETRY_PARAMS = 11  # everything except SH

# quaternions this close to unit norm are stored untouched; sloppier
# inputs are renormalised
_QUAT_NORM_SKIP_TOL = 1e-5


def normalize_quaternions(rotations: np.ndarray) -> np.ndarray:
    """Return unit quaternions, leaving already-normalised rows bit-exact."""
    rot = np.asarray(rotations, dtype=np.float32)
    n2 = np.sum(rot.astype(np.float64) ** 2, axis=-1)
    if np.any(n2 <= 0):
        raise ValidationError("zero-norm quaternion cannot be normalised")
    needs = np.abs(n2 - 1.0) > _QUAT_NORM_SKIP_TOL
    if np.any(needs):
        rot = rot.copy()
        rot[needs] = (rot[needs].astype(np.float64) / np.sqrt(n2[needs])[..., None]).astype(
            np.float32
        )
    return rot


@dataclass(frozen=True)
class Gaussian3D:
    """A single anisotropic Gaussian primitive.

    ``scale`` holds log-extents (world units after exp), ``opacity`` is the
    post-sigmoid value in [0, 1], and ``sh`` is laid out (3 channels, B).
    """

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    opacity: float
    sh: np.ndarray

    @property
    def sh_degree(self) -> int:
        return SH_DEGREE_FOR_BASIS[self.sh.shape[-1]]


@dataclass
class GaussianCloud:
    """Struct-of-arrays Gaussian scene.

    Shapes: means (N, 3), scales (N, 3) log-space, rotations (N, 4) unit
    (w, x, y, z), opacities (N,) in [0, 1], sh (N, 3, B).
    """

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self) -> None:
        self.means = np.ascontiguousarray(self.means, dtype=np.float32)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float32)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float32)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float32)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        basis = self.sh.shape[-1]
        if basis not in SH_DEGREE_FOR_BASIS:
            raise ValidationError(f"sh basis count {basis} is not one of {sorted(SH_DEGREE_FOR_BASIS)}")
        return SH_DEGREE_FOR_BASIS[basis]

    def item(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            mean=self.means[i],
            scale=self.scales[i],
            rotation=self.rotations[i],
            opacity=float(self.opacities[i]),
            sh=self.sh[i],
        )

    def take(self, index: np.ndarray) -> "GaussianCloud":
        """Sub-cloud at the given indices, preserving order."""
        return GaussianCloud(
            means=self.means[index],
            scales=self.scales[index],
            rotations=self.rotations[index],
            opacities=self.opacities[index],
            sh=self.sh[index],
        )


def validate_cloud(cloud: GaussianCloud) -> None:
    """Check structural invariants; raises ValidationError on violation."""
    n = len(cloud)
    if cloud.means.shape != (n, 3):
        raise ValidationError(f"means shape {cloud.means.shape} != ({n}, 3)")
    if cloud.scales.shape != (n, 3):
        raise ValidationError(f"scales shape {cloud.scales.shape} != ({n}, 3)")
    if cloud.rotations.shape != (n, 4):
        raise ValidationError(f"rotations shape {cloud.rotations.shape} != ({n}, 4)")
    if cloud.opacities.shape != (n,):
        raise ValidationError(f"opacities shape {cloud.opacities.shape} != ({n},)")
    if cloud.sh.ndim != 3 or cloud.sh.shape[:2] != (n, 3):
        raise ValidationError(f"sh shape {cloud.sh.shape} != ({n}, 3, B)")
    _ = cloud.sh_degree  # validates basis count
    for name in ("means", "scales", "rotations", "opacities", "sh"):
        if not np.all(np.isfinite(getattr(cloud, name))):
            raise ValidationError(f"non-finite values in {name}")
    if n == 0:
        return
    if np.any(cloud.opacities < 0) or np.any(cloud.opacities > 1):
        raise ValidationError("opacity outside [0, 1]")
    norms = np.linalg.norm(cloud.rotations.astype(np.float64), axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ValidationError("rotation quaternion not unit norm within 1e-4")


@dataclass
class CameraView:
    """Pinhole camera: 4x4 world-to-camera transform plus intrinsics."""

    world_to_camera: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    z_near: float = 0.01

    def __post_init__(self) -> None:
        self.world_to_camera = np.ascontiguousarray(self.world_to_camera, dtype=np.float32)
        if self.world_to_camera.shape != (4, 4):
            raise ValidationError("world_to_camera must be 4x4")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image size must be positive")
        if self.z_near <= 0:
            raise ValidationError("z_near must be positive")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        r = self.rotation.astype(np.float64)
        t = self.translation.astype(np.float64)
        return (-r.T @ t).astype(np.float32)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix with +z forward, +x right, +y down."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm == 0:
        raise ValidationError("look_at eye and target coincide")
    fwd /= norm
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:  # forward parallel to up: pick another up
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        rn = np.linalg.norm(right)
    right /= rn
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = -r @ eye
    return m.astype(np.float32)


def make_camera(
    width: int = 640,
    height: int = 360,
    eye=(0.0, -8.0, 0.0),
    target=(0.0, 0.0, 0.0),
    fov_deg: float = 60.0,
    z_near: float = 0.01,
) -> CameraView:
    """Convenience constructor: horizontal field of view, centered principal point."""
    fx = width / (2.0 * np.tan(np.radians(fov_deg) / 2.0))
    return CameraView(
        world_to_camera=look_at(eye, target),
        fx=float(fx),
        fy=float(fx),
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        z_near=z_near,
    )


@dataclass
class CullStats:
    """Aggregate counters for the near-plane visibility test."""

    total: int = 0
    culled: int = 0

    @property
    def rate(self) -> float:
        return self.culled / self.total if self.total else 0.0

    def merge(self, other: "CullStats") -> "CullStats":
        return CullStats(self.total + other.total, self.culled + other.culled)


def camera_to_dict(cam: CameraView) -> dict:
    return {
        "matrix": [float(v) for v in cam.world_to_camera.reshape(-1)],
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "z_near": cam.z_near,
    }


def camera_from_dict(d: dict) -> CameraView:
    try:
        matrix = np.asarray(d["matrix"], dtype=np.float32).reshape(4, 4)
        return CameraView(
            world_to_camera=matrix,
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            z_near=float(d.get("z_near", 0.01)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad camera entry: {exc}") from exc


def cameras_to_json(views: list[CameraView]) -> str:
    import json

    return json.dumps({"cameras": [camera_to_dict(v) for v in views]}, indent=2)


def cameras_from_json(text: str) -> list[CameraView]:
    """Parse a camera trajectory: {"cameras": [...]}, a bare list, or one dict."""
    import json

    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"camera file is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and "cameras" in payload:
        payload = payload["cameras"]
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list) or not payload:
        raise ValidationError("camera file holds no camera entries")
    return [camera_from_dict(d) for d in payload]
