"""Real spherical-harmonics color evaluation for view-dependent radiance."""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .scene import Gaussian3D

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values for unit directions.

    Args:
        dirs: (..., 3) unit vectors.
        degree: 0..3.

    Returns:
        (..., B) array with B = (degree + 1)**2.
    """
    dirs = np.asarray(dirs, dtype=np.float32)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = [np.full_like(x, C0)]
    if degree >= 1:
        out += [-C1 * y, C1 * z, -C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out += [
            C2[0] * xy,
            C2[1] * yz,
            C2[2] * (2.0 * zz - xx - yy),
            C2[3] * xz,
            C2[4] * (xx - yy),
        ]
    if degree >= 3:
        out += [
            C3[0] * y * (3.0 * xx - yy),
            C3[1] * xy * z,
            C3[2] * y * (4.0 * zz - xx - yy),
            C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            C3[4] * x * (4.0 * zz - xx - yy),
            C3[5] * z * (xx - yy),
            C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(out, axis=-1).astype(np.float32)


def evaluate_sh_many(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Colors for (N, 3, B) coefficients viewed along (N, 3) unit dirs.

    Returns (N, 3) RGB clamped to [0, 1]; the 0.5 offset recentres the
    DC-free representation.
    """
    basis_n = sh.shape[-1]
    degree = {1: 0, 4: 1, 9: 2, 16: 3}[basis_n]
    basis = sh_basis(dirs, degree)  # (N, B)
    rgb = 0.5 + np.einsum("ncb,nb->nc", sh, basis)
    return np.clip(rgb, 0.0, 1.0).astype(np.float32)


def evaluate_sh(g: Gaussian3D, view_dir: np.ndarray) -> np.ndarray:
    """RGB of one Gaussian along a unit view direction."""
    d = np.asarray(view_dir, dtype=np.float32)
    n = float(np.linalg.norm(d.astype(np.float64)))
    if n == 0.0:
        raise ValidationError("view direction has zero length")
    if abs(n - 1.0) > 1e-6:
        raise ValidationError(f"view direction norm {n} is not 1 within 1e-6")
    return evaluate_sh_many(g.sh[None], d[None])[0]
