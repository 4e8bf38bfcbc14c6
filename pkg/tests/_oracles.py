"""Independent reference implementations used to check the pipeline.

Everything here deliberately recomputes results through a different
route than the library: splat-major f64 compositing with a library
sort, explicit corner enumeration for bounding boxes, per-term
polynomial SH, and finite differences for the projection Jacobian.
"""
from __future__ import annotations

import math

import numpy as np

from splatforge.scene import CameraView, GaussianCloud
from splatforge.projection import Splats


def naive_render(
    splats: Splats,
    cam: CameraView,
    background=(0.0, 0.0, 0.0),
    tile_size: int = 16,
    tau: float = 0.0,
    alpha_min: float = 0.0,
) -> np.ndarray:
    """Splat-major f64 renderer: library sort, no tiling of the blend loop.

    Presents exactly the pipeline's (splat, pixel) pairs: every pixel of
    every tile the splat covers.
    """
    w, h = cam.width, cam.height
    color_acc = np.zeros((h, w, 3), dtype=np.float64)
    transmittance = np.ones((h, w), dtype=np.float64)

    half = splats.depth.astype(np.float16)
    half = np.where(np.isinf(half), np.float16(65504.0), half)
    codes = half.view(np.uint16)
    order = np.lexsort((np.arange(len(splats)), codes))

    for i in order:
        tx0, ty0, tx1, ty1 = (int(v) for v in splats.tile_range[i])
        if tx1 < tx0 or ty1 < ty0:
            continue
        px0, px1 = tx0 * tile_size, min((tx1 + 1) * tile_size, w)
        py0, py1 = ty0 * tile_size, min((ty1 + 1) * tile_size, h)
        xs = np.arange(px0, px1, dtype=np.float64) + 0.5
        ys = np.arange(py0, py1, dtype=np.float64) + 0.5
        dx = xs[None, :] - float(splats.mean2d[i, 0])
        dy = ys[:, None] - float(splats.mean2d[i, 1])
        a, b, c = (float(v) for v in splats.conic[i])
        q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
        alpha = np.minimum(float(splats.opacity[i]) * np.exp(-0.5 * q), 0.99)
        if alpha_min > 0.0:
            alpha = np.where(alpha < alpha_min, 0.0, alpha)
        sl = (slice(py0, py1), slice(px0, px1))
        t_here = transmittance[sl]
        if tau > 0.0:
            alpha = np.where(t_here >= tau, alpha, 0.0)
        color_acc[sl] += (t_here * alpha)[:, :, None] * splats.color[i].astype(np.float64)
        transmittance[sl] = t_here * (1.0 - alpha)

    return color_acc + transmittance[:, :, None] * np.asarray(background, dtype=np.float64)


def _quat_matrix(q) -> np.ndarray:
    w, x, y, z = (float(v) for v in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def cull_recount(cloud: GaussianCloud, cam: CameraView) -> int:
    """Count near-plane culls via explicit 8-corner AABB enumeration."""
    row = cam.world_to_camera[2].astype(np.float64)
    culled = 0
    signs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
    )
    for i in range(len(cloud)):
        rot = _quat_matrix(cloud.rotations[i])
        axes = rot @ np.diag(np.exp(cloud.scales[i].astype(np.float64)))
        sigma = axes @ axes.T
        half = 3.0 * np.sqrt(np.diag(sigma))
        corners = signs * half
        dz = float(np.max(corners @ row[:3]))
        z = float(cloud.means[i].astype(np.float64) @ row[:3] + row[3])
        if z + dz < cam.z_near:
            culled += 1
    return culled


def significance_recount(cloud: GaussianCloud, views, beta: float = 0.1) -> np.ndarray:
    """Per-Gaussian tile-hit x opacity x volume^beta, recounted one by one.

    Uses eigvalsh for the footprint radius, so results can disagree with
    the f32 pipeline only at exact ceil/floor quantization boundaries;
    test seeds are chosen away from them.
    """
    n = len(cloud)
    lam = 0.3
    scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        mean = cloud.means[i].astype(np.float64)
        rot = _quat_matrix(cloud.rotations[i])
        axes = rot @ np.diag(np.exp(cloud.scales[i].astype(np.float64)))
        sigma3 = axes @ axes.T
        volume = float(np.prod(np.exp(cloud.scales[i].astype(np.float64))))
        half = 3.0 * np.sqrt(np.diag(sigma3))
        for cam in views:
            w2c = cam.world_to_camera.astype(np.float64)
            zrow = w2c[2]
            z = float(mean @ zrow[:3] + zrow[3])
            dz = float(np.sum(np.abs(zrow[:3]) * half))
            if z + dz < cam.z_near:  # culled
                continue
            if z < cam.z_near:  # dropped before projection
                continue
            p_cam = w2c[:3, :3] @ mean + w2c[:3, 3]
            u = cam.fx * p_cam[0] / p_cam[2] + cam.cx
            v = cam.fy * p_cam[1] / p_cam[2] + cam.cy
            jac = np.array(
                [
                    [cam.fx / p_cam[2], 0.0, -cam.fx * p_cam[0] / p_cam[2] ** 2],
                    [0.0, cam.fy / p_cam[2], -cam.fy * p_cam[1] / p_cam[2] ** 2],
                ]
            )
            t = jac @ w2c[:3, :3]
            cov2 = t @ sigma3 @ t.T + lam * np.eye(2)
            eig = np.linalg.eigvalsh(cov2)
            radius = math.ceil(3.0 * math.sqrt(max(float(eig[-1]), 0.0)))
            tiles_x = -(-cam.width // 16)
            tiles_y = -(-cam.height // 16)
            x0 = math.floor((u - radius) / 16)
            x1 = math.floor((u + radius) / 16)
            y0 = math.floor((v - radius) / 16)
            y1 = math.floor((v + radius) / 16)
            if x1 < 0 or x0 >= tiles_x or y1 < 0 or y0 >= tiles_y:
                continue
            nx = min(x1, tiles_x - 1) - max(x0, 0) + 1
            ny = min(y1, tiles_y - 1) - max(y0, 0) + 1
            scores[i] += nx * ny * float(cloud.opacities[i]) * volume**beta
    return scores


def pixel_pair_recount(
    splats: Splats,
    cam: CameraView,
    tau: float,
    alpha_min: float,
    tile_size: int = 16,
) -> tuple[int, int, int]:
    """Pixel-major recount of (blended, alpha_pruned, early_terminated).

    Walks pixels one at a time in f64; counts can differ from the f32
    pipeline only when an alpha or transmittance sits exactly on a
    threshold, which the test scenes avoid.
    """
    tiles_x = -(-cam.width // tile_size)
    tiles_y = -(-cam.height // tile_size)
    per_tile: dict[int, list[int]] = {}
    half = splats.depth.astype(np.float16)
    codes = half.view(np.uint16)
    order = np.lexsort((np.arange(len(splats)), codes))
    for i in order:
        tx0, ty0, tx1, ty1 = (int(v) for v in splats.tile_range[i])
        if tx1 < tx0 or ty1 < ty0:
            continue
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                per_tile.setdefault(ty * tiles_x + tx, []).append(i)

    blended = pruned = terminated = 0
    for tile_id, members in per_tile.items():
        ty, tx = divmod(tile_id, tiles_x)
        for py in range(ty * tile_size, min((ty + 1) * tile_size, cam.height)):
            for px in range(tx * tile_size, min((tx + 1) * tile_size, cam.width)):
                t = 1.0
                done = False
                for i in members:
                    if done:
                        terminated += 1
                        continue
                    dx = (px + 0.5) - float(splats.mean2d[i, 0])
                    dy = (py + 0.5) - float(splats.mean2d[i, 1])
                    a, b, c = (float(v) for v in splats.conic[i])
                    alpha = min(
                        float(splats.opacity[i]) * math.exp(-0.5 * (a * dx * dx + 2 * b * dx * dy + c * dy * dy)),
                        0.99,
                    )
                    if alpha < alpha_min:
                        pruned += 1
                        continue
                    blended += 1
                    t *= 1.0 - alpha
                    if t < tau:
                        done = True
    return blended, pruned, terminated


def sh_polynomial(sh_coeffs: np.ndarray, direction) -> np.ndarray:
    """Per-term SH color evaluation with constants derived from first principles."""
    x, y, z = (float(v) for v in direction)
    pi = math.pi
    k0 = 0.5 * math.sqrt(1.0 / pi)
    k1 = math.sqrt(3.0 / (4.0 * pi))
    basis = [k0]
    n = sh_coeffs.shape[-1]
    if n > 1:
        basis += [-k1 * y, k1 * z, -k1 * x]
    if n > 4:
        basis += [
            0.5 * math.sqrt(15.0 / pi) * x * y,
            -0.5 * math.sqrt(15.0 / pi) * y * z,
            0.25 * math.sqrt(5.0 / pi) * (2 * z * z - x * x - y * y),
            -0.5 * math.sqrt(15.0 / pi) * x * z,
            0.25 * math.sqrt(15.0 / pi) * (x * x - y * y),
        ]
    if n > 9:
        basis += [
            -0.25 * math.sqrt(35.0 / (2 * pi)) * y * (3 * x * x - y * y),
            0.5 * math.sqrt(105.0 / pi) * x * y * z,
            -0.25 * math.sqrt(21.0 / (2 * pi)) * y * (4 * z * z - x * x - y * y),
            0.25 * math.sqrt(7.0 / pi) * z * (2 * z * z - 3 * x * x - 3 * y * y),
            -0.25 * math.sqrt(21.0 / (2 * pi)) * x * (4 * z * z - x * x - y * y),
            0.25 * math.sqrt(105.0 / pi) * z * (x * x - y * y),
            -0.25 * math.sqrt(35.0 / (2 * pi)) * x * (x * x - 3 * y * y),
        ]
    out = np.zeros(3)
    for ch in range(3):
        acc = 0.5
        for k, bval in enumerate(basis):
            acc += bval * float(sh_coeffs[ch, k])
        out[ch] = min(max(acc, 0.0), 1.0)
    return out


def finite_difference_jacobian(point_cam, fx: float, fy: float, h: float = 1e-5) -> np.ndarray:
    """Central differences of the pinhole map (u, v) = (fx X/Z + cx, fy Y/Z + cy)."""

    def pin(p):
        return np.array([fx * p[0] / p[2], fy * p[1] / p[2]], dtype=np.float64)

    p = np.asarray(point_cam, dtype=np.float64)
    jac = np.empty((2, 3), dtype=np.float64)
    for j in range(3):
        step = h * max(1.0, abs(p[j]))
        hi, lo = p.copy(), p.copy()
        hi[j] += step
        lo[j] -= step
        jac[:, j] = (pin(hi) - pin(lo)) / (2.0 * step)
    return jac
