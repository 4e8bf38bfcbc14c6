"""Binary little-endian PLY I/O using the standard splatting attribute layout.

Vertices carry x/y/z, f_dc_0..2, f_rest_* (channel-major higher-order SH),
opacity as a logit, scale_0..2 in log space, and rot_0..3 quaternions.
Extra attributes such as normals are tolerated on load and written as
zeros on save.
"""
from __future__ import annotations

import numpy as np

from .errors import PlyParseError
from .scene import GaussianCloud, SH_BASIS_COUNT, SH_DEGREE_FOR_BASIS, normalize_quaternions

_FLOAT_NAMES = {"float", "float32"}
_REQUIRED = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]


def _parse_header(blob: bytes) -> tuple[int, list[str], int]:
    """Returns (vertex_count, property_names, payload_offset)."""
    end = blob.find(b"end_header\n")
    if end < 0:
        raise PlyParseError("missing end_header")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0].strip() != "ply":
        raise PlyParseError("not a PLY file (missing 'ply' magic)")
    fmt = next((ln for ln in header if ln.startswith("format")), None)
    if fmt is None or fmt.split()[1] != "binary_little_endian":
        raise PlyParseError(f"unsupported format line: {fmt!r}")

    count = None
    props: list[str] = []
    in_vertex = False
    for ln in header[1:]:
        parts = ln.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if len(parts) != 3:
                raise PlyParseError(f"unsupported property line: {ln!r}")
            ptype, name = parts[1], parts[2]
            if ptype not in _FLOAT_NAMES:
                raise PlyParseError(f"property {name!r} has non-float type {ptype!r}")
            props.append(name)
    if count is None:
        raise PlyParseError("no vertex element in header")
    return count, props, end + len(b"end_header\n")


def load_ply(path) -> GaussianCloud:
    """Load a Gaussian cloud, inferring SH degree from the f_rest count."""
    with open(path, "rb") as fh:
        blob = fh.read()
    count, props, offset = _parse_header(blob)

    col = {name: i for i, name in enumerate(props)}
    for name in _REQUIRED:
        if name not in col:
            raise PlyParseError(f"missing required attribute {name!r}")

    rest_names = [p for p in props if p.startswith("f_rest_")]
    n_rest = len(rest_names)
    for j in range(n_rest):
        if f"f_rest_{j}" not in col:
            raise PlyParseError(f"f_rest indices not contiguous: missing 'f_rest_{j}'")
    if n_rest % 3 != 0 or (n_rest // 3 + 1) not in SH_DEGREE_FOR_BASIS:
        raise PlyParseError(
            f"inconsistent f_rest count {n_rest}: expected 3*(B-1) with B in {sorted(SH_DEGREE_FOR_BASIS)}"
        )
    basis = n_rest // 3 + 1

    expected = offset + count * len(props) * 4
    if len(blob) < expected:
        raise PlyParseError(
            f"vertex payload truncated: need {expected - offset} bytes, have {len(blob) - offset}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count * len(props), offset=offset)
    data = data.reshape(count, len(props))

    def take(names):
        return np.ascontiguousarray(data[:, [col[n] for n in names]])

    means = take(["x", "y", "z"])
    scales = take(["scale_0", "scale_1", "scale_2"])
    rotations = normalize_quaternions(take(["rot_0", "rot_1", "rot_2", "rot_3"]))
    logits = data[:, col["opacity"]].astype(np.float64)
    opacities = (1.0 / (1.0 + np.exp(-logits))).astype(np.float32)

    sh = np.zeros((count, 3, basis), dtype=np.float32)
    sh[:, :, 0] = take(["f_dc_0", "f_dc_1", "f_dc_2"])
    if basis > 1:
        rest = take([f"f_rest_{j}" for j in range(n_rest)])
        sh[:, :, 1:] = rest.reshape(count, 3, basis - 1)
    return GaussianCloud(means, scales, rotations, opacities, sh)


def save_ply(cloud: GaussianCloud, path) -> None:
    """Write the standard attribute layout; inverse of load_ply."""
    n = len(cloud)
    basis = cloud.sh.shape[-1]
    n_rest = 3 * (basis - 1)

    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{j}" for j in range(n_rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")

    p = cloud.opacities.astype(np.float64)
    with np.errstate(divide="ignore"):
        logits = np.log(p / (1.0 - p)).astype(np.float32)

    data = np.empty((n, len(names)), dtype="<f4")
    data[:, 0:3] = cloud.means
    data[:, 3:6] = 0.0
    data[:, 6:9] = cloud.sh[:, :, 0]
    if n_rest:
        data[:, 9 : 9 + n_rest] = cloud.sh[:, :, 1:].reshape(n, n_rest)
    base = 9 + n_rest
    data[:, base] = logits
    data[:, base + 1 : base + 4] = cloud.scales
    data[:, base + 4 : base + 8] = cloud.rotations

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes())
