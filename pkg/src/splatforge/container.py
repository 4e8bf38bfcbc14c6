"""SPLC container: little-endian on-disk format for compressed models.

Layout: a fixed 24-byte header (magic "SPLC", version, SH degree, count,
codebook sizes, index bit widths) followed by fp16 payload sections and
byte-padded per-Gaussian codebook indices.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContainerFormatError
from .scene import SH_BASIS_COUNT

MAGIC = b"SPLC"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIBB2x")
HEADER_SIZE = _HEADER.size  # 24


def index_bits(k: int) -> int:
    """ceil(log2 k); a single-entry codebook needs no stored index."""
    if k < 1:
        raise ContainerFormatError(f"codebook size {k} must be >= 1")
    return math.ceil(math.log2(k)) if k > 1 else 0


def index_bytes(k: int) -> int:
    return (index_bits(k) + 7) // 8


@dataclass
class CompressedModel:
    """Pruned, quantized scene: fp16 geometry plus SH/color codebooks."""

    count: int
    sh_degree: int
    positions: np.ndarray  # (N, 3) f16
    scales: np.ndarray  # (N, 3) f16, log space
    rotations: np.ndarray  # (N, 4) f16
    opacities: np.ndarray  # (N,) f16, post-sigmoid
    dc_codebook: np.ndarray  # (K_dc, 3) f16
    sh_codebook: np.ndarray  # (K_sh, 3*(B-1)) f16
    dc_index: np.ndarray  # (N,) u32
    sh_index: np.ndarray  # (N,) u32

    def __post_init__(self) -> None:
        n = self.count
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float16)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float16)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float16)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float16)
        self.dc_codebook = np.ascontiguousarray(self.dc_codebook, dtype=np.float16)
        self.sh_codebook = np.ascontiguousarray(self.sh_codebook, dtype=np.float16)
        self.dc_index = np.ascontiguousarray(self.dc_index, dtype=np.uint32)
        self.sh_index = np.ascontiguousarray(self.sh_index, dtype=np.uint32)

        if self.sh_degree not in SH_BASIS_COUNT:
            raise ContainerFormatError(f"sh_degree {self.sh_degree} outside 0..3")
        basis = SH_BASIS_COUNT[self.sh_degree]
        shapes = {
            "positions": (n, 3),
            "scales": (n, 3),
            "rotations": (n, 4),
            "opacities": (n,),
            "dc_index": (n,),
            "sh_index": (n,),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ContainerFormatError(f"{name} shape {getattr(self, name).shape} != {shape}")
        if self.dc_codebook.ndim != 2 or self.dc_codebook.shape[1] != 3:
            raise ContainerFormatError("dc_codebook must be (K_dc, 3)")
        if self.sh_codebook.ndim != 2 or self.sh_codebook.shape[1] != 3 * (basis - 1):
            raise ContainerFormatError(
                f"sh_codebook width {self.sh_codebook.shape} != 3*(B-1) = {3 * (basis - 1)}"
            )
        if n and self.dc_index.max(initial=0) >= self.k_dc:
            raise ContainerFormatError("dc index out of range for codebook")
        if n and self.sh_index.max(initial=0) >= self.k_sh:
            raise ContainerFormatError("sh index out of range for codebook")

    @property
    def k_dc(self) -> int:
        return self.dc_codebook.shape[0]

    @property
    def k_sh(self) -> int:
        return self.sh_codebook.shape[0]


def container_nbytes(model: CompressedModel) -> int:
    """On-disk size: header + fp16 payload + byte-padded indices."""
    n = model.count
    basis = SH_BASIS_COUNT[model.sh_degree]
    geom = 2 * (3 + 3 + 4 + 1) * n  # positions + scales + rotations + opacity halves
    books = 2 * (3 * model.k_dc + 3 * (basis - 1) * model.k_sh)
    idx = n * (index_bytes(model.k_dc) + index_bytes(model.k_sh))
    return HEADER_SIZE + geom + books + idx


def _pack_indices(idx: np.ndarray, k: int) -> bytes:
    bpi = index_bytes(k)
    if bpi == 0:
        return b""
    out = np.empty((idx.shape[0], bpi), dtype=np.uint8)
    for b in range(bpi):
        out[:, b] = (idx >> (8 * b)) & 0xFF
    return out.tobytes()


def _unpack_indices(buf: memoryview, n: int, k: int) -> np.ndarray:
    bpi = index_bytes(k)
    if bpi == 0:
        return np.zeros(n, dtype=np.uint32)
    raw = np.frombuffer(buf, dtype=np.uint8, count=n * bpi).reshape(n, bpi)
    idx = np.zeros(n, dtype=np.uint32)
    for b in range(bpi):
        idx |= raw[:, b].astype(np.uint32) << (8 * b)
    return idx


def write_compressed(model: CompressedModel, path) -> None:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        model.sh_degree,
        0,
        model.count,
        model.k_dc,
        model.k_sh,
        index_bits(model.k_dc),
        index_bits(model.k_sh),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (model.positions, model.scales, model.rotations, model.opacities,
                    model.dc_codebook, model.sh_codebook):
            fh.write(np.ascontiguousarray(arr, dtype="<f2").tobytes())
        fh.write(_pack_indices(model.dc_index, model.k_dc))
        fh.write(_pack_indices(model.sh_index, model.k_sh))


def read_compressed(path) -> CompressedModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise ContainerFormatError("truncated file: header incomplete")
    magic, version, sh_degree, _, count, k_dc, k_sh, bits_dc, bits_sh = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    if sh_degree not in SH_BASIS_COUNT:
        raise ContainerFormatError(f"sh_degree {sh_degree} outside 0..3")
    if bits_dc != index_bits(k_dc) or bits_sh != index_bits(k_sh):
        raise ContainerFormatError("index bit widths inconsistent with codebook sizes")

    basis = SH_BASIS_COUNT[sh_degree]
    sections = [
        ("positions", (count, 3)),
        ("scales", (count, 3)),
        ("rotations", (count, 4)),
        ("opacities", (count,)),
        ("dc_codebook", (k_dc, 3)),
        ("sh_codebook", (k_sh, 3 * (basis - 1))),
    ]
    view = memoryview(blob)
    pos = HEADER_SIZE
    arrays = {}
    for name, shape in sections:
        nbytes = 2 * int(np.prod(shape))
        if pos + nbytes > len(blob):
            raise ContainerFormatError(f"truncated file: {name} section incomplete")
        arrays[name] = np.frombuffer(view, dtype="<f2", count=int(np.prod(shape)), offset=pos).reshape(shape)
        pos += nbytes
    for name, k in (("dc_index", k_dc), ("sh_index", k_sh)):
        nbytes = count * index_bytes(k)
        if pos + nbytes > len(blob):
            raise ContainerFormatError(f"truncated file: {name} section incomplete")
        arrays[name] = _unpack_indices(view[pos:], count, k)
        pos += nbytes

    model = CompressedModel(count=count, sh_degree=sh_degree, **arrays)
    if container_nbytes(model) != len(blob):
        raise ContainerFormatError(
            f"file size {len(blob)} does not match expected {container_nbytes(model)}"
        )
    return model
