"""Image output (byte-exact PPM, PNG for viewing) and the PSNR metric."""
from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to bytes (round half to even)."""
    img = np.asarray(image)
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """P6 PPM, maxval 255; the golden format for byte-exact comparisons."""
    data = to_uint8(image)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValidationError("PPM writer expects an (H, W, 3) image")
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read P6 back as float RGB in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise ValidationError("not a P6 PPM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment line
            pos = blob.find(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValidationError(f"unsupported PPM maxval {maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).astype(np.float32) / 255.0


def write_png(path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def read_image(path) -> np.ndarray:
    name = str(path).lower()
    if name.endswith((".ppm", ".pnm")):
        return read_ppm(path)
    return read_png(path)


def psnr(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over [0, 1] channels.

    Identical images return +inf.
    """
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
