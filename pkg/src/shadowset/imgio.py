"""Image and feature-map file I/O.

Radiance goes to PFM (float32, little-endian, bottom-up rows). Display
images go to PNG through the sRGB transfer; masks go to PNG linearly.
Feature maps use a small planar float32 container ("SFEA" magic).

All writers are atomic: bytes land in a temp file in the target directory
and are moved into place with os.replace, so readers never observe a
partially written file.
"""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "srgb_to_linear", "linear_to_srgb",
    "read_pfm", "write_pfm", "read_png", "write_png",
    "read_features", "write_features",
    "atomic_write_bytes",
]


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


# ---------------------------------------------------------------------------
# PFM

def write_pfm(path, image: np.ndarray) -> None:
    """(h, w, 3) -> 'PF', (h, w) -> 'Pf'; scale -1.0 marks little-endian."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3 and image.shape[2] == 3:
        magic = b"PF"
    elif image.ndim == 2:
        magic = b"Pf"
    else:
        raise ValueError(f"PFM image must be (h, w) or (h, w, 3), got {image.shape}")
    h, w = image.shape[:2]
    header = b"%s\n%d %d\n-1.0\n" % (magic, w, h)
    body = np.flipud(image).astype("<f4").tobytes()
    atomic_write_bytes(path, header + body)


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    # header: magic, dims, scale, each ending in one whitespace byte
    parts = raw.split(maxsplit=3)
    if len(parts) < 4:
        raise ValueError(f"{path}: truncated PFM header")
    magic, ws, hs, rest = parts
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise ValueError(f"{path}: not a PFM file (magic {magic!r})")
    w = int(ws)
    h = int(hs)
    scale_bytes, _, body = rest.partition(b"\n")
    scale = float(scale_bytes)
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    data = np.frombuffer(body, dtype=dtype, count=count).astype(np.float32)
    if channels == 3:
        img = data.reshape(h, w, 3)
    else:
        img = data.reshape(h, w)
    return np.flipud(img).copy()


# ---------------------------------------------------------------------------
# PNG

def write_png(path, image: np.ndarray, srgb: bool = True) -> None:
    """Quantize [0, 1] float data to 8-bit PNG.

    srgb=True applies the display transfer (radiance images); srgb=False
    stores the values linearly (masks). Quantization is round-half-up.
    """
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if srgb:
        image = linear_to_srgb(image)
    data = np.floor(image * 255.0 + 0.5).astype(np.uint8)
    if data.ndim == 2:
        pil = Image.fromarray(data, mode="L")
    elif data.ndim == 3 and data.shape[2] == 3:
        pil = Image.fromarray(data, mode="RGB")
    else:
        raise ValueError(f"PNG image must be (h, w) or (h, w, 3), got {image.shape}")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def read_png(path, srgb: bool = True) -> np.ndarray:
    with Image.open(path) as pil:
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("RGB")
        data = np.asarray(pil, dtype=np.float64) / 255.0
    return srgb_to_linear(data) if srgb else data


# ---------------------------------------------------------------------------
# feature maps

_FEATURE_MAGIC = b"SFEA"


def write_features(path, features: np.ndarray) -> None:
    """Planar float32 (channels, h, w) with an ascii dims line."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 3:
        raise ValueError(f"features must be (c, h, w), got {features.shape}")
    c, h, w = features.shape
    header = b"%s %d %d %d\n" % (_FEATURE_MAGIC, c, h, w)
    atomic_write_bytes(path, header + features.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 4 or parts[0] != _FEATURE_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        c, h, w = (int(p) for p in parts[1:])
        data = np.frombuffer(fh.read(), dtype="<f4", count=c * h * w)
    return data.reshape(c, h, w).astype(np.float32)
