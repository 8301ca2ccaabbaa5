"""8-bit image helpers shared across the pipeline.

Images are plain numpy arrays: grayscale ``(H, W) uint8``, RGB
``(H, W, 3) uint8``, RGBA ``(H, W, 4) uint8``.  Binary masks (edge maps,
foreground masks) are grayscale arrays whose values are exactly 0 or 255.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def as_gray(img: np.ndarray) -> np.ndarray:
    """Validate and return a (H, W) uint8 grayscale image."""
    a = np.asarray(img)
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ValueError(f"expected (H, W) uint8 image, got {a.shape} {a.dtype}")
    return a


def as_rgb(img: np.ndarray) -> np.ndarray:
    """Validate and return a (H, W, 3) uint8 RGB image."""
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {a.shape} {a.dtype}")
    return a


def luma(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luma with exact integer arithmetic.

    y = (299*r + 587*g + 114*b + 500) // 1000, so independent
    implementations reproduce it bit-for-bit.
    """
    rgb = as_rgb(rgb).astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def to_png_bytes(img: np.ndarray) -> bytes:
    """Encode an image array as PNG bytes (canonical encoder for the wire)."""
    a = np.asarray(img)
    if a.ndim == 2:
        mode = "L"
    elif a.ndim == 3 and a.shape[2] == 3:
        mode = "RGB"
    elif a.ndim == 3 and a.shape[2] == 4:
        mode = "RGBA"
    else:
        raise ValueError(f"unsupported image shape {a.shape}")
    buf = io.BytesIO()
    Image.fromarray(a, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a uint8 array (grayscale, RGB, or RGBA)."""
    img = Image.open(io.BytesIO(data))
    if img.mode not in ("L", "RGB", "RGBA"):
        img = img.convert("RGB")
    return np.asarray(img)


def save_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(img))


def load_png(path: str | Path) -> np.ndarray:
    return from_png_bytes(Path(path).read_bytes())
