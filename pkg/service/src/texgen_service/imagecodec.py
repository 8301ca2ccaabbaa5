"""Base64-PNG codec for the wire protocol."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


class ImageDecodeError(ValueError):
    pass


def png_bytes(arr: np.ndarray) -> bytes:
    a = np.asarray(arr)
    mode = {2: "L", 3: "RGB"}.get(a.ndim if a.ndim == 2 else a.shape[2])
    if a.ndim == 3 and a.shape[2] == 4:
        mode = "RGBA"
    if mode is None:
        raise ImageDecodeError(f"unsupported image shape {a.shape}")
    buf = io.BytesIO()
    Image.fromarray(a, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def encode_b64(arr: np.ndarray) -> str:
    return base64.b64encode(png_bytes(arr)).decode("ascii")


def decode_b64(payload: str, field: str, gray: bool) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(base64.b64decode(payload)))
    except Exception as exc:
        raise ImageDecodeError(f"field {field!r} is not a decodable PNG: {exc}") from None
    if gray:
        if img.mode != "L":
            raise ImageDecodeError(f"field {field!r} must be a grayscale PNG")
    else:
        if img.mode not in ("RGB", "RGBA"):
            raise ImageDecodeError(f"field {field!r} must be an RGB PNG")
        if img.mode == "RGBA":
            img = img.convert("RGB")
    return np.asarray(img)
