"""Procedural fallback generator.

Independent implementation of the deterministic region-coloring contract
that test pipelines rely on:

* palette: the reference image cut into a 4x4 grid of cells (cell c of an
  n-pixel axis spans [floor(c*n/4), floor((c+1)*n/4)), clamped to at least
  one pixel), each reduced to the floor of its per-channel mean;
* regions: 4-connected components of (foreground and not edge), numbered
  by first row-major pixel;
* region k gets palette[u % 16] with u = first 8 bytes (little-endian,
  unsigned) of sha256(k || seed), both packed signed little-endian 64-bit;
* foreground edge pixels become black, the background stays white, and
  keep_mask pixels are copied verbatim from keep_image at the end.

This file deliberately shares no code with any client-side generator; the
conformance suite checks byte equality of the PNG outputs.
"""

from __future__ import annotations

import hashlib
import struct
from collections import deque

import numpy as np


def palette_from_reference(ref: np.ndarray) -> np.ndarray:
    h, w = ref.shape[:2]
    out = np.zeros((16, 3), dtype=np.uint8)
    for cy in range(4):
        for cx in range(4):
            r0 = min(cy * h // 4, h - 1)
            r1 = max((cy + 1) * h // 4, r0 + 1)
            c0 = min(cx * w // 4, w - 1)
            c1 = max((cx + 1) * w // 4, c0 + 1)
            block = ref[r0:r1, c0:c1].astype(np.int64)
            count = block.shape[0] * block.shape[1]
            for ch in range(3):
                out[cy * 4 + cx, ch] = int(block[..., ch].sum()) // count
    return out


def _palette_index(region: int, seed: int) -> int:
    digest = hashlib.sha256(struct.pack("<qq", region, seed)).digest()
    return int.from_bytes(digest[:8], "little") % 16


def generate(
    height: int,
    width: int,
    edge_map: np.ndarray,
    foreground_mask: np.ndarray,
    reference: np.ndarray,
    seed: int,
    keep_image: np.ndarray | None = None,
    keep_mask: np.ndarray | None = None,
) -> np.ndarray:
    fg = foreground_mask > 0
    edge = edge_map > 0
    fillable = fg & ~edge

    out = np.full((height, width, 3), 255, dtype=np.uint8)
    palette = palette_from_reference(reference)

    visited = np.zeros((height, width), dtype=bool)
    region = 0
    for y in range(height):
        for x in range(width):
            if not fillable[y, x] or visited[y, x]:
                continue
            color = palette[_palette_index(region, seed)]
            queue = deque([(y, x)])
            visited[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                out[cy, cx] = color
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < height and 0 <= nx < width:
                        if fillable[ny, nx] and not visited[ny, nx]:
                            visited[ny, nx] = True
                            queue.append((ny, nx))
            region += 1

    out[fg & edge] = 0
    if keep_mask is not None and keep_image is not None:
        sel = keep_mask > 0
        out[sel] = keep_image[sel]
    return out


def stub_concept_id(image: np.ndarray) -> str:
    h, w = image.shape[:2]
    digest = hashlib.sha256(
        struct.pack("<ii", w, h) + np.ascontiguousarray(image[..., :3]).tobytes()
    ).hexdigest()
    return f"stub-{digest[:16]}"
