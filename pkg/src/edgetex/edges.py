"""Edge-map extraction: Canny plus the three geometric edge sources.

The Canny stage is defined in exact integer arithmetic so that independent
implementations agree bit-for-bit.  The frozen algorithm, given a uint8
grayscale image, sigma, and thresholds low/high on the 8-bit Sobel
magnitude scale:

1. Blur.  Radius r = ceil(3*sigma); 1-d weights q_i = round(2048 *
   exp(-i^2 / (2 sigma^2))) for i in [-r, r]; the 2-d kernel is the outer
   product q_i * q_j.  Convolve with replicate padding as an exact integer
   sum S, then B = (S + D//2) // D with D = (sum q)^2 (round half up).
2. Sobel.  3x3 integer Sobel on B at interior pixels; gradient strength is
   the integer squared magnitude m = gx^2 + gy^2 (zero on the 1-px border).
3. Non-maximum suppression with 4 quantized directions.  The sector is
   chosen by integer comparisons (ax = |gx|, ay = |gy|):
   horizontal if (ax+ay)^2 <= 2*ax^2, vertical if (ay-ax)^2 >= 2*ax^2,
   else diagonal; these are exact forms of |gy/gx| <= tan 22.5deg etc., and
   integer gradients can never land on the irrational boundaries.  With
   d the unit pixel step along (sign gy, sign gx) for the sector, a pixel
   survives iff m >= m(p+d) and m > m(p-d); the asymmetry keeps exactly
   one column of a symmetric two-pixel plateau.
4. Hysteresis.  Candidates are survivors with m > low^2, strong ones have
   m > high^2; edges are candidates 8-connected to a strong pixel.

Edge maps are uint8 arrays with values exactly {0, 255}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import luma
from .mesh import ComponentLabeling, TriMesh
from .render import GBuffer, ViewSpec, depth_to_image, normals_to_image, rasterize

_KERNEL_SCALE = 2048
_MAX_THRESHOLD = 255.0 * math.sqrt(2.0) * 4.0  # Sobel L2 magnitude bound


@dataclass(frozen=True)
class CannyParams:
    sigma: float = 1.4
    low: float = 100.0
    high: float = 200.0

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.low <= self.high <= _MAX_THRESHOLD:
            raise ValueError(f"need 0 <= low <= high <= {_MAX_THRESHOLD:.1f}")


def blur_kernel_1d(sigma: float) -> np.ndarray:
    """Integer-quantized Gaussian half-kernel, index -r..r."""
    r = math.ceil(3.0 * sigma)
    i = np.arange(-r, r + 1, dtype=np.float64)
    return np.rint(_KERNEL_SCALE * np.exp(-(i * i) / (2.0 * sigma * sigma))).astype(np.int64)


def _blur_int(img: np.ndarray, sigma: float) -> np.ndarray:
    q = blur_kernel_1d(sigma)
    r = (len(q) - 1) // 2
    padded = np.pad(img.astype(np.int64), r, mode="edge")
    h, w = img.shape
    # Separable exact integer sum; division happens once at the end.
    s1 = np.zeros((h + 2 * r, w), dtype=np.int64)
    for j, qj in enumerate(q):
        s1 += qj * padded[:, j : j + w]
    s = np.zeros((h, w), dtype=np.int64)
    for i, qi in enumerate(q):
        s += qi * s1[i : i + h, :]
    d = int(q.sum()) ** 2
    return (s + d // 2) // d


def _sobel_int(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(b)
    gy = np.zeros_like(b)
    gx[1:-1, 1:-1] = (
        (b[:-2, 2:] + 2 * b[1:-1, 2:] + b[2:, 2:])
        - (b[:-2, :-2] + 2 * b[1:-1, :-2] + b[2:, :-2])
    )
    gy[1:-1, 1:-1] = (
        (b[2:, :-2] + 2 * b[2:, 1:-1] + b[2:, 2:])
        - (b[:-2, :-2] + 2 * b[:-2, 1:-1] + b[:-2, 2:])
    )
    return gx, gy


def canny(img: np.ndarray, params: CannyParams = CannyParams()) -> np.ndarray:
    """Edge-detect a uint8 grayscale image; returns a {0, 255} uint8 map."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("canny expects a (H, W) uint8 image")
    h, w = img.shape

    b = _blur_int(img, params.sigma)
    gx, gy = _sobel_int(b)
    m = gx * gx + gy * gy
    m[0, :] = m[-1, :] = 0
    m[:, 0] = m[:, -1] = 0

    ax = np.abs(gx)
    ay = np.abs(gy)
    horizontal = (ax + ay) ** 2 <= 2 * ax * ax
    vertical = (ay - ax) ** 2 >= 2 * ax * ax
    # Unit step toward the gradient direction for each sector.
    dr = np.where(horizontal, 0, np.where(gy > 0, 1, -1))
    dc = np.where(vertical, 0, np.where(gx > 0, 1, -1))

    mp = np.pad(m, 1)
    rows, cols = np.mgrid[0:h, 0:w]
    ahead = mp[rows + 1 + dr, cols + 1 + dc]
    behind = mp[rows + 1 - dr, cols + 1 - dc]
    survive = (m > 0) & (m >= ahead) & (m > behind)

    candidate = survive & (m > params.low * params.low)
    strong = survive & (m > params.high * params.high)

    reached = strong.copy()
    while True:
        # 8-neighborhood dilation as a row pass then a column pass.
        grown = reached.copy()
        grown[1:, :] |= reached[:-1, :]
        grown[:-1, :] |= reached[1:, :]
        tmp = grown.copy()
        grown[:, 1:] |= tmp[:, :-1]
        grown[:, :-1] |= tmp[:, 1:]
        grown &= candidate
        grown |= reached
        if (grown == reached).all():
            break
        reached = grown

    return np.where(reached, 255, 0).astype(np.uint8)


def compose_edges(maps: list[np.ndarray]) -> np.ndarray:
    """Pixelwise union (maximum) of edge maps of identical size."""
    if not maps:
        raise ValueError("compose_edges needs at least one map")
    first = np.asarray(maps[0])
    for m in maps[1:]:
        if np.asarray(m).shape != first.shape:
            raise ValueError("edge maps differ in size")
    out = first.copy()
    for m in maps[1:]:
        np.maximum(out, m, out=out)
    return out


def cc_edges(
    mesh: TriMesh,
    labels: ComponentLabeling,
    view: ViewSpec,
    n_iters: int = 5,
    seed: int = 0,
    params: CannyParams = CannyParams(),
    gbuffer: GBuffer | None = None,
) -> np.ndarray:
    """Union of Canny edges over randomly recolored component renders.

    Each iteration draws a fresh palette from one seeded generator, so the
    first k iterations of any run with the same seed are identical; the
    union therefore only grows with ``n_iters``.  A pre-rasterized GBuffer
    for the same mesh/view may be passed to skip redundant rasterization.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    g = gbuffer if gbuffer is not None else rasterize(mesh, view)
    fg = g.foreground
    rng = np.random.default_rng(seed)
    out = np.zeros(g.shape, dtype=np.uint8)
    for _ in range(n_iters):
        palette = rng.integers(0, 256, size=(labels.count, 3), dtype=np.uint8)
        img = np.full((*g.shape, 3), 255, dtype=np.uint8)
        img[fg] = palette[labels.face_labels[g.face_id[fg]]]
        out = compose_edges([out, canny(luma(img), params)])
    return out


def depth_edges(
    mesh: TriMesh,
    view: ViewSpec,
    params: CannyParams = CannyParams(),
    gbuffer: GBuffer | None = None,
) -> np.ndarray:
    g = gbuffer if gbuffer is not None else rasterize(mesh, view)
    return canny(depth_to_image(g), params)


def normal_edges(
    mesh: TriMesh,
    view: ViewSpec,
    params: CannyParams = CannyParams(),
    gbuffer: GBuffer | None = None,
) -> np.ndarray:
    g = gbuffer if gbuffer is not None else rasterize(mesh, view)
    return canny(luma(normals_to_image(g)), params)
