"""Per-pixel ray-casting oracle for the rasterizer.

Builds its own camera from the view parameters and intersects every pixel
ray with every triangle (Moller-Trumbore, double-sided, no acceleration
structure).  Reports the nearest hit per pixel; exact depth ties go to the
lowest face index, matching the rasterizer's strict z-test over faces in
index order.
"""

from __future__ import annotations

import math

import numpy as np


def camera_frame(view) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Eye position and orthonormal (right, up, forward) axes for a view."""
    az = math.radians(view.azimuth)
    el = math.radians(view.elevation)
    eye = view.radius * np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )
    fwd = -eye / np.linalg.norm(eye)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(math.cos(el)) < 1e-6:
        up_hint = np.array([0.0, 0.0, -1.0 if el > 0 else 1.0])
    right = np.cross(fwd, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    return eye, right, up, fwd


def pixel_rays(view) -> tuple[np.ndarray, np.ndarray]:
    """Unit world-space ray directions through every pixel center.

    Returns (eye, dirs) with dirs shaped (H, W, 3)."""
    eye, right, up, fwd = camera_frame(view)
    H, W = view.height, view.width
    tan_half = math.tan(math.radians(view.fov_y) / 2.0)
    aspect = W / H
    jj, ii = np.meshgrid(np.arange(W), np.arange(H))
    x_ndc = 2.0 * (jj + 0.5) / W - 1.0
    y_ndc = 1.0 - 2.0 * (ii + 0.5) / H
    d = (
        x_ndc[..., None] * (tan_half * aspect) * right
        + y_ndc[..., None] * tan_half * up
        + fwd
    )
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    return eye, d


def raycast(mesh, view) -> dict[str, np.ndarray]:
    """Cast one ray per pixel against all triangles.

    Returns foreground mask, face ids (-1 background), and depths (+inf
    background); depth is the Euclidean distance to the hit."""
    eye, dirs = pixel_rays(view)
    H, W = dirs.shape[:2]
    rays = dirs.reshape(-1, 3)

    tri = mesh.positions[mesh.faces[:, :, 0]]  # (F, 3, 3)
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0

    best_t = np.full(rays.shape[0], np.inf)
    best_f = np.full(rays.shape[0], -1, dtype=np.int32)

    # Vectorized over faces per chunk of rays to bound memory.
    chunk = 4096
    eps = 1e-12
    for start in range(0, rays.shape[0], chunk):
        d = rays[start : start + chunk]  # (n, 3)
        n = d.shape[0]
        pvec = np.cross(d[:, None, :], e2[None, :, :])          # (n, F, 3)
        det = np.einsum("fk,nfk->nf", e1, pvec)                 # (n, F)
        ok = np.abs(det) > eps
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = eye - v0                                          # (F, 3)
        u = np.einsum("fk,nfk->nf", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)                                # (F, 3)
        v = np.einsum("nk,fk->nf", d, qvec) * inv_det
        t = np.einsum("fk,fk->f", e2, qvec)[None, :] * inv_det
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-6)
        t = np.where(hit, t, np.inf)
        # Nearest hit; ties to the lowest face index via argmin's first-min rule.
        fbest = np.argmin(t, axis=1)
        tbest = t[np.arange(n), fbest]
        better = tbest < best_t[start : start + n]
        best_t[start : start + n][better] = tbest[better]
        best_f[start : start + n][better] = fbest[better].astype(np.int32)

    return {
        "foreground": (best_f >= 0).reshape(H, W),
        "face_id": best_f.reshape(H, W),
        "depth": best_t.reshape(H, W),
    }


def ray_face_depth(mesh, view, face: int, row: int, col: int) -> float:
    """Depth of one specific face along one pixel's ray (inf if missed)."""
    eye, dirs = pixel_rays(view)
    d = dirs[row, col]
    tri = mesh.positions[mesh.faces[face, :, 0]]
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    pvec = np.cross(d, e2)
    det = float(e1 @ pvec)
    if abs(det) < 1e-12:
        return math.inf
    inv = 1.0 / det
    tvec = eye - tri[0]
    u = float(tvec @ pvec) * inv
    qvec = np.cross(tvec, e1)
    v = float(d @ qvec) * inv
    t = float(e2 @ qvec) * inv
    if u < 0 or v < 0 or u + v > 1 or t <= 1e-6:
        return math.inf
    return t
