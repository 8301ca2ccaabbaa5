"""Software rasterizer producing per-view G-buffers.

Conventions, fixed for reproducibility:

* Right-handed world, +y up.  A view is a spherical camera position
  ``eye = radius * (cos(el)sin(az), sin(el), cos(el)cos(az))`` looking at
  the origin, so azimuth 0 / elevation 0 puts the camera on +z looking
  down -z.  At elevation +-90 the up vector degenerates and is replaced
  by -z (north pole) or +z (south pole).
* Pixel (row i, col j) covers the continuous square [i, i+1) x [j, j+1)
  with its center at continuous coordinate (i, j) after the projection
  below; row 0 is the top of the image.
* Depth is Euclidean camera distance, so it matches the ray parameter of
  a unit-direction ray cast from the eye.
* Rasterization is double-sided with no antialiasing; attribute
  interpolation is perspective-correct; the z-test is strict, so the
  lowest face index wins exact depth ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import ComponentLabeling, TriMesh

_NEAR = 1e-6


@dataclass(frozen=True)
class ViewSpec:
    """Camera placement on the viewing sphere plus image size."""

    azimuth: float
    elevation: float
    radius: float = 3.0
    fov_y: float = 40.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if not 0.0 < self.fov_y < 180.0:
            raise ValueError(f"fov_y must be in (0, 180), got {self.fov_y}")
        if self.width < 16 or self.height < 16:
            raise ValueError("width and height must be at least 16 pixels")
        if self.radius <= 1.0:
            raise ValueError("radius must exceed 1 (bounding-sphere units)")


@dataclass(frozen=True)
class Camera:
    """Rigid view transform plus the perspective screen mapping."""

    eye: np.ndarray          # (3,) world position
    rotation: np.ndarray     # (3, 3) world->view rotation (rows: right, up, -forward)
    fov_y: float
    width: int
    height: int

    @property
    def view_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = -self.rotation @ self.eye
        return m

    @property
    def _tan_half(self) -> float:
        return math.tan(math.radians(self.fov_y) / 2.0)

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def world_to_view(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return (self.rotation @ (pts - self.eye).T).T

    def view_to_pixels(self, pts_view: np.ndarray) -> np.ndarray:
        """Continuous (col, row) coordinates of view-space points.

        Points at or behind the eye plane (-z <= 0) map to nan.
        """
        pts = np.atleast_2d(pts_view)
        w = -pts[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x_ndc = pts[:, 0] / (w * self._tan_half * self.aspect)
            y_ndc = pts[:, 1] / (w * self._tan_half)
        col = (x_ndc + 1.0) * self.width / 2.0 - 0.5
        row = (1.0 - y_ndc) * self.height / 2.0 - 0.5
        bad = w <= _NEAR
        col[bad] = np.nan
        row[bad] = np.nan
        return np.stack([col, row], axis=1)


def make_camera(view: ViewSpec) -> Camera:
    az = math.radians(view.azimuth)
    el = math.radians(view.elevation)
    eye = view.radius * np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )
    forward = -eye / np.linalg.norm(eye)  # toward origin
    up = np.array([0.0, 1.0, 0.0])
    if abs(math.cos(el)) < 1e-6:  # camera on the y axis
        up = np.array([0.0, 0.0, -1.0 if el > 0 else 1.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    rotation = np.stack([right, true_up, -forward])
    return Camera(eye=eye, rotation=rotation, fov_y=view.fov_y, width=view.width, height=view.height)


@dataclass(frozen=True)
class GBuffer:
    """Per-pixel geometry render targets for one view.

    Background pixels carry depth=+inf, face_id=-1, zero normal/uv/cos.
    """

    depth: np.ndarray      # (H, W) float64
    normal: np.ndarray     # (H, W, 3) float64, view space, flipped toward camera
    face_id: np.ndarray    # (H, W) int32, -1 for background
    uv: np.ndarray         # (H, W, 2) float64
    foreground: np.ndarray  # (H, W) bool
    cos_view: np.ndarray   # (H, W) float64

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def rasterize(mesh: TriMesh, view: ViewSpec) -> GBuffer:
    """Z-buffered perspective rasterization of the whole mesh.

    Triangles with any vertex on or behind the eye plane are dropped
    (no near-plane clipping; normalized meshes with radius > 1 cameras
    never trigger this).
    """
    cam = make_camera(view)
    H, W = view.height, view.width

    depth = np.full((H, W), np.inf)
    normal = np.zeros((H, W, 3))
    uv_buf = np.zeros((H, W, 2))
    face_id = np.full((H, W), -1, dtype=np.int32)
    cos_buf = np.zeros((H, W))

    pos_view = cam.world_to_view(mesh.positions)
    if mesh.has_normals:
        nrm_view = (cam.rotation @ mesh.normals.T).T
    else:
        nrm_view = None
    pix = cam.view_to_pixels(pos_view)

    for f in range(mesh.n_faces):
        pi = mesh.faces[f, :, 0]
        w_clip = -pos_view[pi, 2]
        if np.any(w_clip <= _NEAR):
            continue
        p2 = pix[pi]  # (3, 2) continuous (col, row)

        area = (p2[1, 0] - p2[0, 0]) * (p2[2, 1] - p2[0, 1]) - (p2[2, 0] - p2[0, 0]) * (
            p2[1, 1] - p2[0, 1]
        )
        if area == 0.0:
            continue

        col_min = max(int(math.ceil(p2[:, 0].min())), 0)
        col_max = min(int(math.floor(p2[:, 0].max())), W - 1)
        row_min = max(int(math.ceil(p2[:, 1].min())), 0)
        row_max = min(int(math.floor(p2[:, 1].max())), H - 1)
        if col_min > col_max or row_min > row_max:
            continue

        cols, rows = np.meshgrid(
            np.arange(col_min, col_max + 1, dtype=np.float64),
            np.arange(row_min, row_max + 1, dtype=np.float64),
        )

        def edge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
            return (b[0] - a[0]) * (rows - a[1]) - (b[1] - a[1]) * (cols - a[0])

        b0 = edge(p2[1], p2[2]) / area
        b1 = edge(p2[2], p2[0]) / area
        b2 = edge(p2[0], p2[1]) / area
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not inside.any():
            continue

        bary = np.stack([b0[inside], b1[inside], b2[inside]])  # (3, n)
        inv_w = 1.0 / w_clip  # (3,)
        denom = (bary * inv_w[:, None]).sum(axis=0)
        persp = bary * inv_w[:, None] / denom  # perspective-correct weights

        pts = (persp[:, :, None] * pos_view[pi][:, None, :]).sum(axis=0)  # (n, 3)
        d = np.linalg.norm(pts, axis=1)

        rr = rows[inside].astype(np.intp)
        cc = cols[inside].astype(np.intp)
        closer = d < depth[rr, cc]
        if not closer.any():
            continue
        rr, cc = rr[closer], cc[closer]
        pts = pts[closer]
        d = d[closer]
        persp = persp[:, closer]

        if nrm_view is not None:
            ni = mesh.faces[f, :, 2]
            n = (persp[:, :, None] * nrm_view[ni][:, None, :]).sum(axis=0)
        else:
            fn = np.cross(
                pos_view[pi[1]] - pos_view[pi[0]], pos_view[pi[2]] - pos_view[pi[0]]
            )
            n = np.broadcast_to(fn, (len(d), 3)).copy()
        lens = np.linalg.norm(n, axis=1)
        lens[lens == 0] = 1.0
        n /= lens[:, None]
        to_cam = -pts / d[:, None]
        cosv = (n * to_cam).sum(axis=1)
        flip = cosv < 0
        n[flip] = -n[flip]
        cosv = np.abs(cosv)

        ti = mesh.faces[f, :, 1]
        if (ti >= 0).all():
            uv_face = mesh.uvs[ti]
            uv_pix = (persp[:, :, None] * uv_face[:, None, :]).sum(axis=0)
        else:
            uv_pix = np.zeros((len(d), 2))

        depth[rr, cc] = d
        normal[rr, cc] = n
        uv_buf[rr, cc] = uv_pix
        face_id[rr, cc] = f
        cos_buf[rr, cc] = cosv

    return GBuffer(
        depth=depth,
        normal=normal,
        face_id=face_id,
        uv=uv_buf,
        foreground=face_id >= 0,
        cos_view=cos_buf,
    )


def depth_to_image(g: GBuffer) -> np.ndarray:
    """Map foreground depth linearly to [0, 255] with nearest -> 255.

    Background is 0.  A constant-depth foreground maps to 255.
    """
    out = np.zeros(g.shape, dtype=np.uint8)
    fg = g.foreground
    if not fg.any():
        return out
    d = g.depth[fg]
    near, far = d.min(), d.max()
    if far == near:
        out[fg] = 255
    else:
        out[fg] = np.rint((far - d) / (far - near) * 255.0).astype(np.uint8)
    return out


def normals_to_image(g: GBuffer) -> np.ndarray:
    """Map view-space normal components from [-1, 1] to RGB [0, 255]."""
    out = np.zeros((*g.shape, 3), dtype=np.uint8)
    fg = g.foreground
    out[fg] = np.rint((g.normal[fg] + 1.0) / 2.0 * 255.0).astype(np.uint8)
    return out


def render_cc_colors(
    mesh: TriMesh,
    labels: ComponentLabeling,
    palette: np.ndarray,
    view: ViewSpec,
) -> np.ndarray:
    """Flat-shade each face by its component's palette color; white background."""
    palette = np.asarray(palette, dtype=np.uint8).reshape(-1, 3)
    if len(palette) != labels.count:
        raise ValueError(f"palette has {len(palette)} colors for {labels.count} components")
    g = rasterize(mesh, view)
    out = np.full((*g.shape, 3), 255, dtype=np.uint8)
    fg = g.foreground
    out[fg] = palette[labels.face_labels[g.face_id[fg]]]
    return out


def sample_atlas(color: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Alpha-aware bilinear sample of an RGBA atlas at uv points.

    v runs bottom-up (OBJ convention) while atlas row 0 is the top.  Texels
    with alpha 0 drop out of the bilinear average; where all four taps are
    empty the sample falls back to white.
    Returns float64 (N, 3).
    """
    h, w = color.shape[:2]
    uv = np.atleast_2d(uv)
    tx = uv[:, 0] * w - 0.5
    ty = (1.0 - uv[:, 1]) * h - 0.5
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0

    out = np.zeros((len(uv), 3))
    wsum = np.zeros(len(uv))
    for dy in (0, 1):
        for dx in (0, 1):
            xi = np.clip(x0 + dx, 0, w - 1)
            yi = np.clip(y0 + dy, 0, h - 1)
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            texel = color[yi, xi].astype(np.float64)
            a = texel[:, 3] / 255.0
            out += (wgt * a)[:, None] * texel[:, :3]
            wsum += wgt * a
    empty = wsum <= 0.0
    wsum[empty] = 1.0
    out /= wsum[:, None]
    out[empty] = 255.0
    return out


def render_textured(
    mesh: TriMesh, atlas, view: ViewSpec, gbuffer: GBuffer | None = None
) -> np.ndarray:
    """Render the mesh with an RGBA texture atlas; white background.

    ``atlas`` is either an (H, W, 4) uint8 array or any object exposing a
    ``color`` attribute shaped that way.  A pre-rasterized GBuffer for the
    same mesh/view skips redundant rasterization.
    """
    if not mesh.has_uvs:
        raise ValueError("mesh has no texture coordinates")
    color = atlas if isinstance(atlas, np.ndarray) else atlas.color
    g = gbuffer if gbuffer is not None else rasterize(mesh, view)
    out = np.full((*g.shape, 3), 255, dtype=np.uint8)
    fg = g.foreground
    if fg.any():
        sampled = sample_atlas(color, g.uv[fg])
        out[fg] = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return out
