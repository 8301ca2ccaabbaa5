"""Iterative multi-view texturing: schedule views, condition a generator,
classify pixels keep/refine/new, and back-project generated views into a
UV texture atlas.

The atlas tracks, per texel, the best view quality seen so far (the cosine
between the surface normal and the direction to the camera) and a status:
unseen, generated (first write), or refined (overwritten from a better
view).  Scores never decrease.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import edges as edges_mod
from .edges import CannyParams
from .generator import GeneratorError, GeneratorRequest
from .image import save_png
from .mesh import TriMesh, connected_components, save_mesh
from .render import GBuffer, ViewSpec, make_camera, rasterize, render_textured, sample_atlas

_OCCLUSION_EPS = 1e-3


class TexelStatus(IntEnum):
    UNSEEN = 0
    GENERATED = 1
    REFINED = 2


class MaskClass(IntEnum):
    BACKGROUND = 0
    NEW = 1
    REFINE = 2
    KEEP = 3


@dataclass
class TextureAtlas:
    """RGBA texel grid with per-texel quality score and status."""

    color: np.ndarray   # (H, W, 4) uint8, alpha 0 = unseen
    score: np.ndarray   # (H, W) float64 in [0, 1]
    status: np.ndarray  # (H, W) uint8 TexelStatus

    @classmethod
    def empty(cls, size: int) -> "TextureAtlas":
        return cls(
            color=np.zeros((size, size, 4), dtype=np.uint8),
            score=np.zeros((size, size)),
            status=np.zeros((size, size), dtype=np.uint8),
        )

    @classmethod
    def from_image(cls, rgb: np.ndarray) -> "TextureAtlas":
        """Fully-seen atlas from an RGB(A) image (for truth atlases and previews)."""
        h, w = rgb.shape[:2]
        color = np.full((h, w, 4), 255, dtype=np.uint8)
        color[..., :3] = rgb[..., :3]
        if rgb.shape[2] == 4:
            color[..., 3] = rgb[..., 3]
        return cls(
            color=color,
            score=np.ones((h, w)),
            status=np.full((h, w), TexelStatus.GENERATED, dtype=np.uint8),
        )

    @property
    def size(self) -> tuple[int, int]:
        return self.color.shape[:2]

    def seen_fraction(self) -> float:
        return float((self.status != TexelStatus.UNSEEN).mean())

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(self.color.copy(), self.score.copy(), self.status.copy())


@dataclass(frozen=True)
class TexturingConfig:
    n_views: int = 8
    atlas_size: int = 1024
    view_size: int = 512
    lambda_ip: float = 0.6
    lambda_cn: float = 1.0
    seed: int = 0
    edge_sources: tuple[str, ...] = ("cc", "depth", "normal")
    cc_iters: int = 5
    canny: CannyParams = field(default_factory=CannyParams)
    prompt: str = ""
    negative_prompt: str = ""
    refine_margin: float = 0.2
    cos_floor: float = 0.2

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if not 0.0 <= self.cos_floor < 1.0:
            raise ValueError("cos_floor must be in [0, 1)")
        if self.refine_margin <= 0.0:
            raise ValueError("refine_margin must be positive")
        bad = set(self.edge_sources) - {"cc", "depth", "normal"}
        if bad:
            raise ValueError(f"unknown edge sources: {sorted(bad)}")


@dataclass
class ViewReport:
    index: int
    azimuth: float
    elevation: float
    frac_new: float
    frac_refine: float
    frac_keep: float
    gen_ms: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "az": self.azimuth,
            "el": self.elevation,
            "frac_new": self.frac_new,
            "frac_refine": self.frac_refine,
            "frac_keep": self.frac_keep,
            "gen_ms": self.gen_ms,
        }


def view_schedule(
    n_views: int, radius: float = 3.0, fov_y: float = 40.0, size: int = 512
) -> list[ViewSpec]:
    """Deterministic orbit: azimuths evenly spaced from 0, elevations
    cycling 15 / -45 / 45 / -15 degrees.

    The radius keeps a unit bounding sphere inside a 40-degree frame
    (fits for radius >= 1/sin(20deg) ~= 2.92), and the cycle reaches both
    steep-up and steep-down views so closed surfaces get full coverage.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    elevations = (15.0, -45.0, 45.0, -15.0)
    return [
        ViewSpec(
            azimuth=360.0 * i / n_views,
            elevation=elevations[i % 4],
            radius=radius,
            fov_y=fov_y,
            width=size,
            height=size,
        )
        for i in range(n_views)
    ]


def texel_index(uv: np.ndarray, atlas_hw: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Nearest texel (row, col) for uv points; v runs bottom-up."""
    h, w = atlas_hw
    uv = np.atleast_2d(uv)
    tx = np.clip(np.floor(uv[:, 0] * w).astype(np.int64), 0, w - 1)
    ty = np.clip(np.floor((1.0 - uv[:, 1]) * h).astype(np.int64), 0, h - 1)
    return ty, tx


def compute_view_masks(atlas: TextureAtlas, g: GBuffer, config: TexturingConfig) -> np.ndarray:
    """Classify each view pixel.

    Foreground pixel p with texel t = texel(uv(p)):
      cos_view(p) < cos_floor             -> KEEP (too oblique to trust)
      t unseen                            -> NEW
      cos_view(p) > score(t) + margin     -> REFINE
      otherwise                           -> KEEP
    Background pixels are BACKGROUND.
    """
    masks = np.full(g.shape, MaskClass.BACKGROUND, dtype=np.uint8)
    fg = g.foreground
    if not fg.any():
        return masks
    ty, tx = texel_index(g.uv[fg], atlas.size)
    cos = g.cos_view[fg]
    unseen = atlas.status[ty, tx] == TexelStatus.UNSEEN
    better = cos > atlas.score[ty, tx] + config.refine_margin
    cls = np.where(
        cos < config.cos_floor,
        MaskClass.KEEP,
        np.where(unseen, MaskClass.NEW, np.where(better, MaskClass.REFINE, MaskClass.KEEP)),
    )
    masks[fg] = cls
    return masks


def project_view(
    atlas: TextureAtlas,
    mesh: TriMesh,
    view: ViewSpec,
    g: GBuffer,
    generated: np.ndarray,
    masks: np.ndarray,
    config: TexturingConfig,
) -> TextureAtlas:
    """Back-project a generated view into the atlas, texel-space first.

    Every triangle is rasterized over the atlas grid in UV space; each
    covered texel's surface point is projected into the view and accepted
    when it is visible there (the G-buffer shows the same face, or a depth
    within 1e-3) and the pixel is classified NEW or REFINE.  Accepted
    texels bilinearly sample the generated image; their score becomes the
    pixel's cos_view.  Writes that would lower a texel's pre-view score are
    skipped so scores stay monotone; within a view, later faces win.

    Returns a new atlas; the input is not modified.
    """
    if generated.shape[:2] != g.shape:
        raise ValueError(f"generated image {generated.shape[:2]} != view {g.shape}")
    if not mesh.has_uvs:
        raise ValueError("mesh has no texture coordinates")

    out = atlas.copy()
    ah, aw = atlas.size
    cam = make_camera(view)
    H, W = g.shape
    prev_score = atlas.score
    prev_unseen = atlas.status == TexelStatus.UNSEEN
    gen_rgba = np.dstack([generated[..., :3], np.full(g.shape, 255, dtype=np.uint8)])

    for f in range(mesh.n_faces):
        uv_tri = mesh.uvs[mesh.faces[f, :, 1]]
        # Continuous texel coordinates; texel centers sit at integers.
        px = uv_tri[:, 0] * aw - 0.5
        py = (1.0 - uv_tri[:, 1]) * ah - 0.5

        area = (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0])
        if area == 0.0:
            continue
        x0 = max(int(np.ceil(px.min())), 0)
        x1 = min(int(np.floor(px.max())), aw - 1)
        y0 = max(int(np.ceil(py.min())), 0)
        y1 = min(int(np.floor(py.max())), ah - 1)
        if x0 > x1 or y0 > y1:
            continue
        xs, ys = np.meshgrid(
            np.arange(x0, x1 + 1, dtype=np.float64), np.arange(y0, y1 + 1, dtype=np.float64)
        )
        b0 = ((px[2] - px[1]) * (ys - py[1]) - (py[2] - py[1]) * (xs - px[1])) / area
        b1 = ((px[0] - px[2]) * (ys - py[2]) - (py[0] - py[2]) * (xs - px[2])) / area
        b2 = ((px[1] - px[0]) * (ys - py[0]) - (py[1] - py[0]) * (xs - px[0])) / area
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not inside.any():
            continue
        bary = np.stack([b0[inside], b1[inside], b2[inside]])  # (3, n)
        tex_r = ys[inside].astype(np.intp)
        tex_c = xs[inside].astype(np.intp)

        tri = mesh.positions[mesh.faces[f, :, 0]]
        pts = bary.T @ tri  # (n, 3) surface points
        pts_view = cam.world_to_view(pts)
        pix = cam.view_to_pixels(pts_view)
        col, row = pix[:, 0], pix[:, 1]
        ok = np.isfinite(col) & (col >= -0.5) & (col <= W - 0.5) & (row >= -0.5) & (row <= H - 0.5)
        if not ok.any():
            continue

        nr = np.clip(np.rint(row), 0, H - 1).astype(np.intp)
        nc = np.clip(np.rint(col), 0, W - 1).astype(np.intp)
        depth_here = np.linalg.norm(pts_view, axis=1)
        same_face = g.face_id[nr, nc] == f
        visible = same_face | (depth_here <= g.depth[nr, nc] + _OCCLUSION_EPS)
        writable_class = (masks[nr, nc] == MaskClass.NEW) | (masks[nr, nc] == MaskClass.REFINE)
        cos = g.cos_view[nr, nc]
        monotone = prev_unseen[tex_r, tex_c] | (cos > prev_score[tex_r, tex_c])
        # cos must be strictly positive so a written texel never carries
        # score 0 (score 0 is reserved for unseen texels).
        accept = ok & visible & writable_class & monotone & (cos > 0.0)
        if not accept.any():
            continue

        tr, tc = tex_r[accept], tex_c[accept]
        # Bilinear sample of the generated view at the continuous projection.
        u = (col[accept] + 0.5) / W
        v = 1.0 - (row[accept] + 0.5) / H
        rgb = sample_atlas(gen_rgba, np.stack([u, v], axis=1))

        out.color[tr, tc, :3] = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        out.color[tr, tc, 3] = 255
        out.score[tr, tc] = cos[accept]
        out.status[tr, tc] = np.where(
            masks[nr, nc][accept] == MaskClass.NEW, TexelStatus.GENERATED, TexelStatus.REFINED
        ).astype(np.uint8)

    return out


def texture_mesh(
    mesh: TriMesh,
    backend,
    config: TexturingConfig,
    reference_image: np.ndarray,
    concept_id: str | None = None,
) -> tuple[TextureAtlas, list[ViewReport]]:
    """Run the full iterative texturing loop.

    For each view: rasterize, build the configured edge union, ask the backend
    for a textured view (passing the current atlas render and keep mask so
    capable backends can inpaint), then back-project.  Returns the final
    atlas and per-view reports.  Generator failures carry the view index.
    """
    if not mesh.has_uvs:
        raise ValueError("mesh has no texture coordinates; generate charts first")

    labels = connected_components(mesh) if "cc" in config.edge_sources else None
    atlas = TextureAtlas.empty(config.atlas_size)
    reports: list[ViewReport] = []

    views = view_schedule(config.n_views, size=config.view_size)
    for i, view in enumerate(views):
        g = rasterize(mesh, view)
        sources = []
        if "cc" in config.edge_sources:
            sources.append(
                edges_mod.cc_edges(
                    mesh, labels, view, n_iters=config.cc_iters,
                    seed=config.seed, params=config.canny, gbuffer=g,
                )
            )
        if "depth" in config.edge_sources:
            sources.append(edges_mod.depth_edges(mesh, view, params=config.canny, gbuffer=g))
        if "normal" in config.edge_sources:
            sources.append(edges_mod.normal_edges(mesh, view, params=config.canny, gbuffer=g))
        edge_map = edges_mod.compose_edges(sources) if sources else np.zeros(g.shape, np.uint8)

        masks = compute_view_masks(atlas, g, config)
        fg_u8 = np.where(g.foreground, 255, 0).astype(np.uint8)
        keep_mask = np.where(g.foreground & (masks == MaskClass.KEEP), 255, 0).astype(np.uint8)
        keep_image = render_textured(mesh, atlas, view, gbuffer=g)
        req = GeneratorRequest(
            edge_map=edge_map,
            foreground_mask=fg_u8,
            reference_image=reference_image,
            prompt=config.prompt,
            negative_prompt=config.negative_prompt,
            lambda_ip=config.lambda_ip,
            lambda_cn=config.lambda_cn,
            seed=config.seed + i,
            width=view.width,
            height=view.height,
            keep_image=keep_image,
            keep_mask=keep_mask,
            concept_id=concept_id,
        )
        t0 = time.perf_counter()
        try:
            resp = backend.generate(req, view)
        except GeneratorError as exc:
            exc.args = (f"view {i}: {exc}",)
            raise
        # Deterministic backends report 0 so runs are byte-reproducible.
        gen_ms = 0.0 if getattr(backend, "deterministic", False) else (
            (time.perf_counter() - t0) * 1000.0
        )

        atlas = project_view(atlas, mesh, view, g, resp.image, masks, config)

        total = masks.size
        reports.append(
            ViewReport(
                index=i,
                azimuth=view.azimuth,
                elevation=view.elevation,
                frac_new=float((masks == MaskClass.NEW).sum() / total),
                frac_refine=float((masks == MaskClass.REFINE).sum() / total),
                frac_keep=float((masks == MaskClass.KEEP).sum() / total),
                gen_ms=gen_ms,
            )
        )
    return atlas, reports


def dilate_unseen(atlas: TextureAtlas, max_rounds: int | None = None) -> np.ndarray:
    """Flood unseen texels with the mean of their seen 8-neighbors,
    round by round, until no unseen texels remain (or nothing changes).
    Returns an RGB array; the atlas itself is untouched."""
    h, w = atlas.size
    rgb = atlas.color[..., :3].astype(np.float64)
    seen = atlas.status != TexelStatus.UNSEEN
    if max_rounds is None:
        max_rounds = h + w
    offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    for _ in range(max_rounds):
        if seen.all():
            break
        acc = np.zeros_like(rgb)
        cnt = np.zeros((h, w))
        for dr, dc in offsets:
            src_r = slice(max(dr, 0), h + min(dr, 0))
            src_c = slice(max(dc, 0), w + min(dc, 0))
            dst_r = slice(max(-dr, 0), h + min(-dr, 0))
            dst_c = slice(max(-dc, 0), w + min(-dc, 0))
            s = seen[src_r, src_c]
            acc[dst_r, dst_c][s] += rgb[src_r, src_c][s]
            cnt[dst_r, dst_c][s] += 1.0
        frontier = ~seen & (cnt > 0)
        if not frontier.any():
            break
        rgb[frontier] = acc[frontier] / cnt[frontier][:, None]
        seen |= frontier
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def export_textured_mesh(mesh: TriMesh, atlas: TextureAtlas, path: str | Path) -> dict[str, Path]:
    """Write OBJ + MTL + atlas PNG; unseen texels are dilation-filled so
    renderers show no holes.  ``path`` is the OBJ path; siblings get the
    same stem."""
    obj_path = Path(path)
    mtl_path = obj_path.with_suffix(".mtl")
    png_path = obj_path.with_suffix(".png")

    save_mesh(mesh, obj_path, mtl_name=mtl_path.name)
    mtl_path.write_text(
        "newmtl material0\n"
        "Ka 1.0 1.0 1.0\n"
        "Kd 1.0 1.0 1.0\n"
        "Ks 0.0 0.0 0.0\n"
        f"map_Kd {png_path.name}\n"
    )
    save_png(dilate_unseen(atlas), png_path)
    return {"obj": obj_path, "mtl": mtl_path, "png": png_path}


def write_report(reports: list[ViewReport], path: str | Path, extra: dict | None = None) -> None:
    totals = {
        "n_views": len(reports),
        "frac_new": sum(r.frac_new for r in reports),
        "frac_refine": sum(r.frac_refine for r in reports),
        "frac_keep": sum(r.frac_keep for r in reports),
        "gen_ms": sum(r.gen_ms for r in reports),
    }
    if extra:
        totals.update(extra)
    doc = {"views": [r.to_dict() for r in reports], "totals": totals}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
