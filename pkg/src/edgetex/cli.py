"""Command-line surface for batch texturing, edge extraction, previews,
and concept inversion.

Exit codes form a stable contract: 0 success, 2 usage error, 3 I/O error,
4 generator/backend error.

``texture`` and ``invert`` read an optional JSON config file whose keys
mirror the flag names (dashes become underscores); explicit flags override
file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import edges as edges_mod
from . import generator as gen_mod
from .edges import CannyParams
from .image import load_png, save_png
from .mesh import connected_components, generate_triangle_charts, load_mesh, normalize_mesh
from .render import ViewSpec, render_textured
from .texturing import (
    TextureAtlas,
    TexturingConfig,
    export_textured_mesh,
    texture_mesh,
    write_report,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BACKEND = 4

_SOURCES = ("cc", "depth", "normal")


class UsageError(Exception):
    pass


def _parse_sources(spec: str) -> tuple[str, ...]:
    names = tuple(s.strip() for s in spec.split(",") if s.strip())
    bad = [s for s in names if s not in _SOURCES]
    if bad or not names:
        raise UsageError(f"unknown edge sources: {bad or spec!r} (choose from {','.join(_SOURCES)})")
    return names


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return doc


def _merged(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """Flag > config file > default."""
    flag_val = getattr(args, key, None)
    if flag_val is not None:
        return flag_val
    if key in file_cfg:
        return file_cfg[key]
    return default


def _canny_from(args, file_cfg) -> CannyParams:
    return CannyParams(
        sigma=float(_merged(args, file_cfg, "canny_sigma", 1.4)),
        low=float(_merged(args, file_cfg, "canny_low", 100.0)),
        high=float(_merged(args, file_cfg, "canny_high", 200.0)),
    )


def _prepared_mesh(path: str):
    mesh = load_mesh(path)
    mesh = normalize_mesh(mesh)
    if mesh.needs_uv:
        mesh = generate_triangle_charts(mesh)
    return mesh


def cmd_edges(args: argparse.Namespace) -> int:
    mesh = _prepared_mesh(args.mesh)
    sources = _parse_sources(args.sources)
    params = CannyParams(
        sigma=1.4 if args.canny_sigma is None else args.canny_sigma,
        low=100.0 if args.canny_low is None else args.canny_low,
        high=200.0 if args.canny_high is None else args.canny_high,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    azimuths = [float(a) for a in str(args.az).split(",")]
    labels = connected_components(mesh) if "cc" in sources else None
    for vi, az in enumerate(azimuths):
        view = ViewSpec(azimuth=az, elevation=args.el, radius=args.radius,
                        fov_y=args.fov, width=args.size, height=args.size)
        prefix = f"view{vi:02d}_" if len(azimuths) > 1 else ""
        maps = []
        if "cc" in sources:
            m = edges_mod.cc_edges(mesh, labels, view, n_iters=args.cc_iters,
                                   seed=args.seed, params=params)
            save_png(m, out_dir / f"{prefix}edges_cc.png")
            maps.append(m)
        if "depth" in sources:
            m = edges_mod.depth_edges(mesh, view, params=params)
            save_png(m, out_dir / f"{prefix}edges_depth.png")
            maps.append(m)
        if "normal" in sources:
            m = edges_mod.normal_edges(mesh, view, params=params)
            save_png(m, out_dir / f"{prefix}edges_normal.png")
            maps.append(m)
        save_png(edges_mod.compose_edges(maps), out_dir / f"{prefix}edges_union.png")
        print(f"wrote {len(maps) + 1} edge maps to {out_dir}" + (f" (view {vi})" if prefix else ""))
    return EXIT_OK


def _texture_once(mesh, backend, config, reference, concept_id, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        atlas, reports = texture_mesh(mesh, backend, config, reference, concept_id=concept_id)
    except gen_mod.GeneratorError as exc:
        # Flag the directory so partial results are never mistaken for a run.
        (out_dir / "FAILED").write_text(f"{exc}\n")
        raise
    failed = out_dir / "FAILED"
    if failed.exists():
        failed.unlink()
    save_png(atlas.color, out_dir / "atlas.png")
    export_textured_mesh(mesh, atlas, out_dir / "mesh.obj")
    write_report(reports, out_dir / "report.json",
                 extra={"seen_frac": atlas.seen_fraction()})
    print(f"wrote atlas, mesh, and report to {out_dir}")


def cmd_texture(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)

    mesh_path = _merged(args, file_cfg, "mesh", None)
    ref_path = _merged(args, file_cfg, "reference", None)
    if not mesh_path or not ref_path:
        raise UsageError("texture requires --mesh and --reference (flag or config)")
    backend_name = _merged(args, file_cfg, "backend", "mock")
    if backend_name not in ("mock", "remote"):
        raise UsageError(f"unknown backend {backend_name!r}")
    endpoint = _merged(args, file_cfg, "endpoint", None)
    if backend_name == "remote" and not endpoint:
        raise UsageError("remote backend requires --endpoint")
    out_root = Path(_merged(args, file_cfg, "out", "texture_out"))

    lam_spec = str(_merged(args, file_cfg, "lambda_ip", "0.6"))
    lambdas = [float(v) for v in lam_spec.split(",")]

    mesh = _prepared_mesh(mesh_path)
    reference = load_png(ref_path)
    if reference.ndim == 2:
        reference = np.stack([reference] * 3, axis=-1)
    reference = reference[..., :3]

    concept_id = _merged(args, file_cfg, "concept_id", None)
    backend = (
        gen_mod.MockBackend()
        if backend_name == "mock"
        else gen_mod.RemoteBackend(endpoint, timeout=float(_merged(args, file_cfg, "timeout", 300.0)))
    )

    for lam in lambdas:
        config = TexturingConfig(
            n_views=int(_merged(args, file_cfg, "views", 8)),
            atlas_size=int(_merged(args, file_cfg, "atlas_size", 1024)),
            view_size=int(_merged(args, file_cfg, "view_size", 512)),
            lambda_ip=lam,
            lambda_cn=float(_merged(args, file_cfg, "lambda_cn", 1.0)),
            seed=int(_merged(args, file_cfg, "seed", 0)),
            edge_sources=_parse_sources(str(_merged(args, file_cfg, "sources", "cc,depth,normal"))),
            cc_iters=int(_merged(args, file_cfg, "cc_iters", 5)),
            canny=_canny_from(args, file_cfg),
            prompt=str(_merged(args, file_cfg, "prompt", "")),
            negative_prompt=str(_merged(args, file_cfg, "negative_prompt", "")),
            refine_margin=float(_merged(args, file_cfg, "refine_margin", 0.2)),
            cos_floor=float(_merged(args, file_cfg, "cos_floor", 0.2)),
        )
        out_dir = out_root if len(lambdas) == 1 else out_root / f"lambda_{lam:g}"
        _texture_once(mesh, backend, config, reference, concept_id, out_dir)
    return EXIT_OK


def cmd_preview(args: argparse.Namespace) -> int:
    mesh = _prepared_mesh(args.mesh)
    atlas_img = load_png(args.atlas)
    atlas = TextureAtlas.from_image(
        atlas_img if atlas_img.ndim == 3 else np.stack([atlas_img] * 3, axis=-1)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    for i in range(args.frames):
        view = ViewSpec(azimuth=360.0 * i / args.frames, elevation=args.el,
                        radius=args.radius, fov_y=args.fov,
                        width=args.size, height=args.size)
        save_png(render_textured(mesh, atlas, view), out_dir / f"frame_{i:04d}.png")
    print(f"wrote {args.frames} frames to {out_dir}")
    return EXIT_OK


def cmd_invert(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    endpoint = _merged(args, file_cfg, "endpoint", None)
    if not endpoint:
        raise UsageError("invert requires --endpoint (flag or config)")
    image_path = _merged(args, file_cfg, "image", None) or _merged(args, file_cfg, "reference", None)
    if not image_path:
        raise UsageError("invert requires --image (flag or config 'reference')")
    steps = int(_merged(args, file_cfg, "steps", 100))
    if steps < 1:
        raise UsageError("--steps must be >= 1")
    seed = int(_merged(args, file_cfg, "seed", 0))

    image = load_png(image_path)
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    concept_id = gen_mod.remote_invert(endpoint, image[..., :3], steps=steps, seed=seed)
    print(concept_id)

    if args.config:
        cfg = _load_config_file(args.config)
        cfg["concept_id"] = concept_id
        Path(args.config).write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgetex",
        description="Edge-conditioned mesh texturing from a single reference image.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_edges = sub.add_parser("edges", help="extract per-source and union edge maps for views")
    p_edges.add_argument("--mesh", required=True, help="OBJ mesh path")
    p_edges.add_argument("--az", default="0", help="azimuth degrees, comma list for several views")
    p_edges.add_argument("--el", type=float, default=15.0, help="elevation degrees")
    p_edges.add_argument("--radius", type=float, default=3.0, help="camera distance")
    p_edges.add_argument("--fov", type=float, default=40.0, help="vertical field of view")
    p_edges.add_argument("--size", type=int, default=512, help="image size in pixels")
    p_edges.add_argument("--sources", default="cc,depth,normal",
                         help="comma subset of cc,depth,normal")
    p_edges.add_argument("--cc-iters", type=int, default=5, dest="cc_iters",
                         help="recoloring iterations for component edges")
    p_edges.add_argument("--seed", type=int, default=0)
    p_edges.add_argument("--canny-sigma", type=float, default=None, dest="canny_sigma")
    p_edges.add_argument("--canny-low", type=float, default=None, dest="canny_low")
    p_edges.add_argument("--canny-high", type=float, default=None, dest="canny_high")
    p_edges.add_argument("--out", default="edges_out", help="output directory")
    p_edges.set_defaults(func=cmd_edges)

    p_tex = sub.add_parser("texture", help="run the full texturing loop")
    p_tex.add_argument("--config", default=None, help="JSON config file")
    p_tex.add_argument("--mesh", default=None)
    p_tex.add_argument("--reference", default=None, help="reference texture image (PNG)")
    p_tex.add_argument("--prompt", default=None)
    p_tex.add_argument("--negative-prompt", default=None, dest="negative_prompt")
    p_tex.add_argument("--backend", default=None, choices=("mock", "remote"))
    p_tex.add_argument("--endpoint", default=None, help="generator service base URL")
    p_tex.add_argument("--timeout", type=float, default=None)
    p_tex.add_argument("--out", default=None, help="output directory")
    p_tex.add_argument("--views", type=int, default=None)
    p_tex.add_argument("--atlas-size", type=int, default=None, dest="atlas_size")
    p_tex.add_argument("--view-size", type=int, default=None, dest="view_size")
    p_tex.add_argument("--lambda-ip", default=None, dest="lambda_ip",
                       help="image-prompt weight; comma list sweeps values")
    p_tex.add_argument("--lambda-cn", type=float, default=None, dest="lambda_cn")
    p_tex.add_argument("--seed", type=int, default=None)
    p_tex.add_argument("--sources", default=None)
    p_tex.add_argument("--cc-iters", type=int, default=None, dest="cc_iters")
    p_tex.add_argument("--canny-sigma", type=float, default=None, dest="canny_sigma")
    p_tex.add_argument("--canny-low", type=float, default=None, dest="canny_low")
    p_tex.add_argument("--canny-high", type=float, default=None, dest="canny_high")
    p_tex.add_argument("--cos-floor", type=float, default=None, dest="cos_floor")
    p_tex.add_argument("--refine-margin", type=float, default=None, dest="refine_margin")
    p_tex.add_argument("--concept-id", default=None, dest="concept_id")
    p_tex.set_defaults(func=cmd_texture)

    p_prev = sub.add_parser("preview", help="render turntable frames of a textured mesh")
    p_prev.add_argument("--mesh", required=True)
    p_prev.add_argument("--atlas", required=True, help="atlas PNG path")
    p_prev.add_argument("--frames", type=int, default=24)
    p_prev.add_argument("--el", type=float, default=15.0)
    p_prev.add_argument("--radius", type=float, default=3.0)
    p_prev.add_argument("--fov", type=float, default=40.0)
    p_prev.add_argument("--size", type=int, default=512)
    p_prev.add_argument("--out", default="preview_out")
    p_prev.set_defaults(func=cmd_preview)

    p_inv = sub.add_parser("invert", help="learn a concept id from a reference image")
    p_inv.add_argument("--endpoint", default=None)
    p_inv.add_argument("--image", default=None)
    p_inv.add_argument("--steps", type=int, default=None)
    p_inv.add_argument("--seed", type=int, default=None)
    p_inv.add_argument("--config", default=None,
                       help="JSON config file; the learned concept_id is stored back into it")
    p_inv.set_defaults(func=cmd_invert)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; preserve both.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except gen_mod.GeneratorError as exc:
        print(f"generator error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
