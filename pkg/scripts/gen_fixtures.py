#!/usr/bin/env python3
"""Generate the checked-in wire golden files and the shared mock-conformance
corpus (deterministic requests plus the mock's PNG responses).

Run from the repo root:  python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from edgetex.generator import (  # noqa: E402
    GeneratorRequest,
    encode_generate_request,
    encode_invert_request,
    mock_generate,
)
from edgetex.image import to_png_bytes  # noqa: E402


def gradient_reference(h: int = 16, w: int = 16) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    ref = np.stack(
        [
            (255 * xx / (w - 1)).astype(np.uint8),
            (255 * yy / (h - 1)).astype(np.uint8),
            (255 - 255 * xx / (w - 1)).astype(np.uint8),
        ],
        axis=2,
    )
    return ref


def sixteen_color_reference() -> np.ndarray:
    """4x4 blocks of 16 distinct flat colors (palette == block colors)."""
    colors = np.array(
        [
            [10, 20, 30], [200, 40, 40], [40, 200, 40], [40, 40, 200],
            [220, 220, 40], [40, 220, 220], [220, 40, 220], [120, 120, 120],
            [250, 150, 50], [50, 150, 250], [150, 250, 50], [90, 60, 30],
            [30, 90, 60], [60, 30, 90], [240, 240, 240], [5, 5, 5],
        ],
        dtype=np.uint8,
    )
    ref = np.zeros((8, 8, 3), dtype=np.uint8)
    for cy in range(4):
        for cx in range(4):
            ref[2 * cy : 2 * cy + 2, 2 * cx : 2 * cx + 2] = colors[cy * 4 + cx]
    return ref


def corpus_cases() -> list[GeneratorRequest]:
    cases = []

    # 0: empty foreground.
    cases.append(
        GeneratorRequest(
            edge_map=np.zeros((16, 16), np.uint8),
            foreground_mask=np.zeros((16, 16), np.uint8),
            reference_image=gradient_reference(),
            prompt="an empty scene",
            width=16,
            height=16,
            seed=1,
        )
    )

    # 1: full foreground, no edges.
    cases.append(
        GeneratorRequest(
            edge_map=np.zeros((16, 16), np.uint8),
            foreground_mask=np.full((16, 16), 255, np.uint8),
            reference_image=sixteen_color_reference(),
            prompt="a flat slab",
            width=16,
            height=16,
            seed=7,
        )
    )

    # 2: vertical edge splits two regions.
    edge = np.zeros((24, 24), np.uint8)
    edge[:, 12] = 255
    fg = np.zeros((24, 24), np.uint8)
    fg[4:20, 2:22] = 255
    cases.append(
        GeneratorRequest(
            edge_map=edge,
            foreground_mask=fg,
            reference_image=sixteen_color_reference(),
            prompt="two parts",
            negative_prompt="blurry",
            lambda_ip=0.8,
            lambda_cn=1.0,
            width=24,
            height=24,
            seed=-3,
        )
    )

    # 3: keep mask copies pixels verbatim.
    keep_img = gradient_reference(24, 24)
    keep = np.zeros((24, 24), np.uint8)
    keep[10:14, 10:14] = 255
    cases.append(
        GeneratorRequest(
            edge_map=edge,
            foreground_mask=fg,
            reference_image=gradient_reference(),
            prompt="with kept pixels",
            lambda_ip=0.4,
            width=24,
            height=24,
            seed=9,
            keep_image=keep_img,
            keep_mask=keep,
        )
    )

    # 4: 64x64 with a grid of edges (many regions) and a concept id.
    edge64 = np.zeros((64, 64), np.uint8)
    edge64[::9, :] = 255
    edge64[:, ::11] = 255
    fg64 = np.zeros((64, 64), np.uint8)
    yy, xx = np.mgrid[0:64, 0:64]
    fg64[((yy - 32) ** 2 + (xx - 32) ** 2) <= 28 * 28] = 255
    cases.append(
        GeneratorRequest(
            edge_map=edge64,
            foreground_mask=fg64,
            reference_image=gradient_reference(32, 32),
            prompt="a gridded disk",
            lambda_ip=1.0,
            lambda_cn=0.5,
            width=64,
            height=64,
            seed=123456789,
            concept_id="concept-abc123",
        )
    )

    # 5: tiny reference (smaller than the 4x4 palette grid).
    cases.append(
        GeneratorRequest(
            edge_map=np.zeros((16, 16), np.uint8),
            foreground_mask=np.full((16, 16), 255, np.uint8),
            reference_image=gradient_reference(3, 2),
            prompt="tiny reference",
            width=16,
            height=16,
            seed=42,
        )
    )
    return cases


def main() -> None:
    wire = ROOT / "tests" / "fixtures" / "wire"
    wire.mkdir(parents=True, exist_ok=True)

    # Golden /generate request: case 3 exercises every field incl. keep.
    req = corpus_cases()[3]
    (wire / "generate_request.json").write_bytes(encode_generate_request(req))

    inv_img = gradient_reference(12, 12)
    (wire / "invert_request.json").write_bytes(encode_invert_request(inv_img, steps=100, seed=7))

    corpus = ROOT / "tests" / "fixtures" / "mock_corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    for i, case in enumerate(corpus_cases()):
        d = corpus / f"case{i:02d}"
        d.mkdir(exist_ok=True)
        (d / "request.json").write_bytes(encode_generate_request(case))
        resp = mock_generate(case)
        (d / "response.png").write_bytes(to_png_bytes(resp.image))
        (d / "response_meta.json").write_text(
            json.dumps({"seed_used": resp.seed_used, "backend": resp.backend}, sort_keys=True)
            + "\n"
        )
    print(f"wrote fixtures under {wire} and {corpus}")


if __name__ == "__main__":
    main()
