"""The conditional-image-generator boundary.

A texturing run talks to *some* generator through GeneratorRequest /
GeneratorResponse.  Three interchangeable backends live here: a
deterministic procedural mock for tests, a ground-truth-texture oracle for
round-trip checks, and an HTTP client speaking the wire protocol to a real
generation service.

Wire protocol (HTTP, application/json, images as base64 PNG):

  POST /generate {edge_map, foreground_mask, reference_image, prompt,
                  negative_prompt, lambda_ip, lambda_cn, seed, width,
                  height, keep_image|null, keep_mask|null, concept_id|null}
      -> {image, seed_used, backend}
  POST /invert   {image, steps, seed} -> {concept_id}
  GET  /health   -> {status, backend, ...}

Request JSON is serialized canonically (sorted keys, compact separators)
so byte-level golden fixtures are meaningful.

The mock's output is pinned down to the bit so independent implementations
can reproduce it:

1. Palette: the reference image split into a 4x4 grid of cells (cell c of
   an n-pixel axis spans [floor(c*n/4), floor((c+1)*n/4)), clamped to at
   least one pixel); each cell's color is the per-channel floor of
   sum/count, giving 16 colors indexed row-major.
2. Regions: pixels that are foreground and not edge, grouped into
   4-connected components; region ids count up in order of each region's
   first row-major pixel.
3. Region k is painted palette[u % 16] where u is the first 8 bytes,
   little-endian unsigned, of sha256(k||seed) with k and seed packed as
   little-endian signed 64-bit integers.
4. Foreground pixels on edges are painted black, the background stays
   white, and keep_mask pixels are copied verbatim from keep_image last.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass

import httpx
import numpy as np
from scipy import ndimage

from .image import from_png_bytes, to_png_bytes
from .mesh import TriMesh
from .render import ViewSpec, render_textured

_INT64_MAX = 2**63


class GeneratorError(Exception):
    """Base class for generator-boundary failures."""


class TransportError(GeneratorError):
    """The endpoint could not be reached or timed out."""


class BackendError(GeneratorError):
    """The service answered with a non-success status."""

    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"backend returned {status}: {message}")


class SchemaError(GeneratorError):
    """The payload violated the wire contract (missing field, bad image,
    wrong dimensions)."""


@dataclass(frozen=True)
class GeneratorRequest:
    edge_map: np.ndarray
    foreground_mask: np.ndarray
    reference_image: np.ndarray
    prompt: str
    width: int
    height: int
    negative_prompt: str = ""
    lambda_ip: float = 0.6
    lambda_cn: float = 1.0
    seed: int = 0
    keep_image: np.ndarray | None = None
    keep_mask: np.ndarray | None = None
    concept_id: str | None = None

    def __post_init__(self):
        hw = (self.height, self.width)
        for name in ("edge_map", "foreground_mask", "keep_mask"):
            a = getattr(self, name)
            if a is not None and a.shape != hw:
                raise ValueError(f"{name} shape {a.shape} != (height, width) {hw}")
        if self.keep_image is not None and self.keep_image.shape[:2] != hw:
            raise ValueError(f"keep_image shape {self.keep_image.shape} != {hw}")
        if (self.keep_image is None) != (self.keep_mask is None):
            raise ValueError("keep_image and keep_mask must be given together")
        if self.reference_image.ndim != 3 or self.reference_image.shape[2] != 3:
            raise ValueError("reference_image must be RGB")
        if not 0.0 <= self.lambda_ip <= 2.0:
            raise ValueError(f"lambda_ip {self.lambda_ip} outside [0, 2]")
        if not 0.0 <= self.lambda_cn <= 2.0:
            raise ValueError(f"lambda_cn {self.lambda_cn} outside [0, 2]")
        if not -_INT64_MAX <= self.seed < _INT64_MAX:
            raise ValueError("seed must fit in a signed 64-bit integer")


@dataclass(frozen=True)
class GeneratorResponse:
    image: np.ndarray
    seed_used: int
    backend: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError("response image must be RGB")


def _b64(img: np.ndarray | None) -> str | None:
    if img is None:
        return None
    return base64.b64encode(to_png_bytes(img)).decode("ascii")


def _unb64(payload, field: str, gray: bool) -> np.ndarray | None:
    if payload is None:
        return None
    if not isinstance(payload, str):
        raise SchemaError(f"field {field!r} must be a base64 string")
    try:
        img = from_png_bytes(base64.b64decode(payload))
    except Exception as exc:
        raise SchemaError(f"field {field!r} is not a decodable PNG: {exc}") from None
    if gray and img.ndim != 2:
        raise SchemaError(f"field {field!r} must be a grayscale PNG")
    if not gray and (img.ndim != 3 or img.shape[2] != 3):
        raise SchemaError(f"field {field!r} must be an RGB PNG")
    return img


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_generate_request(req: GeneratorRequest) -> bytes:
    return _canonical_json(
        {
            "edge_map": _b64(req.edge_map),
            "foreground_mask": _b64(req.foreground_mask),
            "reference_image": _b64(req.reference_image),
            "prompt": req.prompt,
            "negative_prompt": req.negative_prompt,
            "lambda_ip": req.lambda_ip,
            "lambda_cn": req.lambda_cn,
            "seed": req.seed,
            "width": req.width,
            "height": req.height,
            "keep_image": _b64(req.keep_image),
            "keep_mask": _b64(req.keep_mask),
            "concept_id": req.concept_id,
        }
    )


def decode_generate_request(data: bytes) -> GeneratorRequest:
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"request is not valid JSON: {exc}") from None
    try:
        return GeneratorRequest(
            edge_map=_unb64(payload["edge_map"], "edge_map", gray=True),
            foreground_mask=_unb64(payload["foreground_mask"], "foreground_mask", gray=True),
            reference_image=_unb64(payload["reference_image"], "reference_image", gray=False),
            prompt=payload["prompt"],
            negative_prompt=payload["negative_prompt"],
            lambda_ip=payload["lambda_ip"],
            lambda_cn=payload["lambda_cn"],
            seed=payload["seed"],
            width=payload["width"],
            height=payload["height"],
            keep_image=_unb64(payload.get("keep_image"), "keep_image", gray=False),
            keep_mask=_unb64(payload.get("keep_mask"), "keep_mask", gray=True),
            concept_id=payload.get("concept_id"),
        )
    except KeyError as exc:
        raise SchemaError(f"request missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid request: {exc}") from None


def encode_generate_response(resp: GeneratorResponse) -> bytes:
    return _canonical_json(
        {"image": _b64(resp.image), "seed_used": resp.seed_used, "backend": resp.backend}
    )


def encode_invert_request(reference_image: np.ndarray, steps: int, seed: int) -> bytes:
    return _canonical_json({"image": _b64(reference_image), "steps": steps, "seed": seed})


def reference_palette(reference: np.ndarray) -> np.ndarray:
    """The mock's 16-color palette: 4x4 cell means, floor-divided."""
    h, w = reference.shape[:2]
    ref = reference.astype(np.int64)
    palette = np.zeros((16, 3), dtype=np.uint8)
    for cy in range(4):
        for cx in range(4):
            r0, r1 = cy * h // 4, (cy + 1) * h // 4
            c0, c1 = cx * w // 4, (cx + 1) * w // 4
            r0 = min(r0, h - 1)
            c0 = min(c0, w - 1)
            r1 = max(r1, r0 + 1)
            c1 = max(c1, c0 + 1)
            cell = ref[r0:r1, c0:c1]
            palette[cy * 4 + cx] = cell.sum(axis=(0, 1)) // cell[..., 0].size
    return palette


def _region_color_index(region: int, seed: int) -> int:
    digest = hashlib.sha256(struct.pack("<qq", region, seed)).digest()
    return int.from_bytes(digest[:8], "little") % 16


def mock_generate(req: GeneratorRequest) -> GeneratorResponse:
    """Deterministic procedural stand-in for a conditioned image generator.

    See the module docstring for the bit-level algorithm.
    """
    fg = req.foreground_mask > 0
    edge = req.edge_map > 0
    out = np.full((req.height, req.width, 3), 255, dtype=np.uint8)

    fillable = fg & ~edge
    four_conn = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    raw_labels, n = ndimage.label(fillable, structure=four_conn)
    if n > 0:
        # Renumber regions by first row-major occurrence.
        flat = raw_labels.ravel()
        first = np.full(n + 1, flat.size, dtype=np.int64)
        nz = np.flatnonzero(flat)
        # np.minimum.at over first occurrences keeps the earliest index.
        np.minimum.at(first, flat[nz], nz)
        order = np.argsort(first[1:], kind="stable")
        remap = np.zeros(n + 1, dtype=np.int64)
        remap[1 + order] = np.arange(n)
        palette = reference_palette(req.reference_image)
        colors = np.array(
            [palette[_region_color_index(k, req.seed)] for k in range(n)], dtype=np.uint8
        )
        mask = raw_labels > 0
        out[mask] = colors[remap[raw_labels[mask]]]

    out[fg & edge] = 0
    if req.keep_mask is not None:
        keep = req.keep_mask > 0
        out[keep] = req.keep_image[keep]
    return GeneratorResponse(image=out, seed_used=req.seed, backend="mock")


def oracle_generate(
    req: GeneratorRequest, truth_mesh: TriMesh, truth_atlas, view: ViewSpec
) -> GeneratorResponse:
    """A generator that already knows the answer: renders the ground-truth
    atlas for the view.  Used to measure projection fidelity end to end."""
    if (view.height, view.width) != (req.height, req.width):
        raise ValueError(
            f"view is {view.width}x{view.height} but request wants {req.width}x{req.height}"
        )
    img = render_textured(truth_mesh, truth_atlas, view)
    return GeneratorResponse(image=img, seed_used=req.seed, backend="oracle")


def _decode_generate_response(payload, req: GeneratorRequest) -> GeneratorResponse:
    try:
        image = _unb64(payload["image"], "image", gray=False)
        seed_used = payload["seed_used"]
        backend = payload["backend"]
    except KeyError as exc:
        raise SchemaError(f"response missing field {exc.args[0]!r}") from None
    if image.shape[:2] != (req.height, req.width):
        raise SchemaError(
            f"response image is {image.shape[1]}x{image.shape[0]}, "
            f"request was {req.width}x{req.height}"
        )
    return GeneratorResponse(image=image, seed_used=int(seed_used), backend=str(backend))


def _post(endpoint: str, path: str, body: bytes, timeout: float):
    url = endpoint.rstrip("/") + path
    try:
        resp = httpx.post(
            url, content=body, headers={"content-type": "application/json"}, timeout=timeout
        )
    except httpx.HTTPError as exc:
        raise TransportError(f"POST {url} failed: {exc}") from None
    if resp.status_code != 200:
        raise BackendError(resp.status_code, resp.text[:500])
    try:
        return resp.json()
    except json.JSONDecodeError as exc:
        raise SchemaError(f"response is not valid JSON: {exc}") from None


def remote_generate(endpoint: str, req: GeneratorRequest, timeout: float = 300.0) -> GeneratorResponse:
    payload = _post(endpoint, "/generate", encode_generate_request(req), timeout)
    return _decode_generate_response(payload, req)


def remote_health(endpoint: str, timeout: float = 10.0) -> dict:
    """GET /health; returns the status document."""
    url = endpoint.rstrip("/") + "/health"
    try:
        resp = httpx.get(url, timeout=timeout)
    except httpx.HTTPError as exc:
        raise TransportError(f"GET {url} failed: {exc}") from None
    if resp.status_code != 200:
        raise BackendError(resp.status_code, resp.text[:500])
    try:
        doc = resp.json()
    except json.JSONDecodeError as exc:
        raise SchemaError(f"health response is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "status" not in doc or "backend" not in doc:
        raise SchemaError("health response must carry status and backend")
    return doc


def remote_invert(
    endpoint: str, reference_image: np.ndarray, steps: int = 100, seed: int = 0, timeout: float = 3600.0
) -> str:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    payload = _post(endpoint, "/invert", encode_invert_request(reference_image, steps, seed), timeout)
    if not isinstance(payload, dict) or not isinstance(payload.get("concept_id"), str):
        raise SchemaError("invert response must carry a string concept_id")
    return payload["concept_id"]


class MockBackend:
    """In-process deterministic backend."""

    name = "mock"
    deterministic = True

    def generate(self, req: GeneratorRequest, view: ViewSpec | None = None) -> GeneratorResponse:
        return mock_generate(req)


class OracleBackend:
    """Ground-truth backend for round-trip tests; needs the current view."""

    name = "oracle"
    deterministic = True

    def __init__(self, truth_mesh: TriMesh, truth_atlas):
        self.truth_mesh = truth_mesh
        self.truth_atlas = truth_atlas

    def generate(self, req: GeneratorRequest, view: ViewSpec | None = None) -> GeneratorResponse:
        if view is None:
            raise ValueError("oracle backend requires the view")
        return oracle_generate(req, self.truth_mesh, self.truth_atlas, view)


class RemoteBackend:
    """HTTP client backend speaking the wire protocol."""

    name = "remote"
    deterministic = False

    def __init__(self, endpoint: str, timeout: float = 300.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def generate(self, req: GeneratorRequest, view: ViewSpec | None = None) -> GeneratorResponse:
        return remote_generate(self.endpoint, req, timeout=self.timeout)
