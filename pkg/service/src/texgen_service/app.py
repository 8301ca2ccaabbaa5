"""FastAPI application implementing the generator wire protocol.

Two modes:

* ``procedural`` (fallback): deterministic region coloring, byte-identical
  to the pipeline-side mock on the shared fixture corpus; /invert returns
  a stable stub id.
* ``real``: the compact trainable latent-diffusion stack with edge
  control, image-token conditioning, and concept fine-tuning.

Requests are handled one at a time (a lock serializes generation and
inversion); /health never blocks.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .concepts import ConceptStore, StoreFull
from .imagecodec import ImageDecodeError, decode_b64, encode_b64
from .procedural import generate as procedural_generate
from .procedural import stub_concept_id
from .schemas import GenerateRequest, GenerateResponse, Health, InvertRequest, InvertResponse


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        self.status = status
        self.detail = detail
        super().__init__(detail)


def _decode_images(req: GenerateRequest) -> dict[str, np.ndarray | None]:
    try:
        edge = decode_b64(req.edge_map, "edge_map", gray=True)
        fg = decode_b64(req.foreground_mask, "foreground_mask", gray=True)
        ref = decode_b64(req.reference_image, "reference_image", gray=False)
        keep_img = decode_b64(req.keep_image, "keep_image", gray=False) if req.keep_image else None
        keep_mask = decode_b64(req.keep_mask, "keep_mask", gray=True) if req.keep_mask else None
    except ImageDecodeError as exc:
        raise ApiError(400, str(exc)) from None
    hw = (req.height, req.width)
    for name, img in (("edge_map", edge), ("foreground_mask", fg),
                      ("keep_image", keep_img), ("keep_mask", keep_mask)):
        if img is not None and img.shape[:2] != hw:
            raise ApiError(400, f"{name} is {img.shape[1]}x{img.shape[0]}, expected {req.width}x{req.height}")
    if (keep_img is None) != (keep_mask is None):
        raise ApiError(400, "keep_image and keep_mask must be given together")
    return {"edge": edge, "fg": fg, "ref": ref, "keep_img": keep_img, "keep_mask": keep_mask}


def create_app(
    mode: str = "procedural",
    max_concepts: int = 64,
    inversion_lr: float = 1e-3,
    sample_steps: int = 8,
    init_seed: int = 1234,
    concept_dir: str | None = None,
) -> FastAPI:
    if mode not in ("procedural", "real"):
        raise ValueError(f"unknown mode {mode!r}")

    app = FastAPI(title="texgen-service")
    state = {
        "mode": mode,
        "stack": None,
        "ready": mode == "procedural",
        "error": None,
        "store": ConceptStore(capacity=max_concepts, directory=concept_dir),
        "lock": threading.Lock(),
        "inversion_lr": inversion_lr,
    }

    if mode == "real":
        try:
            import torch

            torch.set_num_threads(1)
            from .tinyldm import Denoiser, TinyLatentDiffusion, TokenProjection

            state["stack"] = TinyLatentDiffusion(init_seed=init_seed, sample_steps=sample_steps)
            state["store"].factory = lambda: (Denoiser(), TokenProjection())
            state["ready"] = True
        except Exception as exc:  # torch missing or init failure -> 503s
            state["error"] = str(exc)

    @app.exception_handler(ApiError)
    async def api_error_handler(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors()[:3])})

    @app.get("/health", response_model=Health)
    def health():
        if state["mode"] == "procedural":
            backend = "procedural"
            models: list[str] = []
        else:
            from .tinyldm import TinyLatentDiffusion

            backend = "+".join(TinyLatentDiffusion.MODEL_NAMES)
            models = TinyLatentDiffusion.MODEL_NAMES
        return Health(
            status="ok" if state["ready"] else "loading",
            backend=backend,
            mode=state["mode"],
            models=models,
            sampler="ddim" if state["mode"] == "real" else "none",
            steps=sample_steps if state["mode"] == "real" else 0,
        )

    def _require_ready():
        if not state["ready"]:
            raise ApiError(503, f"models not loaded: {state['error'] or 'still starting'}")

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        _require_ready()
        imgs = _decode_images(req)
        if req.concept_id is not None and state["mode"] == "real":
            if req.concept_id not in state["store"]:
                raise ApiError(404, f"unknown concept_id {req.concept_id!r}")

        with state["lock"]:
            if state["mode"] == "procedural":
                out = procedural_generate(
                    req.height, req.width, imgs["edge"], imgs["fg"], imgs["ref"],
                    req.seed, imgs["keep_img"], imgs["keep_mask"],
                )
                backend = "procedural"
            else:
                stack = state["stack"]
                denoiser = projection = None
                if req.concept_id is not None:
                    denoiser, projection = state["store"].get(req.concept_id)
                try:
                    out = stack.generate(
                        prompt=req.prompt,
                        reference=imgs["ref"],
                        edge_map=imgs["edge"],
                        lambda_ip=req.lambda_ip,
                        lambda_cn=req.lambda_cn,
                        seed=req.seed,
                        width=req.width,
                        height=req.height,
                        keep_image=imgs["keep_img"],
                        keep_mask=imgs["keep_mask"],
                        denoiser=denoiser,
                        projection=projection,
                    )
                except Exception as exc:
                    raise ApiError(500, f"generation failed: {exc}") from None
                backend = "+".join(type(stack).MODEL_NAMES)
        return GenerateResponse(image=encode_b64(out), seed_used=req.seed, backend=backend)

    @app.post("/invert", response_model=InvertResponse)
    def invert(req: InvertRequest):
        _require_ready()
        try:
            image = decode_b64(req.image, "image", gray=False)
        except ImageDecodeError as exc:
            raise ApiError(400, str(exc)) from None

        if state["mode"] == "procedural":
            return InvertResponse(concept_id=stub_concept_id(image), loss_trace=None)

        with state["lock"]:
            stack = state["stack"]
            try:
                denoiser, projection, trace = stack.invert(
                    image, steps=req.steps, seed=req.seed, lr=state["inversion_lr"]
                )
            except Exception as exc:
                raise ApiError(500, f"inversion failed: {exc}") from None
            digest = hashlib.sha256(
                image[..., :3].tobytes() + req.seed.to_bytes(8, "little", signed=True)
                + req.steps.to_bytes(4, "little")
            ).hexdigest()
            concept_id = f"concept-{digest[:12]}"
            try:
                state["store"].put(concept_id, denoiser, projection)
            except StoreFull as exc:
                raise ApiError(507, str(exc)) from None
        return InvertResponse(concept_id=concept_id, loss_trace=trace)

    return app
