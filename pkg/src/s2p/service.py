"""JSON/HTTP generation service.

POST /generate  base64-PNG sketch + prompt -> base64-PNG image
GET  /health    status, variant, resolution
GET  /styles    style prefixes for UI dropdowns

Model parameters are immutable after load and shared read-only; each request
owns an rng seeded from its request seed, so concurrent requests with
distinct seeds match sequential execution. Admission is bounded: at most
``worker_count`` samplings run at once, a short queue absorbs bursts, and
anything beyond that is refused with 429.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import threading
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .diffusion import SketchDiffusion
from .edges import EdgeParams, standardize
from .images import area_downsample, save_image
from .sampler import SamplerConfig, sample
from .evaluate import DEFAULT_PREFIX, STYLE_PREFIXES

__all__ = ["create_app", "GenerateRequest", "GenerateResponse"]

MAX_SKETCH_BYTES = 4 * 1024 * 1024

log = logging.getLogger("s2p.service")


class GenerateRequest(BaseModel):
    sketch_png: str
    prompt: str = ""
    guidance_scale: float = 7.5
    steps: int = 50
    seed: int = 0
    variant: str | None = None
    aug_level: int | None = None
    raw_sketch: bool = False


class GenerateResponse(BaseModel):
    image_png: str
    elapsed_ms: int
    config: dict


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


def _decode_sketch(req: GenerateRequest, resolution: int) -> np.ndarray:
    try:
        raw = base64.b64decode(req.sketch_png, validate=True)
    except Exception:
        raise ServiceError(400, "bad_sketch_encoding", "sketch_png is not valid base64")
    if len(raw) > MAX_SKETCH_BYTES:
        raise ServiceError(400, "sketch_too_large", f"sketch exceeds {MAX_SKETCH_BYTES} bytes")
    try:
        with Image.open(io.BytesIO(raw)) as im:
            plane = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except Exception:
        raise ServiceError(400, "bad_sketch_png", "sketch_png does not decode as an image")
    if plane.size == 0:
        raise ServiceError(400, "bad_sketch_png", "empty sketch")
    # Polarity: internal convention is 1 = edge; dark-on-white uploads invert.
    if plane.mean() > 0.5:
        plane = 1.0 - plane
    if req.raw_sketch:
        plane = standardize(plane[:, :, None].astype(np.float32), EdgeParams()).astype(np.float64)
    if plane.shape != (resolution, resolution):
        if plane.shape[0] < resolution or plane.shape[1] < resolution:
            raise ServiceError(400, "sketch_too_small", f"sketch must be at least {resolution}px")
        plane = area_downsample(plane, (resolution, resolution))
    return np.clip(plane, 0.0, 1.0).astype(np.float32)


def create_app(model: SketchDiffusion, worker_count: int = 2, queue_size: int = 8) -> FastAPI:
    app = FastAPI(title="s2p generation service")
    admission = threading.BoundedSemaphore(worker_count + queue_size)
    workers = threading.BoundedSemaphore(worker_count)

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"code": "bad_request", "detail": str(exc)})

    @app.exception_handler(ServiceError)
    async def _service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "detail": str(exc)})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "variant": model.config.variant,
            "resolution": model.config.resolution,
        }

    @app.get("/styles")
    def styles():
        return {"styles": [DEFAULT_PREFIX, *STYLE_PREFIXES]}

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        if req.steps < 1 or req.guidance_scale < 0:
            raise ServiceError(400, "bad_parameters", "steps must be >= 1 and guidance_scale >= 0")
        if req.variant is not None and req.variant != model.config.variant:
            raise ServiceError(400, "variant_mismatch", f"loaded model is {model.config.variant}")
        if not admission.acquire(blocking=False):
            raise ServiceError(429, "queue_full", "too many requests in flight")
        start = time.monotonic()
        try:
            sketch = _decode_sketch(req, model.config.resolution)
            cfg = SamplerConfig(
                steps=min(req.steps, model.config.T),
                guidance_scale=req.guidance_scale,
                seed=req.seed,
                aug_level=req.aug_level or 0,
            )
            with workers:
                try:
                    image = sample(model, sketch, req.prompt, cfg)
                except ServiceError:
                    raise
                except Exception as exc:
                    raise ServiceError(500, "sampling_failed", str(exc))
            buf = io.BytesIO()
            save_image(image, buf)
            payload = base64.b64encode(buf.getvalue()).decode("ascii")
            elapsed = int((time.monotonic() - start) * 1000)
            log.info(
                json.dumps(
                    {
                        "event": "generate",
                        "status": "ok",
                        "seed": req.seed,
                        "steps": cfg.steps,
                        "scale": cfg.guidance_scale,
                        "elapsed_ms": elapsed,
                    }
                )
            )
            return GenerateResponse(
                image_png=payload,
                elapsed_ms=elapsed,
                config={
                    "prompt": req.prompt,
                    "guidance_scale": cfg.guidance_scale,
                    "steps": cfg.steps,
                    "seed": req.seed,
                    "variant": model.config.variant,
                    "aug_level": cfg.aug_level,
                },
            )
        except ServiceError as exc:
            log.info(json.dumps({"event": "generate", "status": "error", "code": exc.code}))
            raise
        finally:
            admission.release()

    return app
