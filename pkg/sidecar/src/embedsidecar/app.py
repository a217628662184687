"""HTTP service: versioned routes under /v1.

Routes:
    GET  /v1/health    -> {ok, stub}
    POST /v1/embed     -> {vector, dim, model_tag}
    POST /v1/parse     -> {mask_png: b64, label_map}
    POST /v1/landmarks -> landmark JSON (normalized-coordinate format)
    POST /v1/aesthetic -> {score}

Status codes: 400 malformed payload (bad base64 / not a PNG), 422
unsupported kind or model combination, 503 model not loaded (real mode
without a registered backend).  Stub mode answers everything except
parse/landmarks for images that carry no fixture tag.
"""

from __future__ import annotations

import argparse
import base64
import binascii
from typing import Callable

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__, stub

EMBED_KINDS = ("embed_image", "embed_face")
ALL_KINDS = EMBED_KINDS + ("parse", "landmarks", "aesthetic")


class ProviderRequest(BaseModel):
    kind: str = "embed_image"
    model_tag: str = "image-embed-v1"
    image: str  # base64 PNG


class ModelRegistry:
    """Backends for real-model mode; empty unless something registers.

    The sidecar ships no weights.  Registering a callable per (kind,
    model_tag) enables the route; everything else answers 503 in real
    mode.
    """

    def __init__(self):
        self._backends: dict[tuple[str, str], Callable] = {}

    def register(self, kind: str, model_tag: str, fn: Callable) -> None:
        self._backends[(kind, model_tag)] = fn

    def get(self, kind: str, model_tag: str) -> Callable | None:
        return self._backends.get((kind, model_tag))


def _decode_image(payload: ProviderRequest) -> tuple[np.ndarray, str | None]:
    try:
        raw = base64.b64decode(payload.image, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"image is not valid base64: {exc}")
    try:
        return stub.decode_png(raw)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"payload does not decode as an image: {exc}")


def create_app(stub_mode: bool = True, registry: ModelRegistry | None = None) -> FastAPI:
    app = FastAPI(title="embed-sidecar", version=__version__)
    models = registry or ModelRegistry()
    app.state.stub = stub_mode
    app.state.registry = models

    def backend_or_stub(kind: str, model_tag: str, stub_fn: Callable) -> Callable:
        if stub_mode:
            return stub_fn
        backend = models.get(kind, model_tag)
        if backend is None:
            raise HTTPException(status_code=503, detail=f"model not loaded: {kind}/{model_tag}")
        return backend

    @app.get("/v1/health")
    def health():
        return {"ok": True, "stub": stub_mode, "version": __version__}

    @app.post("/v1/embed")
    def embed(payload: ProviderRequest):
        if payload.kind not in EMBED_KINDS:
            raise HTTPException(status_code=422, detail=f"unsupported kind for /v1/embed: {payload.kind}")
        if not payload.model_tag:
            raise HTTPException(status_code=422, detail="model_tag must be non-empty")
        pixels, _ = _decode_image(payload)
        fn = backend_or_stub(payload.kind, payload.model_tag, stub.stub_embedding)
        vector = np.asarray(fn(pixels, payload.model_tag), dtype=np.float64)
        return {"vector": vector.tolist(), "dim": int(vector.size), "model_tag": payload.model_tag}

    @app.post("/v1/parse")
    def parse(payload: ProviderRequest):
        if payload.kind != "parse":
            raise HTTPException(status_code=422, detail="kind must be 'parse'")
        pixels, fixture = _decode_image(payload)
        if stub_mode:
            if fixture not in stub.KNOWN_FIXTURES:
                raise HTTPException(status_code=422, detail="stub parse requires a fixture-tagged image")
            mask_png, label_map = stub.fixture_parse(pixels.shape[1], pixels.shape[0])
            return {"mask_png": base64.b64encode(mask_png).decode("ascii"), "label_map": label_map}
        backend = backend_or_stub("parse", payload.model_tag, None)
        mask_png, label_map = backend(pixels, payload.model_tag)
        return {"mask_png": base64.b64encode(mask_png).decode("ascii"), "label_map": label_map}

    @app.post("/v1/landmarks")
    def landmarks(payload: ProviderRequest):
        if payload.kind != "landmarks":
            raise HTTPException(status_code=422, detail="kind must be 'landmarks'")
        _, fixture = _decode_image(payload)
        if stub_mode:
            if fixture not in stub.KNOWN_FIXTURES:
                raise HTTPException(status_code=422, detail="stub landmarks require a fixture-tagged image")
            return stub.fixture_landmarks()
        backend = backend_or_stub("landmarks", payload.model_tag, None)
        return backend(payload.model_tag)

    @app.post("/v1/aesthetic")
    def aesthetic(payload: ProviderRequest):
        if payload.kind != "aesthetic":
            raise HTTPException(status_code=422, detail="kind must be 'aesthetic'")
        pixels, _ = _decode_image(payload)
        fn = backend_or_stub("aesthetic", payload.model_tag, lambda px, tag: stub.stub_aesthetic(px))
        return {"score": float(fn(pixels, payload.model_tag))}

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-sidecar")
    parser.add_argument("--port", type=int, default=8750)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--stub", action="store_true", help="serve deterministic stubs, no weights")
    parser.add_argument("--models", help="directory of model weights (real mode)", default=None)
    args = parser.parse_args(argv)

    if not args.stub and args.models is None:
        parser.error("real mode needs --models (or pass --stub)")

    import uvicorn

    app = create_app(stub_mode=args.stub)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
