"""Embedding providers.

Two bindings of one interface: a deterministic in-process stub that needs
no model weights, and an HTTP client for the inference sidecar.  The stub
projects a downsampled, alpha-premultiplied view of the image through a
fixed random matrix seeded from the model tag, so embeddings are
deterministic, unit-norm, dimension-stable per tag, and vary smoothly
with pixel content (similar images get similar embeddings).
"""

from __future__ import annotations

import base64
import hashlib
import time
from dataclasses import dataclass
from typing import Protocol

import cv2
import numpy as np

from .errors import ProviderError
from .imgcore import ImageBuf

DEFAULT_DIMS = {
    "makeup-embed-v1": 384,
    "image-embed-v1": 512,
    "face-embed-v1": 512,
}
FALLBACK_DIM = 384

_GRID = 16  # downsample resolution of the stub feature vector


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    model_tag: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("embedding must be non-empty and finite")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size


class EmbeddingProvider(Protocol):
    def embed_image(self, img: ImageBuf, model_tag: str) -> Embedding: ...


# ---------------------------------------------------------------------------
# Deterministic stub
# ---------------------------------------------------------------------------


def tag_seed(model_tag: str) -> int:
    return int.from_bytes(hashlib.sha256(model_tag.encode("utf-8")).digest()[:8], "little")


def tag_dim(model_tag: str) -> int:
    return DEFAULT_DIMS.get(model_tag, FALLBACK_DIM)


def stub_features(data: np.ndarray) -> np.ndarray:
    """Alpha-premultiplied 16x16 downsample plus a constant bias feature."""
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    if data.shape[2] == 3:
        alpha = np.ones(data.shape[:2] + (1,), dtype=np.float64)
        data = np.concatenate([data, alpha], axis=2)
    premult = data.astype(np.float32).copy()
    premult[:, :, :3] *= premult[:, :, 3:4]
    small = cv2.resize(premult, (_GRID, _GRID), interpolation=cv2.INTER_AREA)
    return np.concatenate([small.astype(np.float64).ravel(), [1.0]])


class StubEmbeddingProvider:
    """Seeded random projection of stub features; no weights, no network."""

    def __init__(self, dims: dict[str, int] | None = None):
        self._dims = dict(DEFAULT_DIMS)
        if dims:
            self._dims.update(dims)
        self._projections: dict[str, np.ndarray] = {}

    def _projection(self, model_tag: str) -> np.ndarray:
        if model_tag not in self._projections:
            dim = self._dims.get(model_tag, FALLBACK_DIM)
            rng = np.random.default_rng(tag_seed(model_tag))
            self._projections[model_tag] = rng.standard_normal((dim, _GRID * _GRID * 4 + 1))
        return self._projections[model_tag]

    def embed_image(self, img: ImageBuf, model_tag: str) -> Embedding:
        feats = stub_features(img.data)
        v = self._projection(model_tag) @ feats
        return Embedding(vector=v / np.linalg.norm(v), model_tag=model_tag)


# ---------------------------------------------------------------------------
# HTTP sidecar client
# ---------------------------------------------------------------------------


class HttpEmbeddingProvider:
    """Client for the inference sidecar's /v1/embed route.

    Transport failures and 5xx responses are retried ``attempts`` times
    before surfacing a retryable ProviderError; protocol errors (4xx) are
    not retryable.
    """

    def __init__(
        self,
        base_url: str,
        kind: str = "embed_image",
        attempts: int = 3,
        timeout: float = 30.0,
        backoff: float = 0.2,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.kind = kind
        self.attempts = attempts
        self.backoff = backoff
        self._client = httpx.Client(timeout=timeout)

    def embed_image(self, img: ImageBuf, model_tag: str) -> Embedding:
        import httpx

        payload = {
            "kind": self.kind,
            "model_tag": model_tag,
            "image": base64.b64encode(_encode_png(img)).decode("ascii"),
        }
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self._client.post(f"{self.base_url}/v1/embed", json=payload)
            except httpx.HTTPError as exc:
                last = exc
                time.sleep(self.backoff * (attempt + 1))
                continue
            if resp.status_code == 200:
                body = resp.json()
                return Embedding(vector=np.asarray(body["vector"]), model_tag=body["model_tag"])
            if 400 <= resp.status_code < 500:
                raise ProviderError(
                    f"provider rejected request ({resp.status_code}): {resp.text}",
                    retryable=False,
                )
            last = ProviderError(f"provider error {resp.status_code}", retryable=True)
            time.sleep(self.backoff * (attempt + 1))
        raise ProviderError(
            f"provider unreachable after {self.attempts} attempts: {last}", retryable=True
        )

    def close(self) -> None:
        self._client.close()


def _encode_png(img: ImageBuf) -> bytes:
    raw = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if raw.shape[2] == 1:
        raw = raw[:, :, 0]
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_RGB2BGR)
    else:
        raw = cv2.cvtColor(raw, cv2.COLOR_RGBA2BGRA)
    ok, buf = cv2.imencode(".png", raw)
    if not ok:
        raise ProviderError("PNG encoding failed", retryable=False)
    return buf.tobytes()
