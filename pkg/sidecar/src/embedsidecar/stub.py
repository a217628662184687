"""Deterministic stub backends.

Stub embeddings are a seeded random projection of a downsampled,
alpha-premultiplied view of the decoded pixels: deterministic across
processes (the projection is seeded from a hash of the model tag),
unit-norm, dimension-stable per tag, and smoothly sensitive to content.
The recipe matches the in-process stub shipped with the client toolkit,
so both sides agree on vectors for identical pixels.

Parse and landmark stubs serve canned fixtures for images carrying a
``stub-fixture`` PNG text tag; anything else is an error, because the
stub cannot invent plausible segmentations for arbitrary photos.
"""

from __future__ import annotations

import hashlib
import io

import cv2
import numpy as np
from PIL import Image

GRID = 16

DEFAULT_DIMS = {
    "makeup-embed-v1": 384,
    "image-embed-v1": 512,
    "face-embed-v1": 512,
}
FALLBACK_DIM = 384

FIXTURE_TEXT_KEY = "stub-fixture"
KNOWN_FIXTURES = ("oval-face",)

_projections: dict[str, np.ndarray] = {}


def decode_png(data: bytes) -> tuple[np.ndarray, str | None]:
    """Decode PNG bytes to float64 RGBA-ish pixels in [0, 1] plus the
    fixture tag, if any."""
    with Image.open(io.BytesIO(data)) as im:
        fixture = im.info.get(FIXTURE_TEXT_KEY)
        arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    return arr, fixture


def tag_seed(model_tag: str) -> int:
    return int.from_bytes(hashlib.sha256(model_tag.encode("utf-8")).digest()[:8], "little")


def tag_dim(model_tag: str) -> int:
    return DEFAULT_DIMS.get(model_tag, FALLBACK_DIM)


def _projection(model_tag: str) -> np.ndarray:
    if model_tag not in _projections:
        rng = np.random.default_rng(tag_seed(model_tag))
        _projections[model_tag] = rng.standard_normal((tag_dim(model_tag), GRID * GRID * 4 + 1))
    return _projections[model_tag]


def stub_embedding(pixels: np.ndarray, model_tag: str) -> np.ndarray:
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    if pixels.shape[2] == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    if pixels.shape[2] == 3:
        alpha = np.ones(pixels.shape[:2] + (1,), dtype=np.float64)
        pixels = np.concatenate([pixels, alpha], axis=2)
    premult = pixels.astype(np.float32).copy()
    premult[:, :, :3] *= premult[:, :, 3:4]
    small = cv2.resize(premult, (GRID, GRID), interpolation=cv2.INTER_AREA)
    feats = np.concatenate([small.astype(np.float64).ravel(), [1.0]])
    v = _projection(model_tag) @ feats
    return v / np.linalg.norm(v)


def stub_aesthetic(pixels: np.ndarray) -> float:
    """Deterministic pseudo-score in roughly [-2, 2], brighter is better."""
    lum = float((pixels[:, :, :3] * [0.2126, 0.7152, 0.0722]).sum(axis=2).mean())
    return round(4.0 * (lum - 0.5), 6)


# ---------------------------------------------------------------------------
# Canned fixtures
# ---------------------------------------------------------------------------


def fixture_parse(width: int, height: int) -> tuple[bytes, dict]:
    """Elliptical face label mask (label 1 on background 0) as 8-bit PNG."""
    ii, jj = np.mgrid[0:height, 0:width]
    x = (jj + 0.5) / width
    y = (ii + 0.5) / height
    face = ((x - 0.5) / 0.40) ** 2 + ((y - 0.53) / 0.45) ** 2 <= 1.0
    mask = face.astype(np.uint8)
    ok, buf = cv2.imencode(".png", mask)
    if not ok:  # pragma: no cover
        raise RuntimeError("mask encoding failed")
    label_map = {"face_label_set": [1], "labels": {"0": "background", "1": "face"}}
    return buf.tobytes(), label_map


def fixture_landmarks() -> dict:
    """68 oval landmarks in the normalized-coordinate interchange format."""
    th = 2.0 * np.pi * np.arange(48) / 48
    oval = np.stack([0.5 + 0.38 * np.cos(th), 0.53 + 0.43 * np.sin(th)], axis=1)
    th_in = 2.0 * np.pi * np.arange(20) / 20
    inner = np.stack([0.5 + 0.2 * np.cos(th_in), 0.53 + 0.22 * np.sin(th_in)], axis=1)
    xy = np.concatenate([oval, inner])
    z = -0.15 * np.sqrt(np.maximum(0.0, 1.0 - ((xy[:, 0] - 0.5) / 0.42) ** 2 - ((xy[:, 1] - 0.53) / 0.47) ** 2))
    points = np.column_stack([xy, z])
    return {"topology_id": "sidecar-fixture-68", "points": points.tolist()}


def tag_image_as_fixture(png_bytes: bytes, fixture: str) -> bytes:
    """Re-encode a PNG with the stub-fixture text tag attached."""
    from PIL.PngImagePlugin import PngInfo

    with Image.open(io.BytesIO(png_bytes)) as im:
        info = PngInfo()
        info.add_text(FIXTURE_TEXT_KEY, fixture)
        out = io.BytesIO()
        im.save(out, format="PNG", pnginfo=info)
    return out.getvalue()
