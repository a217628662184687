"""Reward computation and group-relative advantage math.

The composite reward is a weighted sum of a makeup-fidelity score (cosine
between verifier layer embeddings), a face-identity score and an
aesthetic score.  Advantages standardize rewards within a sampling group:
(r_i - mean) / std with the population standard deviation; zero-variance
groups yield zero advantages instead of poisoning a batch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatchError
from .geom import LandmarkSet, MeshTopology
from .imgcore import ImageBuf
from .providers import Embedding, EmbeddingProvider
from .verifier import FaceRegionMask, OpacityParams, makeup_exclusive_layer

ZERO_VARIANCE_EPS = 1e-8
_EMB_MAGIC = b"EMB1"


def cosine_similarity(u: Embedding, v: Embedding) -> float:
    if u.dim != v.dim:
        raise ShapeMismatchError(f"embedding dims differ: {u.dim} vs {v.dim}")
    nu = np.linalg.norm(u.vector)
    nv = np.linalg.norm(v.vector)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    if np.array_equal(u.vector, v.vector):
        return 1.0
    return float(np.clip(np.dot(u.vector, v.vector) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class RewardVector:
    r_makeup: float
    r_face: float
    r_ir: float
    w_makeup: float = 1.0 / 3.0
    w_face: float = 1.0 / 3.0
    w_ir: float = 1.0 / 3.0


def aggregate_reward(rv: RewardVector) -> float:
    return rv.w_makeup * rv.r_makeup + rv.w_face * rv.r_face + rv.w_ir * rv.r_ir


@dataclass(frozen=True)
class RewardGroup:
    rewards: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if len(self.rewards) < 2:
            raise ValueError("advantage computation needs a group of at least 2")


def grpo_advantages(group: RewardGroup | list[float]) -> np.ndarray:
    """Group-standardized advantages (population std, zero-variance guard)."""
    if not isinstance(group, RewardGroup):
        group = RewardGroup(rewards=tuple(group))
    r = np.asarray(group.rewards, dtype=np.float64)
    std = r.std()
    if std < ZERO_VARIANCE_EPS:
        return np.zeros_like(r)
    return (r - r.mean()) / std


# ---------------------------------------------------------------------------
# Makeup fidelity reward
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifierBundle:
    """Everything the verifier needs for one portrait."""

    image: ImageBuf
    mask: FaceRegionMask
    landmarks: LandmarkSet


def makeup_reward(
    ref_bundle: VerifierBundle,
    gen_bundle: VerifierBundle,
    params: OpacityParams,
    embedder: EmbeddingProvider,
    template: LandmarkSet | None = None,
    topo: MeshTopology | None = None,
    model_tag: str = "makeup-embed-v1",
) -> float:
    """Cosine similarity of embeddings of the two makeup-exclusive layers."""
    ref_layer = makeup_exclusive_layer(
        ref_bundle.image, ref_bundle.mask, ref_bundle.landmarks, template, topo, params
    )
    gen_layer = makeup_exclusive_layer(
        gen_bundle.image, gen_bundle.mask, gen_bundle.landmarks, template, topo, params
    )
    ref_emb = embedder.embed_image(ref_layer.rgba, model_tag)
    gen_emb = embedder.embed_image(gen_layer.rgba, model_tag)
    return cosine_similarity(ref_emb, gen_emb)


# ---------------------------------------------------------------------------
# Embedding files (offline mode)
# ---------------------------------------------------------------------------


def save_embedding(path: str | Path, emb: Embedding) -> None:
    with open(path, "wb") as f:
        f.write(_EMB_MAGIC)
        f.write(struct.pack("<I", emb.dim))
        f.write(emb.vector.astype("<f4").tobytes())


def load_embedding(path: str | Path, model_tag: str = "file") -> Embedding:
    raw = Path(path).read_bytes()
    if raw[:4] != _EMB_MAGIC:
        raise ValueError(f"not an embedding file: {path}")
    (dim,) = struct.unpack_from("<I", raw, 4)
    vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=8).astype(np.float64)
    return Embedding(vector=vec, model_tag=model_tag)
