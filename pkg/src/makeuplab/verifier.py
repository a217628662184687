"""Makeup perceptual verifier.

Produces a makeup-exclusive RGBA layer from a portrait: background is
removed via a parsing mask, the face is warped onto the fixed template
frame, a skin-tone baseline (circular-mean hue, mean chroma, mean
luminance) is estimated from smooth low-frequency pixels, and each
pixel's alpha encodes its deviation from that baseline:

    alpha = 1 - exp(-(lh * dH + lc * dC + ll * dL))

with dH the circular hue distance / 180, dC and dL absolute chroma and
luminance distances / 100.  Skin fades out, makeup stays opaque, and the
result is insensitive to identity, skin tone and background.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import stdmesh
from .errors import EmptyFaceRegionError, InsufficientSkinError, ShapeMismatchError
from .geom import LandmarkSet, MeshTopology, build_warp, warp_image
from .imgcore import ImageBuf, Space, color_convert, gaussian_blur, lab_to_hcl

MIN_SKIN_PIXELS = 50


@dataclass(frozen=True)
class FaceRegionMask:
    """Parsing label map plus the set of label ids counted as facial."""

    labels: ImageBuf
    face_label_set: frozenset[int]

    def __post_init__(self):
        if not self.face_label_set:
            raise ValueError("face_label_set must be non-empty")
        object.__setattr__(self, "face_label_set", frozenset(int(v) for v in self.face_label_set))

    def facial(self) -> np.ndarray:
        """Boolean (h, w) facial-pixel mask."""
        ids = np.rint(self.labels.data[:, :, 0]).astype(np.int64)
        return np.isin(ids, list(self.face_label_set))


@dataclass(frozen=True)
class SkinBaseline:
    h_bar: float  # circular-mean hue, degrees in [0, 360)
    c_bar: float
    l_bar: float
    pixel_count: int


@dataclass(frozen=True)
class OpacityParams:
    lambda_h: float = 4.0
    lambda_c: float = 4.0
    lambda_l: float = 4.0
    sigma_blur: float = 4.0  # pixels at the 512x512 template
    tau_smooth: float = 4.0  # high-frequency energy threshold, CIELAB units
    q_lo: float = 0.10
    q_hi: float = 0.90

    def __post_init__(self):
        if not (0.0 <= self.q_lo < self.q_hi <= 1.0):
            raise ValueError("require 0 <= q_lo < q_hi <= 1")
        weights = (self.lambda_h, self.lambda_c, self.lambda_l)
        if any(w < 0 for w in weights) or all(w == 0 for w in weights):
            raise ValueError("weights must be nonnegative and not all zero")


@dataclass(frozen=True)
class MakeupExclusiveLayer:
    """Template-aligned RGBA whose alpha is the per-pixel makeup opacity."""

    rgba: ImageBuf
    baseline: SkinBaseline
    params: OpacityParams


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def face_region(img: ImageBuf, mask: FaceRegionMask) -> ImageBuf:
    """Attach an alpha channel that keeps facial labels only."""
    if mask.labels.data.shape[:2] != img.data.shape[:2]:
        raise ShapeMismatchError("mask dimensions must match image")
    facial = mask.facial()
    if not facial.any():
        raise EmptyFaceRegionError("empty face region")
    alpha = facial.astype(np.float64)[:, :, None]
    return ImageBuf(np.concatenate([img.color, alpha], axis=2), img.space)


def align_to_template(
    face: ImageBuf,
    lms: LandmarkSet,
    template: LandmarkSet,
    topo: MeshTopology,
    size: int = stdmesh.TEMPLATE_SIZE,
) -> ImageBuf:
    """Warp an RGBA face onto the fixed template frame (back-face culling on)."""
    field = build_warp(lms, template, topo, cull_backfaces=True, dst_size=(size, size))
    return warp_image(face, field)


def select_skin_pixels(aligned: ImageBuf, params: OpacityParams) -> ImageBuf:
    """Two-stage smooth-skin filter on the template-aligned face.

    Stage 1 keeps pixels whose high-frequency energy (CIELAB distance to
    the Gaussian-blurred image) is below ``tau_smooth`` and whose alpha
    exceeds 0.5; stage 2 trims candidates whose chroma or luminance fall
    outside the [q_lo, q_hi] empirical quantiles of the candidate set,
    dropping smooth makeup such as blush.
    """
    if aligned.channels != 4:
        raise ShapeMismatchError("aligned face must be RGBA")
    lab = color_convert(ImageBuf(aligned.color, aligned.space), Space.CIELAB).data
    blurred = gaussian_blur(ImageBuf(lab, Space.CIELAB), params.sigma_blur).data
    hf_energy = np.linalg.norm(lab - blurred, axis=2)
    alpha = aligned.data[:, :, 3]
    candidates = (hf_energy < params.tau_smooth) & (alpha > 0.5)

    if candidates.any():
        hcl = lab_to_hcl(lab)
        c = hcl[:, :, 1]
        l = hcl[:, :, 2]
        c_lo, c_hi = np.quantile(c[candidates], [params.q_lo, params.q_hi])
        l_lo, l_hi = np.quantile(l[candidates], [params.q_lo, params.q_hi])
        # inclusive bounds with a float-noise guard so near-constant value
        # buckets are not cut by quantile interpolation rounding
        eps = 1e-9
        survivors = (
            candidates
            & (c >= c_lo - eps)
            & (c <= c_hi + eps)
            & (l >= l_lo - eps)
            & (l <= l_hi + eps)
        )
    else:
        survivors = candidates

    if survivors.sum() < MIN_SKIN_PIXELS:
        raise InsufficientSkinError("insufficient skin sample")
    return ImageBuf(survivors.astype(np.float64)[:, :, None], Space.ALPHA)


def skin_baseline(aligned: ImageBuf, skin_mask: ImageBuf) -> SkinBaseline:
    """Circular-mean hue plus arithmetic mean chroma/luminance over the mask."""
    sel = skin_mask.data[:, :, 0] > 0.5
    if not sel.any():
        raise InsufficientSkinError("empty skin mask")
    lab = color_convert(ImageBuf(aligned.color, aligned.space), Space.CIELAB).data
    hcl = lab_to_hcl(lab)[sel]
    rad = np.radians(hcl[:, 0])
    h_bar = float(np.degrees(np.arctan2(np.sin(rad).mean(), np.cos(rad).mean())) % 360.0)
    return SkinBaseline(
        h_bar=h_bar,
        c_bar=float(hcl[:, 1].mean()),
        l_bar=float(hcl[:, 2].mean()),
        pixel_count=int(sel.sum()),
    )


def hue_distance(h: np.ndarray, h_ref: float) -> np.ndarray:
    """Circular hue distance in degrees, in [0, 180]."""
    d = np.abs(np.asarray(h) - h_ref) % 360.0
    return np.minimum(d, 360.0 - d)


def opacity_map(aligned: ImageBuf, baseline: SkinBaseline, params: OpacityParams) -> ImageBuf:
    """Per-pixel makeup opacity from deviation to the skin-tone baseline.

    Applies to every pixel with positive alpha, not only filtered skin
    candidates; zero-alpha pixels map to zero.
    """
    lab = color_convert(ImageBuf(aligned.color, aligned.space), Space.CIELAB).data
    hcl = lab_to_hcl(lab)
    dh = hue_distance(hcl[:, :, 0], baseline.h_bar) / 180.0
    dc = np.abs(hcl[:, :, 1] - baseline.c_bar) / 100.0
    dl = np.abs(hcl[:, :, 2] - baseline.l_bar) / 100.0
    opacity = 1.0 - np.exp(-(params.lambda_h * dh + params.lambda_c * dc + params.lambda_l * dl))
    if aligned.channels == 4:
        opacity = np.where(aligned.data[:, :, 3] > 0.0, opacity, 0.0)
    return ImageBuf(opacity[:, :, None], Space.ALPHA)


def makeup_exclusive_layer(
    img: ImageBuf,
    mask: FaceRegionMask,
    lms: LandmarkSet,
    template: LandmarkSet | None = None,
    topo: MeshTopology | None = None,
    params: OpacityParams = OpacityParams(),
) -> MakeupExclusiveLayer:
    """Full verifier pipeline: parse, align, filter, baseline, opacity."""
    if template is None:
        template = stdmesh.standard_landmarks()
    if topo is None:
        topo = stdmesh.standard_topology()
    face = face_region(img, mask)
    aligned = align_to_template(face, lms, template, topo)
    skin = select_skin_pixels(aligned, params)
    baseline = skin_baseline(aligned, skin)
    opacity = opacity_map(aligned, baseline, params)
    alpha = opacity.data[:, :, 0] * aligned.data[:, :, 3]
    rgba = ImageBuf(
        np.concatenate([aligned.color, alpha[:, :, None]], axis=2), Space.SRGB
    )
    return MakeupExclusiveLayer(rgba=rgba, baseline=baseline, params=params)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_exclusive_layer(
    png_path: str | Path, meta_path: str | Path, layer: MakeupExclusiveLayer
) -> None:
    from .imgcore import write_png

    write_png(png_path, layer.rgba)
    meta = {"baseline": asdict(layer.baseline), "params": asdict(layer.params)}
    Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def load_face_mask(labels_png: str | Path, labels_json: str | Path) -> FaceRegionMask:
    """Parsing mask from an 8-bit label PNG plus a JSON face_label_set."""
    from .imgcore import read_label_map

    meta = json.loads(Path(labels_json).read_text(encoding="utf-8"))
    return FaceRegionMask(
        labels=read_label_map(labels_png),
        face_label_set=frozenset(int(v) for v in meta["face_label_set"]),
    )
