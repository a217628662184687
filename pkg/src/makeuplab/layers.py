"""Makeup layer curation: compose components, extract residual layers,
re-target them to portraits, and emit supervision triplets.

A makeup layer is a signed per-pixel CIELAB residual plus an alpha plane,
both defined on the standard-face geometry.  Applying a layer to a
portrait warps residual and alpha onto the portrait's landmarks and adds
the residual in CIELAB; pixels outside the warped alpha support are left
byte-identical, which makes identity and background preservation exact
by construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import stdmesh
from .errors import ConversionError, ShapeMismatchError, TopologyError
from .geom import LandmarkSet, MeshTopology, build_warp, delaunay_triangulate, warp_image
from .imgcore import ImageBuf, Space, color_convert

# alpha ramp over residual magnitude: invisible below, saturated above
DELTA_E_LO = 1.0
DELTA_E_HI = 6.0

_LAYER_MAGIC = b"MKUP"
_LAYER_VERSION = 1


class Category(str, Enum):
    EYEBROWS = "eyebrows"
    EYELINERS = "eyeliners"
    EYELASHES = "eyelashes"
    EYESHADOWS = "eyeshadows"
    BLUSHES = "blushes"
    LIPSTICKS = "lipsticks"
    FACIAL_PATTERNS = "facial_patterns"


# painter's order: base shadows first, patterns on top
PAINTER_ORDER = (
    Category.EYESHADOWS,
    Category.EYELINERS,
    Category.EYELASHES,
    Category.EYEBROWS,
    Category.BLUSHES,
    Category.LIPSTICKS,
    Category.FACIAL_PATTERNS,
)


@dataclass(frozen=True)
class MakeupComponent:
    """One library element: an RGBA decal plus the landmarks that place it."""

    category: Category
    rgba: ImageBuf
    anchor_indices: tuple[int, ...]
    anchor_landmarks: LandmarkSet  # anchor positions in the component's own frame

    def __post_init__(self):
        if self.rgba.channels != 4:
            raise ShapeMismatchError("component image must be RGBA")
        if len(self.anchor_indices) != len(self.anchor_landmarks):
            raise TopologyError("anchor index/point count mismatch")


@dataclass(frozen=True)
class MakeupLayer:
    """Signed CIELAB residual + alpha on standard-face geometry."""

    residual: ImageBuf
    alpha: ImageBuf
    std_landmarks: LandmarkSet
    layer_id: str

    def __post_init__(self):
        if self.residual.data.shape[:2] != self.alpha.data.shape[:2]:
            raise ShapeMismatchError("residual and alpha dimensions must match")
        if self.alpha.channels != 1:
            raise ShapeMismatchError("layer alpha must be single-channel")


@dataclass(frozen=True)
class TripletRecord:
    src_path: str
    ref_path: str
    tgt_path: str
    identity_id: str
    ref_identity_id: str
    layer_id: str

    def __post_init__(self):
        if self.identity_id == self.ref_identity_id:
            raise ValueError("triplet source and reference identities must differ")


# ---------------------------------------------------------------------------
# Composition on the standard face
# ---------------------------------------------------------------------------


def _warp_component(
    comp: MakeupComponent,
    std_landmarks: LandmarkSet,
    topo: MeshTopology,
    size: tuple[int, int],
) -> ImageBuf:
    if max(comp.anchor_indices) >= topo.landmark_count:
        raise TopologyError(
            f"component anchor index {max(comp.anchor_indices)} outside topology"
        )
    dst_pts = std_landmarks.points[list(comp.anchor_indices)]
    sub_topo = delaunay_triangulate(dst_pts[:, :2])
    frame_id = f"anchors:{comp.category.value}:{len(comp.anchor_indices)}"
    src = LandmarkSet(topology_id=frame_id, points=comp.anchor_landmarks.points)
    dst = LandmarkSet(topology_id=frame_id, points=dst_pts)
    field = build_warp(src, dst, sub_topo, cull_backfaces=False, dst_size=size)
    return warp_image(comp.rgba, field)


def select_components(
    components: list[MakeupComponent], seed: int
) -> list[MakeupComponent]:
    """Pick one component per represented category, seeded, in painter order."""
    rng = np.random.default_rng(seed)
    chosen: list[MakeupComponent] = []
    for cat in PAINTER_ORDER:
        pool = [c for c in components if c.category == cat]
        if pool:
            chosen.append(pool[int(rng.integers(len(pool)))])
    return chosen


def compose_standard_makeup(
    components: list[MakeupComponent],
    std_img: ImageBuf,
    std_landmarks: LandmarkSet,
    topo: MeshTopology,
    seed: int,
    layer_id: str | None = None,
) -> tuple[ImageBuf, MakeupLayer]:
    """Composite components onto the bare standard face and extract the layer.

    Components are warped into the standard-face frame via their anchor
    landmarks and alpha-composited in painter's order; the layer residual
    is the CIELAB difference made-up minus bare, and its alpha is the
    union (max) of the warped component alphas.
    """
    if std_img.space != Space.SRGB:
        raise ConversionError("standard face must be sRGB")
    size = (std_img.width, std_img.height)
    canvas = std_img.color.copy()
    total_alpha = np.zeros((std_img.height, std_img.width, 1), dtype=np.float64)

    for comp in select_components(components, seed):
        warped = _warp_component(comp, std_landmarks, topo, size)
        a = warped.data[:, :, 3:4]
        canvas = a * warped.data[:, :, :3] + (1.0 - a) * canvas
        total_alpha = np.maximum(total_alpha, a)

    made = ImageBuf(canvas, Space.SRGB)
    if layer_id is None:
        layer_id = f"layer-{seed:08x}"
    residual = ImageBuf(
        color_convert(made, Space.CIELAB).color - color_convert(std_img, Space.CIELAB).color,
        Space.CIELAB,
    )
    layer = MakeupLayer(
        residual=residual,
        alpha=ImageBuf(total_alpha, Space.ALPHA),
        std_landmarks=std_landmarks,
        layer_id=layer_id,
    )
    return made, layer


# ---------------------------------------------------------------------------
# Residual extraction and application
# ---------------------------------------------------------------------------


def extract_layer(
    make_img: ImageBuf,
    non_img: ImageBuf,
    std_landmarks: LandmarkSet,
    layer_id: str = "extracted",
) -> MakeupLayer:
    """Pixel-wise CIELAB residual (made-up minus bare) with a smoothstep alpha.

    Alpha ramps from 0 below a residual magnitude of 1 (imperceptible) to 1
    at 6 and above, so weak compression noise stays transparent while real
    makeup saturates.
    """
    if make_img.data.shape[:2] != non_img.data.shape[:2]:
        raise ShapeMismatchError("image dimensions must match")
    if make_img.space != Space.SRGB or non_img.space != Space.SRGB:
        raise ConversionError("extract_layer expects sRGB inputs")
    residual = (
        color_convert(make_img, Space.CIELAB).color
        - color_convert(non_img, Space.CIELAB).color
    )
    delta_e = np.linalg.norm(residual, axis=2)
    t = np.clip((delta_e - DELTA_E_LO) / (DELTA_E_HI - DELTA_E_LO), 0.0, 1.0)
    alpha = (t * t * (3.0 - 2.0 * t))[:, :, None]
    return MakeupLayer(
        residual=ImageBuf(residual, Space.CIELAB),
        alpha=ImageBuf(alpha, Space.ALPHA),
        std_landmarks=std_landmarks,
        layer_id=layer_id,
    )


def apply_layer(
    layer: MakeupLayer,
    tgt_img: ImageBuf,
    tgt_landmarks: LandmarkSet,
    topo: MeshTopology,
) -> ImageBuf:
    """Warp a layer onto a portrait and composite its residual in CIELAB.

    Back-face culling is on, so far-side regions of profile targets are
    skipped.  Pixels with zero warped alpha (including everything outside
    mesh coverage) are copied from the target bit-exactly.
    """
    if layer.std_landmarks.topology_id != tgt_landmarks.topology_id:
        raise TopologyError("layer and target landmarks use different topologies")
    field = build_warp(
        layer.std_landmarks,
        tgt_landmarks,
        topo,
        cull_backfaces=True,
        dst_size=(tgt_img.width, tgt_img.height),
    )
    stacked = ImageBuf(
        np.concatenate([layer.residual.color, layer.alpha.data], axis=2), Space.CIELAB
    )
    warped = warp_image(stacked, field)
    w_res = warped.data[:, :, :3]
    w_alpha = warped.data[:, :, 3]

    tgt_lab = color_convert(tgt_img, Space.CIELAB).color
    out_lab = tgt_lab + w_alpha[:, :, None] * w_res
    out = color_convert(ImageBuf(out_lab, Space.CIELAB), Space.SRGB)
    out_data = np.clip(out.color, 0.0, 1.0)

    untouched = w_alpha == 0.0
    out_data[untouched] = tgt_img.color[untouched]
    return ImageBuf(out_data, Space.SRGB)


def warped_alpha_support(
    layer: MakeupLayer, tgt_landmarks: LandmarkSet, topo: MeshTopology, size: tuple[int, int]
) -> np.ndarray:
    """Boolean mask of pixels the layer can touch on a given target."""
    field = build_warp(
        layer.std_landmarks, tgt_landmarks, topo, cull_backfaces=True, dst_size=size
    )
    warped = warp_image(ImageBuf(layer.alpha.data, Space.ALPHA), field)
    return warped.data[:, :, 0] > 0.0


# ---------------------------------------------------------------------------
# Triplet formation
# ---------------------------------------------------------------------------


def build_triplets(
    applied: list[tuple[str, str, str, str]], seed: int
) -> list[TripletRecord]:
    """Pair identities that share a layer into supervision triplets.

    ``applied`` holds (identity_id, layer_id, src_path, tgt_path) rows, one
    per portrait x layer application.  Every ordered pair of distinct
    identities sharing a layer yields one triplet: the second identity's
    made-up image serves as the makeup reference for the first.  Output
    order is a seeded shuffle.
    """
    seen = set()
    for identity_id, layer_id, _, _ in applied:
        key = (identity_id, layer_id)
        if key in seen:
            raise ValueError(f"duplicate (identity, layer) application: {key}")
        seen.add(key)

    by_layer: dict[str, list[tuple[str, str, str, str]]] = {}
    for row in applied:
        by_layer.setdefault(row[1], []).append(row)

    triplets: list[TripletRecord] = []
    for layer_id in sorted(by_layer):
        rows = by_layer[layer_id]
        for a in rows:
            for b in rows:
                if a[0] == b[0]:
                    continue
                triplets.append(
                    TripletRecord(
                        src_path=a[2],
                        ref_path=b[3],
                        tgt_path=a[3],
                        identity_id=a[0],
                        ref_identity_id=b[0],
                        layer_id=layer_id,
                    )
                )
    rng = np.random.default_rng(seed)
    rng.shuffle(triplets)
    return list(triplets)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_layer(path: str | Path, layer: MakeupLayer) -> None:
    """Binary layer file: MKUP magic, version, dims, f32 (dL, da, db, alpha)
    pixels, then the embedded landmark JSON."""
    h, w = layer.residual.data.shape[:2]
    planes = np.concatenate([layer.residual.color, layer.alpha.data], axis=2)
    meta = {
        "topology_id": layer.std_landmarks.topology_id,
        "points": layer.std_landmarks.points.tolist(),
        "layer_id": layer.layer_id,
    }
    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", _LAYER_MAGIC, _LAYER_VERSION, w, h))
        f.write(planes.astype("<f4").tobytes())
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def load_layer(path: str | Path) -> MakeupLayer:
    raw = Path(path).read_bytes()
    magic, version, w, h = struct.unpack_from("<4sIII", raw, 0)
    if magic != _LAYER_MAGIC or version != _LAYER_VERSION:
        raise ValueError(f"not a makeup layer file: {path}")
    off = struct.calcsize("<4sIII")
    n = w * h * 4
    planes = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(h, w, 4)
    off += n * 4
    (blob_len,) = struct.unpack_from("<I", raw, off)
    meta = json.loads(raw[off + 4 : off + 4 + blob_len].decode("utf-8"))
    lms = LandmarkSet(topology_id=meta["topology_id"], points=np.asarray(meta["points"]))
    return MakeupLayer(
        residual=ImageBuf(planes[:, :, :3].astype(np.float64), Space.CIELAB),
        alpha=ImageBuf(planes[:, :, 3:4].astype(np.float64), Space.ALPHA),
        std_landmarks=lms,
        layer_id=meta.get("layer_id", "unnamed"),
    )


def load_component_library(directory: str | Path) -> list[MakeupComponent]:
    """Load PNG + sidecar-JSON components, sorted by file name.

    Sidecar schema: {"category": str, "anchor_indices": [int, ...]}.
    Components are authored in the canonical template frame, so their
    anchor positions default to the standard mean-face landmarks.
    """
    from .imgcore import read_png

    directory = Path(directory)
    template = stdmesh.standard_landmarks()
    comps: list[MakeupComponent] = []
    for sidecar in sorted(directory.glob("*.json")):
        png = sidecar.with_suffix(".png")
        if not png.exists():
            continue
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        indices = tuple(int(i) for i in meta["anchor_indices"])
        comps.append(
            MakeupComponent(
                category=Category(meta["category"]),
                rgba=read_png(png),
                anchor_indices=indices,
                anchor_landmarks=LandmarkSet(
                    topology_id=f"anchors:{meta['category']}:{len(indices)}",
                    points=template.points[list(indices)],
                ),
            )
        )
    return comps


def save_triplet_manifest(path: str | Path, triplets: list[TripletRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triplets:
            f.write(
                json.dumps(
                    {
                        "src_path": t.src_path,
                        "ref_path": t.ref_path,
                        "tgt_path": t.tgt_path,
                        "identity_id": t.identity_id,
                        "ref_identity_id": t.ref_identity_id,
                        "layer_id": t.layer_id,
                    }
                )
                + "\n"
            )


def load_triplet_manifest(path: str | Path) -> list[TripletRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(TripletRecord(**json.loads(line)))
    return out
