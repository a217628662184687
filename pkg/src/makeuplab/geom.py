"""Landmark data model, triangulation and piecewise-affine warping.

Landmarks live in normalized image coordinates: x right, y down, both
nominally in [0, 1]; z is relative depth on the same scale with the
camera-facing direction negative.  Pixel (row i, col j) of a w x h raster
has its center at ((j + 0.5) / w, (i + 0.5) / h).

A warp is a per-triangle affine resampling field built from two landmark
sets sharing a topology.  Affine matrices map destination -> source in
normalized coordinates; coverage follows a first-hit rule (lowest triangle
index wins at shared edges), which keeps results deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import DegenerateInputError, TopologyError
from .imgcore import ImageBuf, Space

DEGENERATE_AREA = 1e-12
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered 3D facial landmarks tied to a named topology."""

    topology_id: str
    points: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise TopologyError(f"points must be (n, 3), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise TopologyError("landmark coordinates must be finite")
        xy = pts[:, :2]
        if xy.min() < -0.5 or xy.max() > 1.5:
            raise TopologyError("landmark x,y must lie in [-0.5, 1.5]")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]


@dataclass(frozen=True)
class MeshTopology:
    """Shared triangle list over a landmark ordering."""

    landmark_count: int
    triangles: np.ndarray  # (m, 3) int

    def __post_init__(self):
        tris = np.asarray(self.triangles, dtype=np.int64)
        if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] == 0:
            raise TopologyError("triangle list must be non-empty (m, 3)")
        if tris.min() < 0 or tris.max() >= self.landmark_count:
            raise TopologyError("triangle index out of range")
        if np.any((tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])):
            raise TopologyError("triangle repeats a vertex")
        object.__setattr__(self, "triangles", tris)

    def validate_landmarks(self, lms: LandmarkSet) -> None:
        if len(lms) != self.landmark_count:
            raise TopologyError(
                f"landmark count {len(lms)} does not match topology count {self.landmark_count}"
            )


@dataclass(frozen=True)
class WarpField:
    """Destination->source piecewise-affine resampling field.

    ``coverage`` assigns each destination pixel the index of the visible
    triangle that claims it, or -1 outside the mesh.  ``skipped`` lists
    triangles dropped for degenerate destination geometry.
    """

    width: int
    height: int
    affines: np.ndarray  # (m, 2, 3) dest -> src, normalized coords
    visible: np.ndarray  # (m,) bool
    coverage: np.ndarray  # (height, width) int32, triangle index or -1
    skipped: tuple[int, ...] = field(default=())


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------


def _signed_area2(tri_xy: np.ndarray) -> np.ndarray:
    """Twice the signed area; negative = counterclockwise on screen (y down)."""
    e1 = tri_xy[..., 1, :] - tri_xy[..., 0, :]
    e2 = tri_xy[..., 2, :] - tri_xy[..., 0, :]
    return e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]


def delaunay_triangulate(points: np.ndarray) -> MeshTopology:
    """Delaunay triangulation of 2D points, canonicalized for determinism.

    Triangles are oriented front-facing (normal toward the camera under the
    y-down convention), rotated so the lowest index leads, and sorted
    lexicographically.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise DegenerateInputError("need (n, 2) points")
    pts = pts[:, :2]
    if pts.shape[0] < 3:
        raise DegenerateInputError("need at least 3 points")
    try:
        simplices = Delaunay(pts).simplices
    except QhullError as exc:
        raise DegenerateInputError("points are collinear or otherwise degenerate") from exc

    tris = simplices.astype(np.int64)
    # front-facing: negative doubled area in image coordinates
    flip = _signed_area2(pts[tris]) > 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    # rotate lowest index first, preserving cyclic orientation
    lead = np.argmin(tris, axis=1)
    tris = np.stack([tris[np.arange(len(tris)), (lead + k) % 3] for k in range(3)], axis=1)
    order = np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))
    return MeshTopology(landmark_count=pts.shape[0], triangles=tris[order])


def barycentric(tri_xy: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric weights of ``pts`` (k, 2) w.r.t. a triangle (3, 2)."""
    a, b, c = tri_xy
    v0 = b - a
    v1 = c - a
    den = v0[0] * v1[1] - v0[1] * v1[0]
    d = pts - a
    wb = (d[:, 0] * v1[1] - d[:, 1] * v1[0]) / den
    wc = (v0[0] * d[:, 1] - v0[1] * d[:, 0]) / den
    return np.stack([1.0 - wb - wc, wb, wc], axis=1)


# ---------------------------------------------------------------------------
# Warp construction
# ---------------------------------------------------------------------------


def _normals_z(points3: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """z component of each triangle's 3D normal (cross of edge vectors)."""
    p = points3[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]


def build_warp(
    src: LandmarkSet,
    dst: LandmarkSet,
    topo: MeshTopology,
    cull_backfaces: bool = True,
    dst_size: tuple[int, int] = (512, 512),
) -> WarpField:
    """Fit a dest->src affine per triangle and rasterize destination coverage.

    With ``cull_backfaces`` set, a triangle is visible only when both its
    source and destination 3D normals face the camera (normal z <= 0);
    this hides far-side regions for profile poses on either end of the
    warp.  Degenerate destination triangles are skipped and reported.
    """
    if src.topology_id != dst.topology_id:
        raise TopologyError(
            f"topology mismatch: {src.topology_id!r} vs {dst.topology_id!r}"
        )
    topo.validate_landmarks(src)
    topo.validate_landmarks(dst)

    width, height = dst_size
    tris = topo.triangles
    m = tris.shape[0]
    src_xy = src.xy
    dst_xy = dst.xy

    affines = np.zeros((m, 2, 3), dtype=np.float64)
    visible = np.ones(m, dtype=bool)
    skipped: list[int] = []

    area2 = _signed_area2(dst_xy[tris])
    degenerate = np.abs(area2) < 2.0 * DEGENERATE_AREA
    if cull_backfaces:
        backfacing = (_normals_z(src.points, tris) > 0) | (_normals_z(dst.points, tris) > 0)
        visible &= ~backfacing

    identity = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    for ti in range(m):
        if degenerate[ti]:
            visible[ti] = False
            skipped.append(ti)
            continue
        dxy = dst_xy[tris[ti]]
        sxy = src_xy[tris[ti]]
        if np.array_equal(dxy, sxy):
            # exact identity keeps self-warps bit-exact end to end
            affines[ti] = identity
            continue
        # rows of D are (x, y, 1) per vertex; solve D @ M.T = src
        d_mat = np.column_stack([dxy, np.ones(3)])
        affines[ti] = np.linalg.solve(d_mat, sxy).T

    coverage = np.full((height, width), -1, dtype=np.int32)
    for ti in range(m):
        if not visible[ti]:
            continue
        dxy = dst_xy[tris[ti]]
        # bounding box in pixel indices (pixel centers at (j + 0.5) / width)
        x0 = max(int(np.floor(dxy[:, 0].min() * width - 0.5)), 0)
        x1 = min(int(np.ceil(dxy[:, 0].max() * width - 0.5)) + 1, width)
        y0 = max(int(np.floor(dxy[:, 1].min() * height - 0.5)), 0)
        y1 = min(int(np.ceil(dxy[:, 1].max() * height - 0.5)) + 1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        jj, ii = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        centers = np.stack([(jj.ravel() + 0.5) / width, (ii.ravel() + 0.5) / height], axis=1)
        w = barycentric(dxy, centers)
        inside = np.all(w >= -_EDGE_EPS, axis=1)
        sub = coverage[y0:y1, x0:x1].ravel()
        claim = inside & (sub == -1)
        sub[claim] = ti
        coverage[y0:y1, x0:x1] = sub.reshape(y1 - y0, x1 - x0)

    return WarpField(
        width=width,
        height=height,
        affines=affines,
        visible=visible,
        coverage=coverage,
        skipped=tuple(skipped),
    )


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _bilinear(data: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Sample (h, w, c) at float pixel coords, clamping to the border."""
    h, w = data.shape[:2]
    fx = np.clip(fx, 0.0, w - 1.0)
    fy = np.clip(fy, 0.0, h - 1.0)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (fx - x0)[:, None]
    ty = (fy - y0)[:, None]
    top = data[y0, x0] * (1.0 - tx) + data[y0, x1] * tx
    bot = data[y1, x0] * (1.0 - tx) + data[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def warp_image(img: ImageBuf, warp: WarpField) -> ImageBuf:
    """Resample ``img`` through the warp field.

    Covered destination pixels are bilinearly sampled from the source;
    uncovered pixels are zero (alpha 0 for RGBA).  Four-channel images are
    interpolated with premultiplied alpha so fully transparent source
    pixels can never bleed color into the result.
    """
    out = np.zeros((warp.height, warp.width, img.channels), dtype=np.float64)
    ys, xs = np.nonzero(warp.coverage >= 0)
    if ys.size:
        tri = warp.coverage[ys, xs]
        px = (xs + 0.5) / warp.width
        py = (ys + 0.5) / warp.height
        aff = warp.affines[tri]
        sx = aff[:, 0, 0] * px + aff[:, 0, 1] * py + aff[:, 0, 2]
        sy = aff[:, 1, 0] * px + aff[:, 1, 1] * py + aff[:, 1, 2]
        fx = sx * img.width - 0.5
        fy = sy * img.height - 0.5

        if img.channels == 4:
            alpha = img.data[:, :, 3:4]
            premult = np.concatenate([img.data[:, :, :3] * alpha, alpha], axis=2)
            sampled = _bilinear(premult, fx, fy)
            a = sampled[:, 3]
            colors = np.zeros_like(sampled[:, :3])
            nz = a > 0
            colors[nz] = sampled[nz, :3] / a[nz, None]
            out[ys, xs, :3] = colors
            out[ys, xs, 3] = a
        else:
            out[ys, xs] = _bilinear(img.data, fx, fy)
    return ImageBuf(out, img.space)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def save_landmarks(path: str | Path, lms: LandmarkSet, extra: dict | None = None) -> None:
    payload = {"topology_id": lms.topology_id, "points": lms.points.tolist()}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_landmarks(path: str | Path) -> LandmarkSet:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return LandmarkSet(topology_id=payload["topology_id"], points=np.asarray(payload["points"]))


def save_topology(path: str | Path, topo: MeshTopology) -> None:
    payload = {"landmark_count": topo.landmark_count, "triangles": topo.triangles.tolist()}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_topology(path: str | Path) -> MeshTopology:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return MeshTopology(
        landmark_count=int(payload["landmark_count"]),
        triangles=np.asarray(payload["triangles"], dtype=np.int64),
    )


def coverage_mask(warp: WarpField) -> ImageBuf:
    """Binary coverage of the warp as a single-channel image."""
    return ImageBuf((warp.coverage >= 0).astype(np.float64)[:, :, None], Space.ALPHA)
