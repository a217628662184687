"""Synthetic portrait fixtures shared across the test suite.

Builds deterministic fake faces on the canonical mesh: a painted standard
face texture, identity variants (smooth landmark deformations, optional
yaw), rendered portraits over a flat background, parsing masks, and
hard-edged makeup components.  Hard (binary) component alphas keep the
residual-compositing algebra exact, which the round-trip tests rely on.
"""

from __future__ import annotations

import numpy as np

from makeuplab import stdmesh
from makeuplab.geom import LandmarkSet, build_warp, warp_image
from makeuplab.imgcore import ImageBuf, Space
from makeuplab.layers import Category, MakeupComponent
from makeuplab.verifier import FaceRegionMask

SKIN_DEFAULT = (0.85, 0.72, 0.62)
LIP_COLOR = (0.70, 0.47, 0.44)
EYE_COLOR = (0.16, 0.13, 0.11)
BACKGROUND = (0.20, 0.22, 0.25)


def _px_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pixel-center coordinates (x, y) of a size x size raster."""
    ii, jj = np.mgrid[0:size, 0:size]
    return (jj + 0.5) / size, (ii + 0.5) / size


def _ellipse_mask(x, y, cx, cy, rx, ry):
    return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0


def std_face_texture(size: int = 160, skin=SKIN_DEFAULT, plain: bool = False) -> ImageBuf:
    """Bare standard face painted in the canonical frame.

    Default: smooth skin with a gentle luminance gradient, dark eyes and
    muted lips.  ``plain`` paints perfectly uniform skin with no features,
    for tests that need a zero-deviation baseline.
    """
    x, y = _px_grid(size)
    data = np.empty((size, size, 3))
    for ch in range(3):
        data[:, :, ch] = BACKGROUND[ch]
    face = _ellipse_mask(x, y, 0.5, 0.53, 0.40, 0.45)
    grad = np.ones_like(y) if plain else 1.0 - 0.06 * (y - 0.53)
    for ch in range(3):
        plane = data[:, :, ch]
        plane[face] = np.clip(skin[ch] * grad[face], 0.0, 1.0)
    if not plain:
        for cx in (0.36, 0.64):
            eye = _ellipse_mask(x, y, cx, 0.43, 0.075, 0.042)
            for ch in range(3):
                data[:, :, ch][eye] = EYE_COLOR[ch]
        lips = _ellipse_mask(x, y, 0.5, 0.72, 0.135, 0.055)
        for ch in range(3):
            data[:, :, ch][lips] = LIP_COLOR[ch]
    return ImageBuf(data, Space.SRGB)


def identity_landmarks(seed: int, yaw_degrees: float = 0.0) -> LandmarkSet:
    """Smoothly deformed canonical landmarks for one synthetic identity."""
    rng = np.random.default_rng(seed)
    base = stdmesh.standard_landmarks()
    pts = base.points.copy()
    sx, sy = rng.uniform(0.93, 1.07, size=2)
    cx, cy = 0.5, 0.53
    pts[:, 0] = cx + (pts[:, 0] - cx) * sx
    pts[:, 1] = cy + (pts[:, 1] - cy) * sy
    # low-frequency wobble keeps triangles from folding
    amp = rng.uniform(0.004, 0.010)
    ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
    pts[:, 0] += amp * np.sin(3.0 * pts[:, 1] * 2 * np.pi / 3 + ph1)
    pts[:, 1] += amp * np.cos(3.0 * pts[:, 0] * 2 * np.pi / 3 + ph2)
    lms = LandmarkSet(topology_id=base.topology_id, points=pts)
    if yaw_degrees:
        lms = stdmesh.rotated_landmarks(lms, yaw_degrees)
    return lms


def render_portrait(
    lms: LandmarkSet,
    size: int = 160,
    skin=SKIN_DEFAULT,
    texture_size: int = 160,
    plain: bool = False,
) -> tuple[ImageBuf, FaceRegionMask]:
    """Warp the standard texture onto identity landmarks over a flat
    background; the parsing mask labels warped-face pixels 1."""
    texture = std_face_texture(texture_size, skin=skin, plain=plain)
    std = stdmesh.standard_landmarks()
    topo = stdmesh.standard_topology()
    field = build_warp(std, lms, topo, cull_backfaces=True, dst_size=(size, size))
    warped = warp_image(texture, field)
    covered = field.coverage >= 0

    data = np.empty((size, size, 3))
    for ch in range(3):
        data[:, :, ch] = BACKGROUND[ch]
    data[covered] = warped.data[covered]
    labels = covered.astype(np.float64)[:, :, None]
    mask = FaceRegionMask(labels=ImageBuf(labels, Space.ALPHA), face_label_set=frozenset({1}))
    return ImageBuf(data, Space.SRGB), mask


# ---------------------------------------------------------------------------
# Components (binary alpha, authored in the canonical template frame)
# ---------------------------------------------------------------------------


def _component(category: Category, alpha_mask: np.ndarray, color, size: int) -> MakeupComponent:
    data = np.zeros((size, size, 4))
    for ch in range(3):
        data[:, :, ch] = color[ch]
    data[:, :, 3] = alpha_mask.astype(np.float64)
    anchor_idx = stdmesh.anchors_for_category(category.value)
    template = stdmesh.standard_landmarks()
    return MakeupComponent(
        category=category,
        rgba=ImageBuf(data, Space.SRGB),
        anchor_indices=tuple(anchor_idx),
        anchor_landmarks=LandmarkSet(
            topology_id=f"anchors:{category.value}:{len(anchor_idx)}",
            points=template.points[list(anchor_idx)],
        ),
    )


def lipstick_component(color=(0.78, 0.08, 0.16), size: int = 160) -> MakeupComponent:
    x, y = _px_grid(size)
    mask = _ellipse_mask(x, y, 0.5, 0.72, 0.125, 0.048)
    return _component(Category.LIPSTICKS, mask, color, size)


def eyeshadow_component(color=(0.25, 0.15, 0.55), size: int = 160) -> MakeupComponent:
    x, y = _px_grid(size)
    mask = _ellipse_mask(x, y, 0.36, 0.405, 0.085, 0.030) | _ellipse_mask(
        x, y, 0.64, 0.405, 0.085, 0.030
    )
    return _component(Category.EYESHADOWS, mask, color, size)


def blush_component(color=(0.88, 0.42, 0.40), size: int = 160) -> MakeupComponent:
    x, y = _px_grid(size)
    mask = _ellipse_mask(x, y, 0.325, 0.575, 0.045, 0.032) | _ellipse_mask(
        x, y, 0.675, 0.575, 0.045, 0.032
    )
    return _component(Category.BLUSHES, mask, color, size)


def pattern_component(seed: int, size: int = 160) -> MakeupComponent:
    """Seeded facial-pattern decal: bold dots and a stripe, distinct per seed."""
    rng = np.random.default_rng(seed)
    x, y = _px_grid(size)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(3):
        cx = rng.uniform(0.30, 0.70)
        cy = rng.uniform(0.50, 0.66)
        r = rng.uniform(0.025, 0.045)
        mask |= _ellipse_mask(x, y, cx, cy, r, r)
    x0 = rng.uniform(0.34, 0.60)
    width = rng.uniform(0.02, 0.04)
    stripe = (np.abs(x - (x0 + 0.15 * (y - 0.3))) < width) & (y > 0.30) & (y < 0.64)
    mask |= stripe
    face = _ellipse_mask(x, y, 0.5, 0.53, 0.36, 0.41)
    eyes = _ellipse_mask(x, y, 0.36, 0.43, 0.09, 0.055) | _ellipse_mask(x, y, 0.64, 0.43, 0.09, 0.055)
    lips = _ellipse_mask(x, y, 0.5, 0.72, 0.15, 0.065)
    mask &= face & ~eyes & ~lips
    palette = [(0.80, 0.10, 0.12), (0.10, 0.25, 0.75), (0.10, 0.55, 0.20), (0.75, 0.60, 0.05)]
    color = palette[int(rng.integers(len(palette)))]
    return _component(Category.FACIAL_PATTERNS, mask, color, size)


def standard_setup(size: int = 160):
    """Convenience bundle: (texture, landmarks, topology) of the standard face."""
    return std_face_texture(size), stdmesh.standard_landmarks(), stdmesh.standard_topology()
