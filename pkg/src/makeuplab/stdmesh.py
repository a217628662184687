"""Canonical 468-point face mesh and template frame.

The toolkit ships one default landmark topology: a synthetic frontal
mean face with named feature groups (eyes, brows, nose, lips, oval).
Points are generated procedurally so the mesh is reproducible from code
alone; the triangle list is its Delaunay triangulation.  The same point
set doubles as the alignment template used by the verifier.

Depth follows the global convention: camera-facing is negative z, so the
frontal mesh carries a gentle negative dome.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .geom import LandmarkSet, MeshTopology, delaunay_triangulate

TOPOLOGY_ID = "stdface468-v1"
LANDMARK_COUNT = 468
TEMPLATE_SIZE = 512

_OVAL_CX, _OVAL_CY = 0.5, 0.53
_OVAL_RX, _OVAL_RY = 0.40, 0.45


def _ellipse(cx: float, cy: float, rx: float, ry: float, n: int, phase: float = 0.0) -> np.ndarray:
    th = phase + 2.0 * np.pi * np.arange(n) / n
    return np.stack([cx + rx * np.cos(th), cy + ry * np.sin(th)], axis=1)


def _arc(cx: float, cy: float, rx: float, ry: float, n: int, th0: float, th1: float) -> np.ndarray:
    th = np.linspace(th0, th1, n)
    return np.stack([cx + rx * np.cos(th), cy + ry * np.sin(th)], axis=1)


def _inside_ellipse(pts: np.ndarray, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    return ((pts[:, 0] - cx) / rx) ** 2 + ((pts[:, 1] - cy) / ry) ** 2 < 1.0


def _dome_z(xy: np.ndarray) -> np.ndarray:
    r2 = ((xy[:, 0] - _OVAL_CX) / (_OVAL_RX + 0.02)) ** 2 + ((xy[:, 1] - _OVAL_CY) / (_OVAL_RY + 0.03)) ** 2
    return -0.22 * np.sqrt(np.maximum(0.0, 1.0 - r2))


@lru_cache(maxsize=1)
def _build() -> tuple[np.ndarray, dict[str, tuple[int, ...]], MeshTopology]:
    groups: dict[str, tuple[int, ...]] = {}
    chunks: list[np.ndarray] = []
    cursor = 0

    def add(name: str, pts: np.ndarray) -> None:
        nonlocal cursor
        chunks.append(pts)
        groups[name] = tuple(range(cursor, cursor + len(pts)))
        cursor += len(pts)

    add("face_oval", _ellipse(_OVAL_CX, _OVAL_CY, _OVAL_RX, _OVAL_RY, 40))
    for k, (scale, n) in enumerate([(0.88, 36), (0.76, 32), (0.64, 28)]):
        add(f"ring_{k}", _ellipse(_OVAL_CX, _OVAL_CY, _OVAL_RX * scale, _OVAL_RY * scale, n, phase=0.1 * (k + 1)))
    add("eye_left", _ellipse(0.36, 0.43, 0.075, 0.042, 16))
    add("eye_right", _ellipse(0.64, 0.43, 0.075, 0.042, 16))
    add("iris", np.array([[0.36, 0.43], [0.64, 0.43]]))
    add("brow_left", _arc(0.36, 0.372, 0.095, 0.035, 10, np.pi, 2.0 * np.pi))
    add("brow_right", _arc(0.64, 0.372, 0.095, 0.035, 10, np.pi, 2.0 * np.pi))
    nose = np.concatenate(
        [
            np.stack([np.full(6, 0.5), np.linspace(0.44, 0.585, 6)], axis=1),
            _arc(0.5, 0.60, 0.055, 0.025, 7, np.pi * 0.15, np.pi * 0.85),
        ]
    )
    add("nose", nose)
    add("lips_outer", _ellipse(0.5, 0.72, 0.135, 0.055, 20))
    add("lips_inner", _ellipse(0.5, 0.72, 0.085, 0.026, 12))
    add(
        "cheek_left",
        np.array([[0.295, 0.56], [0.345, 0.545], [0.325, 0.605], [0.275, 0.615], [0.375, 0.595]]),
    )
    add(
        "cheek_right",
        np.array([[0.705, 0.56], [0.655, 0.545], [0.675, 0.605], [0.725, 0.615], [0.625, 0.595]]),
    )

    base = np.concatenate(chunks)
    # quasi-grid fill inside the oval, away from already-placed features
    need = LANDMARK_COUNT - len(base)
    fills: list[np.ndarray] = []
    got = 0
    ys = np.arange(0.10, 0.99, 0.0315)
    for row, y in enumerate(ys):
        xs = np.arange(0.08 + (0.5 * 0.0315 if row % 2 else 0.0), 0.95, 0.0315)
        cand = np.stack([xs, np.full_like(xs, y)], axis=1)
        keep = _inside_ellipse(cand, _OVAL_CX, _OVAL_CY, _OVAL_RX * 0.95, _OVAL_RY * 0.95)
        for cx, cy, rx, ry in [
            (0.36, 0.43, 0.075, 0.042),
            (0.64, 0.43, 0.075, 0.042),
            (0.5, 0.72, 0.135, 0.055),
        ]:
            keep &= ~_inside_ellipse(cand, cx, cy, rx * 1.45, ry * 1.9)
        keep &= np.min(np.linalg.norm(cand[:, None, :] - base[None, :, :], axis=2), axis=1) > 0.016
        cand = cand[keep]
        fills.append(cand)
        got += len(cand)
        if got >= need:
            break
    fill = np.concatenate(fills)[:need]
    if len(fill) < need:
        raise RuntimeError("standard mesh fill underflow")  # pragma: no cover

    xy = np.concatenate([base, fill])
    groups["fill"] = tuple(range(len(base), LANDMARK_COUNT))
    points = np.column_stack([xy, _dome_z(xy)])
    topo = delaunay_triangulate(xy)
    return points, groups, topo


def standard_landmarks() -> LandmarkSet:
    """The shipped mean-face landmark set (also the alignment template)."""
    points, _, _ = _build()
    return LandmarkSet(topology_id=TOPOLOGY_ID, points=points.copy())


def standard_topology() -> MeshTopology:
    _, _, topo = _build()
    return topo


def feature_groups() -> dict[str, tuple[int, ...]]:
    """Named landmark index groups (face_oval, eye_left, lips_outer, ...)."""
    _, groups, _ = _build()
    return dict(groups)


def anchors_for_category(category: str) -> tuple[int, ...]:
    """Default placement anchors for a makeup component category."""
    g = feature_groups()
    table = {
        "eyebrows": g["brow_left"] + g["brow_right"] + g["eye_left"] + g["eye_right"],
        "eyeliners": g["eye_left"] + g["eye_right"] + g["brow_left"] + g["brow_right"],
        "eyelashes": g["eye_left"] + g["eye_right"] + g["brow_left"] + g["brow_right"],
        "eyeshadows": g["eye_left"] + g["eye_right"] + g["brow_left"] + g["brow_right"],
        "blushes": g["cheek_left"] + g["cheek_right"] + g["ring_2"],
        "lipsticks": g["lips_outer"] + g["lips_inner"] + g["nose"],
        "facial_patterns": g["face_oval"] + g["ring_0"] + g["ring_1"] + g["ring_2"],
    }
    return table[category]


def rotated_landmarks(lms: LandmarkSet, yaw_degrees: float) -> LandmarkSet:
    """Rotate a landmark set about the vertical axis through the face center.

    Useful for synthesizing profile poses: far-side triangles flip their
    projected winding and are removed by back-face culling.
    """
    th = np.radians(yaw_degrees)
    pts = lms.points.copy()
    x = pts[:, 0] - _OVAL_CX
    z = pts[:, 2]
    pts[:, 0] = _OVAL_CX + x * np.cos(th) + z * np.sin(th)
    pts[:, 2] = -x * np.sin(th) + z * np.cos(th)
    return LandmarkSet(topology_id=lms.topology_id, points=pts)
