"""Image buffers, color-space conversions and residual compositing.

Pixels travel through the toolkit as ``ImageBuf`` values: row-major float64
arrays tagged with a color space.  Conventions:

- sRGB / linear RGB samples in [0, 1]
- CIELAB: L in [0, 100], a and b roughly in [-128, 128]
- alpha, when present, is channel 3 and lies in [0, 1]
- D65 white point, 2 degree observer, fixed (no chromatic adaptation)

All operations are pure functions; buffers are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import ConversionError, ShapeMismatchError


class Space(str, Enum):
    SRGB = "srgb"
    LINEAR_RGB = "linear_rgb"
    CIELAB = "cielab"
    ALPHA = "alpha"


@dataclass(frozen=True)
class ImageBuf:
    """Tagged floating-point raster.

    ``data`` has shape (height, width, channels) with channels in {1, 3, 4}.
    A 4th channel is always alpha over the tagged color space.
    """

    data: np.ndarray
    space: Space

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeMismatchError(f"image data must be (h, w, c), got shape {self.data.shape}")
        if self.data.shape[2] not in (1, 3, 4):
            raise ShapeMismatchError(f"channels must be 1, 3 or 4, got {self.data.shape[2]}")
        if self.data.dtype != np.float64:
            object.__setattr__(self, "data", self.data.astype(np.float64))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def color(self) -> np.ndarray:
        """Color channels only (drops alpha if present)."""
        return self.data[:, :, :3] if self.channels >= 3 else self.data

    @property
    def alpha(self) -> np.ndarray | None:
        """Alpha plane (h, w) or None."""
        return self.data[:, :, 3] if self.channels == 4 else None

    def copy(self) -> "ImageBuf":
        return ImageBuf(self.data.copy(), self.space)


def new_image(width: int, height: int, channels: int, space: Space, fill: float = 0.0) -> ImageBuf:
    return ImageBuf(np.full((height, width, channels), fill, dtype=np.float64), space)


@dataclass(frozen=True)
class HclColor:
    """Cylindrical CIELAB: hue in degrees [0, 360), chroma >= 0, luminance in [0, 100]."""

    h: float
    c: float
    l: float

    @classmethod
    def from_lab(cls, l: float, a: float, b: float) -> "HclColor":
        return cls(
            h=float(np.degrees(np.arctan2(b, a)) % 360.0),
            c=float(np.hypot(a, b)),
            l=float(l),
        )


# ---------------------------------------------------------------------------
# sRGB <-> linear <-> XYZ <-> CIELAB
# ---------------------------------------------------------------------------

# sRGB -> XYZ (D65, 2 degree observer).  White point is taken as the exact
# row sums so that sRGB white maps to L*=100, a*=b*=0 to machine precision.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ.sum(axis=1)

_LAB_DELTA = 6.0 / 29.0


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    safe = np.maximum(x, 0.0)
    return np.where(safe <= 0.0031308, safe * 12.92, 1.055 * safe ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    d3 = _LAB_DELTA**3
    return np.where(t > d3, np.cbrt(t), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(u: np.ndarray) -> np.ndarray:
    return np.where(u > _LAB_DELTA, u**3, 3.0 * _LAB_DELTA**2 * (u - 4.0 / 29.0))


def linear_to_lab(rgb: np.ndarray) -> np.ndarray:
    xyz = rgb @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    l = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([l, a, b], axis=-1)


def lab_to_linear(lab: np.ndarray) -> np.ndarray:
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1) * _WHITE
    return xyz @ _XYZ_TO_RGB.T


def lab_to_hcl(lab: np.ndarray) -> np.ndarray:
    """Per-pixel CIELAB -> (hue degrees, chroma, luminance)."""
    h = np.degrees(np.arctan2(lab[..., 2], lab[..., 1])) % 360.0
    c = np.hypot(lab[..., 1], lab[..., 2])
    return np.stack([h, c, lab[..., 0]], axis=-1)


def hcl_to_lab(hcl: np.ndarray) -> np.ndarray:
    rad = np.radians(hcl[..., 0])
    a = hcl[..., 1] * np.cos(rad)
    b = hcl[..., 1] * np.sin(rad)
    return np.stack([hcl[..., 2], a, b], axis=-1)


_CHAIN = [Space.SRGB, Space.LINEAR_RGB, Space.CIELAB]
_STEP_FWD = {Space.SRGB: srgb_to_linear, Space.LINEAR_RGB: linear_to_lab}
_STEP_BWD = {Space.CIELAB: lab_to_linear, Space.LINEAR_RGB: linear_to_srgb}


def color_convert(img: ImageBuf, target: Space) -> ImageBuf:
    """Convert along the sRGB <-> linear <-> CIELAB chain.

    Alpha, when present, passes through unchanged.  Raises ConversionError
    for alpha-tagged images or undefined target spaces.
    """
    if img.space == Space.ALPHA or target == Space.ALPHA:
        raise ConversionError(f"no conversion path {img.space.value} -> {target.value}")
    if img.space == target:
        return img.copy()
    if img.channels == 1:
        raise ConversionError("single-channel images carry no color to convert")

    color = img.color
    i, j = _CHAIN.index(img.space), _CHAIN.index(target)
    while i < j:
        color = _STEP_FWD[_CHAIN[i]](color)
        i += 1
    while i > j:
        color = _STEP_BWD[_CHAIN[i]](color)
        i -= 1

    if img.channels == 4:
        color = np.concatenate([color, img.data[:, :, 3:4]], axis=2)
    return ImageBuf(color, target)


# ---------------------------------------------------------------------------
# Filtering and compositing
# ---------------------------------------------------------------------------


def gaussian_blur(img: ImageBuf, sigma: float) -> ImageBuf:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), edge-clamp borders.

    sigma = 0 returns an identical copy; constant images are fixed points.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    radius = int(np.ceil(3.0 * sigma))
    out = gaussian_filter1d(img.data, sigma, axis=0, mode="nearest", radius=radius)
    out = gaussian_filter1d(out, sigma, axis=1, mode="nearest", radius=radius)
    return ImageBuf(out, img.space)


def composite_residual(base: ImageBuf, residual: ImageBuf, alpha: ImageBuf) -> ImageBuf:
    """base + alpha * residual in CIELAB, then to sRGB with [0, 1] gamut clamp.

    ``base`` must be CIELAB, ``residual`` signed CIELAB deltas, ``alpha``
    single-channel in [0, 1]; all three share dimensions.
    """
    if base.space != Space.CIELAB:
        raise ConversionError("composite_residual expects a CIELAB base")
    if residual.data.shape[:2] != base.data.shape[:2] or alpha.data.shape[:2] != base.data.shape[:2]:
        raise ShapeMismatchError("base, residual and alpha dimensions must match")
    if alpha.channels != 1:
        raise ShapeMismatchError("alpha must be single-channel")

    out_lab = base.color + alpha.data * residual.color
    srgb = np.clip(linear_to_srgb(lab_to_linear(out_lab)), 0.0, 1.0)
    return ImageBuf(srgb, Space.SRGB)


# ---------------------------------------------------------------------------
# PNG I/O (sRGB assumed on load)
# ---------------------------------------------------------------------------


def read_png(path: str | Path) -> ImageBuf:
    """Read an 8- or 16-bit PNG as an sRGB ImageBuf scaled to [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    elif raw.shape[2] == 4:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGBA)
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    return ImageBuf(raw.astype(np.float64) / scale, Space.SRGB)


def write_png(path: str | Path, img: ImageBuf, bit_depth: int = 8) -> None:
    """Write an sRGB ImageBuf as an 8- or 16-bit PNG."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    scale, dtype = (255.0, np.uint8) if bit_depth == 8 else (65535.0, np.uint16)
    raw = np.clip(np.rint(img.data * scale), 0, scale).astype(dtype)
    if raw.shape[2] == 1:
        raw = raw[:, :, 0]
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_RGB2BGR)
    else:
        raw = cv2.cvtColor(raw, cv2.COLOR_RGBA2BGRA)
    if not cv2.imwrite(str(path), raw):
        raise OSError(f"cannot write image: {path}")


def read_label_map(path: str | Path) -> ImageBuf:
    """Read an 8-bit single-channel PNG of integer label ids (no rescaling)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read label map: {path}")
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return ImageBuf(raw.astype(np.float64)[:, :, None], Space.ALPHA)


def write_label_map(path: str | Path, labels: ImageBuf) -> None:
    raw = np.rint(labels.data[:, :, 0]).astype(np.uint8)
    if not cv2.imwrite(str(path), raw):
        raise OSError(f"cannot write label map: {path}")
