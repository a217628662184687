"""Exception types shared across the toolkit.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured JSON errors for batch orchestration.
"""

from __future__ import annotations


class MakeupLabError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class ConversionError(MakeupLabError):
    """Unsupported or undefined color-space conversion."""

    code = "conversion"


class ShapeMismatchError(MakeupLabError):
    """Image / mask / landmark dimensions do not agree."""

    code = "shape_mismatch"


class TopologyError(MakeupLabError):
    """Landmark sets or triangle lists are inconsistent."""

    code = "topology"


class DegenerateInputError(MakeupLabError):
    """Geometrically degenerate input (e.g. collinear points)."""

    code = "degenerate_input"


class EmptyFaceRegionError(MakeupLabError):
    """Face parsing mask contains no facial pixels."""

    code = "empty_face_region"


class InsufficientSkinError(MakeupLabError):
    """Too few smooth skin pixels survive filtering."""

    code = "insufficient_skin"


class ProviderError(MakeupLabError):
    """Embedding provider failure.

    ``retryable`` distinguishes transient transport failures from permanent
    protocol errors.
    """

    code = "provider"

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable
