"""Coordinate frames, points, boxes and the original<->model affine map.

Every geometric value carries an explicit frame tag. Operations check the
tag and fail loudly on a mismatch instead of silently reinterpreting
coordinates. Pixel coordinates follow the landmark convention: integer
coordinates are pixel centres, so pixel (row i, col j) is centred at
continuous coordinate (x=j, y=i) and covers [j-0.5, j+0.5) x [i-0.5, i+0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from pelvimark.errors import ConfigurationError, ContractViolation, FrameMismatchError


class Frame(str, Enum):
    """Coordinate frame a geometric value lives in."""

    ORIGINAL = "original"
    MODEL = "model"


def require_frame(actual: Frame, expected: Frame, what: str = "value") -> None:
    if actual is not expected:
        raise FrameMismatchError(
            f"{what} is in frame '{actual.value}', expected '{expected.value}'"
        )


@dataclass(frozen=True)
class Spacing:
    """Pixel spacing in mm per pixel, DICOM order: row spacing first.

    ``row_mm`` converts vertical (y) pixel displacements, ``col_mm``
    horizontal (x) ones.
    """

    row_mm: float
    col_mm: float

    def __post_init__(self):
        for name in ("row_mm", "col_mm"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"pixel spacing {name} must be positive and finite, got {v!r}")

    @property
    def isotropic(self) -> bool:
        return self.row_mm == self.col_mm


@dataclass(frozen=True)
class PointPx:
    """A continuous pixel coordinate in a named frame."""

    x: float
    y: float
    frame: Frame

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractViolation(f"point coordinates must be finite, got ({self.x!r}, {self.y!r})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, half-open on integer grids."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    frame: Frame

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ContractViolation(f"box coordinates must be finite, got {self!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ContractViolation(
                f"box must satisfy x_min < x_max and y_min < y_max, got "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class GeometryTransform:
    """Affine map from the original frame into the model-input frame.

    Forward direction: scale first, then pad, per axis.
    """

    scale_x: float
    scale_y: float
    pad_x: float
    pad_y: float

    def __post_init__(self):
        for name in ("scale_x", "scale_y"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ContractViolation(f"transform {name} must be positive and finite, got {v!r}")
        for name in ("pad_x", "pad_y"):
            if not math.isfinite(getattr(self, name)):
                raise ContractViolation(f"transform {name} must be finite")


IDENTITY_TRANSFORM = GeometryTransform(1.0, 1.0, 0.0, 0.0)


def to_model_frame(p: PointPx, t: GeometryTransform) -> PointPx:
    """Map a point from the original frame into the model-input frame."""
    require_frame(p.frame, Frame.ORIGINAL, "point")
    return PointPx(p.x * t.scale_x + t.pad_x, p.y * t.scale_y + t.pad_y, Frame.MODEL)


def to_original_frame(p: PointPx, t: GeometryTransform) -> PointPx:
    """Exact inverse of :func:`to_model_frame`."""
    require_frame(p.frame, Frame.MODEL, "point")
    return PointPx((p.x - t.pad_x) / t.scale_x, (p.y - t.pad_y) / t.scale_y, Frame.ORIGINAL)


def bbox_to_model_frame(b: BBox, t: GeometryTransform) -> BBox:
    require_frame(b.frame, Frame.ORIGINAL, "box")
    return BBox(
        b.x_min * t.scale_x + t.pad_x,
        b.y_min * t.scale_y + t.pad_y,
        b.x_max * t.scale_x + t.pad_x,
        b.y_max * t.scale_y + t.pad_y,
        Frame.MODEL,
    )


def bbox_to_original_frame(b: BBox, t: GeometryTransform) -> BBox:
    require_frame(b.frame, Frame.MODEL, "box")
    return BBox(
        (b.x_min - t.pad_x) / t.scale_x,
        (b.y_min - t.pad_y) / t.scale_y,
        (b.x_max - t.pad_x) / t.scale_x,
        (b.y_max - t.pad_y) / t.scale_y,
        Frame.ORIGINAL,
    )


def px_to_mm(d, spacing) -> float:
    """Convert a pixel distance to millimetres.

    Two call shapes are supported: a scalar distance with a scalar
    mm-per-pixel spacing, or an ``(dx, dy)`` displacement with a
    :class:`Spacing`. Displacements are converted per axis before taking
    the Euclidean norm, so anisotropic spacing is exact.
    """
    if isinstance(spacing, Spacing):
        dx, dy = d
        return math.hypot(dx * spacing.col_mm, dy * spacing.row_mm)
    if not (isinstance(spacing, (int, float)) and math.isfinite(spacing) and spacing > 0):
        raise ConfigurationError(f"spacing must be positive and finite, got {spacing!r}")
    return d * spacing


def point_distance_mm(a: PointPx, b: PointPx, spacing: Spacing) -> float:
    """Millimetre distance between two points in the same frame."""
    require_frame(b.frame, a.frame, "second point")
    return px_to_mm((a.x - b.x, a.y - b.y), spacing)
