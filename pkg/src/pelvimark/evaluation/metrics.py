"""Scalar metrics: point error, mask/box IoU, and their aggregates."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from pelvimark.core.geometry import BBox, PointPx, Spacing, require_frame
from pelvimark.core.masks import Mask
from pelvimark.errors import ContractViolation, ValidationError


def point_error_px(pred: PointPx, gt: PointPx) -> float:
    require_frame(pred.frame, gt.frame, "point error operands")
    return math.hypot(pred.x - gt.x, pred.y - gt.y)


def point_error_mm(pred: PointPx, gt: PointPx, spacing: Spacing) -> float:
    """Euclidean norm of the per-axis millimetre displacements."""
    require_frame(pred.frame, gt.frame, "point error operands")
    return math.hypot((pred.x - gt.x) * spacing.col_mm, (pred.y - gt.y) * spacing.row_mm)


def iou(a: Mask, b: Mask) -> float:
    """|a ∩ b| / |a ∪ b|; two empty masks agree perfectly (1.0)."""
    if (a.width, a.height) != (b.width, b.height):
        raise ContractViolation(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    require_frame(a.frame, b.frame, "IoU operands")
    if a.empty and b.empty:
        return 1.0
    ga, gb = a.to_array(), b.to_array()
    inter = int(np.count_nonzero(ga & gb))
    union = int(np.count_nonzero(ga | gb))
    return inter / union


def box_iou(a: BBox, b: BBox) -> float:
    require_frame(a.frame, b.frame, "box IoU operands")
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Aggregate:
    median: float
    mean: float
    std: float


def aggregate(values: Sequence[float]) -> Optional[Aggregate]:
    """(median, mean, population std); None for an empty list, never zero.

    Median averages the two middle values for even lengths; std divides
    by N (population), which keeps the report exactly recomputable from
    its stored lists.
    """
    if not values:
        return None
    vals: List[float] = [float(v) for v in values]
    return Aggregate(
        median=float(statistics.median(vals)),
        mean=float(statistics.fmean(vals)),
        std=float(statistics.pstdev(vals)),
    )


def detection_rate(identified: int, total: int) -> float:
    if total <= 0:
        raise ValidationError(f"detection rate needs a positive total, got {total}")
    if not 0 <= identified <= total:
        raise ValidationError(f"identified {identified} outside [0, {total}]")
    return identified / total


def acceptability(errors: Sequence[float], threshold_mm: float = 3.0) -> Optional[float]:
    """Fraction of errors strictly below the threshold; None when empty."""
    if not errors:
        return None
    return sum(1 for e in errors if e < threshold_mm) / len(errors)
