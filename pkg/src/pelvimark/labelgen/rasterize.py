"""Rasterize annotation geometry into binary masks.

One membership rule everywhere: a pixel is set iff its center lies
inside the shape. Centers sit at integer coordinates (pixel (row i,
col j) has center (x=j, y=i)) and metric shapes (disks, strokes) are
evaluated in millimetre space, so anisotropic pixel spacing comes out
right without special cases.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from pelvimark.core.geometry import BBox, Frame, PointPx, Spacing
from pelvimark.core.masks import Mask, encode_mask
from pelvimark.errors import EmptyMaskError, ValidationError

Canvas = Tuple[int, int]  # (width, height)


def _window(x_lo: float, x_hi: float, y_lo: float, y_hi: float, canvas: Canvas):
    """Integer pixel-center window guaranteed to contain all candidates."""
    w, h = canvas
    x0 = max(0, int(math.floor(x_lo)) - 1)
    y0 = max(0, int(math.floor(y_lo)) - 1)
    x1 = min(w - 1, int(math.ceil(x_hi)) + 1)
    y1 = min(h - 1, int(math.ceil(y_hi)) + 1)
    return x0, y0, x1, y1


def _to_mask(grid: np.ndarray, frame: Frame, label: str) -> Mask:
    if not grid.any():
        raise EmptyMaskError(f"rasterization produced an empty mask{' for ' + label if label else ''}")
    return encode_mask(grid, frame)


def rasterize_landmark(
    p: PointPx,
    radius_mm: float,
    spacing: Spacing,
    canvas: Canvas,
    frame: Frame = Frame.MODEL,
    label: str = "",
) -> Mask:
    """Filled disk of ``radius_mm`` around ``p``.

    Membership: (dx*col_mm)^2 + (dy*row_mm)^2 <= radius_mm^2, i.e. an
    ellipse in pixel space when spacing is anisotropic. A disk too
    small to cover any pixel center degenerates to the single pixel
    whose footprint contains ``p``.
    """
    if radius_mm <= 0:
        raise ValidationError(f"radius_mm must be positive, got {radius_mm}")
    w, h = canvas
    grid = np.zeros((h, w), dtype=bool)

    rx = radius_mm / spacing.col_mm
    ry = radius_mm / spacing.row_mm
    x0, y0, x1, y1 = _window(p.x - rx, p.x + rx, p.y - ry, p.y + ry, canvas)
    if x0 <= x1 and y0 <= y1:
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        dist2 = ((xs - p.x) * spacing.col_mm) ** 2 + ((ys - p.y) * spacing.row_mm) ** 2
        grid[y0 : y1 + 1, x0 : x1 + 1] = dist2 <= radius_mm**2

    if not grid.any():
        # sub-pixel disk: fall back to the one pixel containing the point
        cx = int(math.floor(p.x + 0.5))
        cy = int(math.floor(p.y + 0.5))
        if 0 <= cx < w and 0 <= cy < h:
            grid[cy, cx] = True
    return _to_mask(grid, frame, label)


def rasterize_outline(
    line: Sequence[PointPx],
    stroke_mm: float,
    spacing: Spacing,
    canvas: Canvas,
    frame: Frame = Frame.MODEL,
    label: str = "",
) -> Mask:
    """All pixels within ``stroke_mm / 2`` of the polyline (union of
    per-segment capsules, distances in millimetre space).

    A polyline whose points all coincide degenerates to a disk of
    radius ``stroke_mm / 2``.
    """
    if len(line) < 2:
        raise ValidationError(f"polyline needs at least 2 points, got {len(line)}")
    if stroke_mm <= 0:
        raise ValidationError(f"stroke_mm must be positive, got {stroke_mm}")
    if all(q.x == line[0].x and q.y == line[0].y for q in line[1:]):
        return rasterize_landmark(line[0], stroke_mm / 2.0, spacing, canvas, frame, label)

    w, h = canvas
    grid = np.zeros((h, w), dtype=bool)
    radius = stroke_mm / 2.0
    rx = radius / spacing.col_mm
    ry = radius / spacing.row_mm
    r2 = radius**2

    for a, b in zip(line[:-1], line[1:]):
        x0, y0, x1, y1 = _window(
            min(a.x, b.x) - rx, max(a.x, b.x) + rx, min(a.y, b.y) - ry, max(a.y, b.y) + ry, canvas
        )
        if x0 > x1 or y0 > y1:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        cx = xs * spacing.col_mm
        cy = ys * spacing.row_mm
        ax, ay = a.x * spacing.col_mm, a.y * spacing.row_mm
        bx, by = b.x * spacing.col_mm, b.y * spacing.row_mm
        ux, uy = bx - ax, by - ay
        seg2 = ux * ux + uy * uy
        if seg2 == 0.0:
            dist2 = (cx - ax) ** 2 + (cy - ay) ** 2
        else:
            t = np.clip(((cx - ax) * ux + (cy - ay) * uy) / seg2, 0.0, 1.0)
            dist2 = (cx - (ax + t * ux)) ** 2 + (cy - (ay + t * uy)) ** 2
        grid[y0 : y1 + 1, x0 : x1 + 1] |= dist2 <= r2

    return _to_mask(grid, frame, label)


def _proper_crossing(p1: PointPx, p2: PointPx, p3: PointPx, p4: PointPx) -> bool:
    def orient(a, b, c) -> float:
        return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0.0 not in (d1, d2, d3, d4)


def rasterize_patch(
    poly: Sequence[PointPx],
    canvas: Canvas,
    frame: Frame = Frame.MODEL,
    label: str = "",
) -> Mask:
    """Even-odd fill of an implicitly closed polygon over pixel centers.

    The inside test is crossing-number along +x with the half-open
    edge rule (v1.y <= c.y < v2.y or the reverse), so shared edges
    between abutting polygons are not double-counted. Polygons with
    properly crossing edges or zero area are rejected.
    """
    if len(poly) < 3:
        raise ValidationError(f"polygon needs at least 3 vertices, got {len(poly)}")
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]

    area2 = sum(a.x * b.y - b.x * a.y for a, b in edges)
    if area2 == 0.0:
        raise ValidationError(f"polygon has zero area{' for ' + label if label else ''}")
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _proper_crossing(*edges[i], *edges[j]):
                raise ValidationError(
                    f"self-intersecting polygon{' for ' + label if label else ''}: "
                    f"edges {i} and {j} cross"
                )

    w, h = canvas
    grid = np.zeros((h, w), dtype=bool)
    x0, y0, x1, y1 = _window(
        min(p.x for p in poly), max(p.x for p in poly), min(p.y for p in poly), max(p.y for p in poly), canvas
    )
    if x0 <= x1 and y0 <= y1:
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        crossings = np.zeros(xs.shape, dtype=np.int64)
        for a, b in edges:
            straddles = (a.y <= ys) != (b.y <= ys)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_hit = a.x + (ys - a.y) * (b.x - a.x) / (b.y - a.y)
            crossings += np.where(straddles & (xs < x_hit), 1, 0)
        grid[y0 : y1 + 1, x0 : x1 + 1] = (crossings % 2) == 1

    return _to_mask(grid, frame, label)


def mask_to_bbox(m: Mask) -> BBox:
    """Tight half-open bounds [min, max+1) of the set pixels."""
    if m.empty:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    grid = m.to_array()
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    return BBox(
        x_min=float(cols[0]),
        y_min=float(rows[0]),
        x_max=float(cols[-1] + 1),
        y_max=float(rows[-1] + 1),
        frame=m.frame,
    )
