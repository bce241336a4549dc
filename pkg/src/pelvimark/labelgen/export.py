"""Plain-text training label files.

Two grammars, one feature per line, all values normalized to [0,1]
with six decimal places:

  center-normalized-box:  <class_id> <cx> <cy> <w> <h>
  polygon:                <class_id> <x1> <y1> <x2> <y2> ...

Polygon vertices come from tracing the mask's outer boundary along
pixel-footprint corners, so re-rasterizing the polygon reproduces the
mask's outer region.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Tuple

from pelvimark.core.masks import Mask
from pelvimark.errors import ValidationError
from pelvimark.labelgen.bundles import LabelBundle

log = logging.getLogger(__name__)

BOX_FORMAT = "center-normalized-box"
POLYGON_FORMAT = "polygon"

# Directions as (dx, dy) in doubled-corner coordinates; traversal keeps
# the interior on the right, so prefer right turn, then straight, then left.
_RIGHT = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
_LEFT = {v: k for k, v in _RIGHT.items()}


def trace_mask_polygon(mask: Mask) -> List[Tuple[float, float]]:
    """Outer boundary of the mask as corner vertices (holes are dropped).

    Vertices lie on the half-integer corner lattice around integer
    pixel centers. The loop starts at its lexicographically smallest
    vertex and collinear runs are collapsed.
    """
    if mask.empty:
        raise ValidationError("cannot trace an empty mask")
    grid = mask.to_array()
    h, w = grid.shape

    def set_at(i: int, j: int) -> bool:
        return 0 <= i < h and 0 <= j < w and bool(grid[i, j])

    # Directed boundary edges in doubled coordinates: corner (2j±1, 2i±1).
    edges: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for i in range(h):
        for j in range(w):
            if not grid[i, j]:
                continue
            cx, cy = 2 * j, 2 * i
            sides = (
                ((cx - 1, cy - 1), (cx + 1, cy - 1), not set_at(i - 1, j)),
                ((cx + 1, cy - 1), (cx + 1, cy + 1), not set_at(i, j + 1)),
                ((cx + 1, cy + 1), (cx - 1, cy + 1), not set_at(i + 1, j)),
                ((cx - 1, cy + 1), (cx - 1, cy - 1), not set_at(i, j - 1)),
            )
            for start, end, exposed in sides:
                if exposed:
                    edges.setdefault(start, []).append(end)

    loops: List[List[Tuple[int, int]]] = []
    while edges:
        start = min(edges)
        prev = start
        cur = sorted(edges[start])[0]
        _consume(edges, prev, cur)
        loop = [start]
        while cur != start:
            loop.append(cur)
            outins = edges.get(cur, [])
            if len(outins) == 1:
                nxt = outins[0]
            else:
                d = (cur[0] - prev[0]) // 2, (cur[1] - prev[1]) // 2
                for cand_dir in (_RIGHT[d], d, _LEFT[d]):
                    nxt = (cur[0] + 2 * cand_dir[0], cur[1] + 2 * cand_dir[1])
                    if nxt in outins:
                        break
                else:
                    raise ValidationError("boundary tracing lost its way; mask is inconsistent")
            _consume(edges, cur, nxt)
            prev, cur = cur, nxt
        loops.append(loop)

    outer = max(loops, key=len)
    outer = _simplify_collinear(outer)
    pivot = outer.index(min(outer))
    outer = outer[pivot:] + outer[:pivot]
    return [(x / 2.0, y / 2.0) for x, y in outer]


def _consume(edges, start, end):
    outs = edges[start]
    outs.remove(end)
    if not outs:
        del edges[start]


def _simplify_collinear(loop: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    out = []
    n = len(loop)
    for k in range(n):
        a, b, c = loop[k - 1], loop[k], loop[(k + 1) % n]
        if (b[0] - a[0], b[1] - a[1]) != (c[0] - b[0], c[1] - b[1]):
            out.append(b)
    return out


def _clamped(v: float, what: str, image_id: str) -> float:
    if v < 0.0 or v > 1.0:
        log.warning("%s: %s %.6f outside [0,1]; clamped", image_id, what, v)
        return min(1.0, max(0.0, v))
    return v


def export_detection_labels(bundle: LabelBundle, format: str) -> str:
    """Render one bundle as label-file text; empty bundle gives an empty file."""
    if format not in (BOX_FORMAT, POLYGON_FORMAT):
        raise ValidationError(f"unknown label format {format!r}")
    lines = []
    for cid in sorted(bundle.masks):
        if format == BOX_FORMAT:
            box = bundle.boxes[cid]
            cx = _clamped((box.x_min + box.x_max) / 2.0 / bundle.width, "box center x", bundle.image_id)
            cy = _clamped((box.y_min + box.y_max) / 2.0 / bundle.height, "box center y", bundle.image_id)
            bw = _clamped(box.width / bundle.width, "box width", bundle.image_id)
            bh = _clamped(box.height / bundle.height, "box height", bundle.image_id)
            values = (cx, cy, bw, bh)
        else:
            vertices = trace_mask_polygon(bundle.masks[cid])
            values = tuple(
                _clamped(c / dim, "polygon coordinate", bundle.image_id)
                for x, y in vertices
                for c, dim in ((x, bundle.width), (y, bundle.height))
            )
        lines.append(str(cid) + " " + " ".join(f"{v:.6f}" for v in values))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_detection_labels(text: str, format: str) -> List[Tuple[int, Tuple[float, ...]]]:
    if format not in (BOX_FORMAT, POLYGON_FORMAT):
        raise ValidationError(f"unknown label format {format!r}")
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        try:
            cid = int(parts[0])
            values = tuple(float(p) for p in parts[1:])
        except ValueError:
            raise ValidationError(f"label line {lineno} is malformed: {line!r}") from None
        expected = 4 if format == BOX_FORMAT else None
        if expected is not None and len(values) != expected:
            raise ValidationError(f"label line {lineno}: expected {expected} values, got {len(values)}")
        if format == POLYGON_FORMAT and (len(values) < 6 or len(values) % 2):
            raise ValidationError(f"label line {lineno}: polygon needs an even count of >= 6 values")
        out.append((cid, values))
    return out
