"""Desk-scale synthetic fixtures: schematic pelvis radiographs with
full annotations.

The default taxonomy mirrors the clinical one in shape: 72 landmarks
(12 per femur, 24 per hemipelvis), 12 outlines and 6 patches, 90
classes in all. Geometry is a stylized drawing, not anatomy: two
bright disks for femoral heads, an elliptical brim, a calibration
ball. Positions are canonical with per-image jitter, always kept far
enough inside the canvas that every feature rasterizes.

Everything is deterministic in (seed, image index): images, geometry
and pixel noise all flow from one SeedSequence split.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from pelvimark.core.geometry import Frame, PointPx, Spacing
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, FeatureClass, FeatureKind, Side, save_class_registry
from pelvimark.ingestion.annotations import AnnotationSet, save_annotations
from pelvimark.ingestion.dicom import save_dicom

CANVAS = 512
SPACING_MM = 0.5
BIT_DEPTH = 12
WINDOW = (2048.0, 4096.0)

_RIGHT_HEAD = (164.0, 297.0)
_LEFT_HEAD = (348.0, 297.0)
_PELVIS_CENTER = (256.0, 200.0)
_BALL_CENTER = (256.0, 440.0)
_MARGIN = 24.0


def default_class_registry() -> ClassRegistry:
    classes: List[FeatureClass] = []

    def add(code: str, kind: FeatureKind, side: Side, group: str):
        classes.append(FeatureClass(len(classes), code, kind, side, group))

    for k in range(1, 13):
        add(f"F{k:02d}_r", FeatureKind.LANDMARK, Side.RIGHT, "femora")
        add(f"F{k:02d}_l", FeatureKind.LANDMARK, Side.LEFT, "femora")
    for k in range(1, 25):
        add(f"A{k:02d}_r", FeatureKind.LANDMARK, Side.RIGHT, "pelvis")
        add(f"A{k:02d}_l", FeatureKind.LANDMARK, Side.LEFT, "pelvis")
    for k in range(1, 13):
        side = Side.RIGHT if k <= 6 else Side.LEFT
        add(f"O{k:02d}", FeatureKind.OUTLINE, side, "")
    for k in range(1, 7):
        add(f"P{k:02d}", FeatureKind.PATCH, Side.NONE, "")
    return ClassRegistry(classes)


def _clamp_point(x: float, y: float, margin: float = _MARGIN) -> Tuple[float, float]:
    return (
        min(max(x, margin), CANVAS - 1 - margin),
        min(max(y, margin), CANVAS - 1 - margin),
    )


def _canonical_landmarks() -> Dict[str, Tuple[float, float]]:
    out: Dict[str, Tuple[float, float]] = {}
    for k in range(1, 13):
        theta = 2.0 * math.pi * (k - 1) / 12.0
        dx, dy = 40.0 * math.cos(theta), 40.0 * math.sin(theta)
        out[f"F{k:02d}_r"] = (_RIGHT_HEAD[0] + dx, _RIGHT_HEAD[1] + dy)
        out[f"F{k:02d}_l"] = (_LEFT_HEAD[0] - dx, _LEFT_HEAD[1] + dy)
    for k in range(1, 25):
        theta = 2.0 * math.pi * (k - 1) / 24.0
        dx, dy = 110.0 * math.cos(theta), 80.0 * math.sin(theta)
        out[f"A{k:02d}_l"] = (_PELVIS_CENTER[0] + abs(dx), _PELVIS_CENTER[1] + dy)
        out[f"A{k:02d}_r"] = (_PELVIS_CENTER[0] - abs(dx), _PELVIS_CENTER[1] + dy)
    return out


def _canonical_outlines() -> Dict[str, List[Tuple[float, float]]]:
    out: Dict[str, List[Tuple[float, float]]] = {}
    for k in range(1, 13):
        head = _RIGHT_HEAD if k <= 6 else _LEFT_HEAD
        idx = (k - 1) % 6
        radius = 58.0 + 6.0 * idx
        start = math.radians(200.0 + 8.0 * idx)
        span = math.radians(110.0)
        pts = []
        for s in range(5):
            theta = start + span * s / 4.0
            pts.append((head[0] + radius * math.cos(theta), head[1] + radius * math.sin(theta)))
        out[f"O{k:02d}"] = pts
    return out


def _canonical_patches() -> Dict[str, List[Tuple[float, float]]]:
    """Star-shaped polygons (vertices in angle order), so they are simple."""
    specs = {
        "P01": (_BALL_CENTER, 22.0, 6),
        "P02": ((_RIGHT_HEAD[0], _RIGHT_HEAD[1] + 95.0), 34.0, 7),
        "P03": ((_LEFT_HEAD[0], _LEFT_HEAD[1] + 95.0), 34.0, 7),
        "P04": ((_PELVIS_CENTER[0], 120.0), 30.0, 5),
        "P05": ((104.0, 150.0), 26.0, 6),
        "P06": ((408.0, 150.0), 26.0, 6),
    }
    out: Dict[str, List[Tuple[float, float]]] = {}
    for code, (center, radius, n) in specs.items():
        pts = []
        for v in range(n):
            theta = 2.0 * math.pi * v / n
            r = radius * (1.0 + 0.15 * math.cos(3 * theta))
            pts.append((center[0] + r * math.cos(theta), center[1] + r * math.sin(theta)))
        out[code] = pts
    return out


def _draw_pixels(rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:CANVAS, 0:CANVAS].astype(np.float64)
    img = 700.0 + 500.0 * ys / (CANVAS - 1)
    noise = rng.normal(0.0, 1.0, size=(CANVAS // 8, CANVAS // 8))
    img += 90.0 * np.kron(noise, np.ones((8, 8)))

    for cx, cy in (_RIGHT_HEAD, _LEFT_HEAD):
        d = np.hypot(xs - cx, ys - cy)
        img += 1700.0 / (1.0 + np.exp((d - 42.0) / 3.0))
    ex = (xs - _PELVIS_CENTER[0]) / 112.0
    ey = (ys - _PELVIS_CENTER[1]) / 82.0
    ring = np.hypot(ex, ey)
    img += 1100.0 * np.exp(-((ring - 1.0) ** 2) / 0.02)
    ball = np.hypot(xs - _BALL_CENTER[0], ys - _BALL_CENTER[1])
    img += 2000.0 / (1.0 + np.exp((ball - 24.0) / 2.0))

    return np.clip(np.round(img), 0, (1 << BIT_DEPTH) - 1).astype(np.uint16)


def synthesize_image(image_id: str, rng: np.random.Generator) -> Tuple[ImageRecord, AnnotationSet]:
    record = ImageRecord(
        image_id=image_id,
        width=CANVAS,
        height=CANVAS,
        bit_depth=BIT_DEPTH,
        pixels=_draw_pixels(rng),
        pixel_spacing=Spacing(SPACING_MM, SPACING_MM),
        window=WINDOW,
    )

    registry = default_class_registry()
    ann = AnnotationSet(image_id=image_id)

    for code, (x, y) in _canonical_landmarks().items():
        jx, jy = rng.normal(0.0, 4.0, size=2)
        px, py = _clamp_point(x + jx, y + jy)
        ann.landmarks[registry.by_code(code).class_id] = PointPx(px, py, Frame.ORIGINAL)

    for code, pts in _canonical_outlines().items():
        cx, cy = rng.normal(0.0, 3.0, size=2)
        moved = []
        for x, y in pts:
            wx, wy = rng.normal(0.0, 1.5, size=2)
            moved.append(PointPx(*_clamp_point(x + cx + wx, y + cy + wy), Frame.ORIGINAL))
        ann.outlines[registry.by_code(code).class_id] = tuple(moved)

    for code, pts in _canonical_patches().items():
        cx, cy = rng.normal(0.0, 3.0, size=2)
        moved = [PointPx(*_clamp_point(x + cx, y + cy), Frame.ORIGINAL) for x, y in pts]
        ann.patches[registry.by_code(code).class_id] = tuple(moved)

    return record, ann


def generate_synthetic_dataset(out_dir, n: int, seed: int) -> List[str]:
    """Write registry, DICOMs and annotations under ``out_dir``; returns ids."""
    out = Path(out_dir)
    images_dir = out / "images"
    ann_dir = out / "annotations"
    images_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)

    registry = default_class_registry()
    save_class_registry(registry, out / "registry.json")

    ids: List[str] = []
    for i in range(n):
        image_id = f"synth-{i:04d}"
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        record, ann = synthesize_image(image_id, rng)
        save_dicom(record, images_dir / f"{image_id}.dcm")
        save_annotations(ann, ann_dir / f"{image_id}.json", registry)
        ids.append(image_id)
    return ids
