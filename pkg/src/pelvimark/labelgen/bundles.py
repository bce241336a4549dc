"""Assemble per-image training labels from annotations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from pelvimark.core.geometry import BBox, Frame, Spacing, to_model_frame
from pelvimark.core.masks import Mask
from pelvimark.core.records import Split
from pelvimark.core.registry import ClassRegistry
from pelvimark.errors import ValidationError
from pelvimark.ingestion.annotations import AnnotationSet
from pelvimark.ingestion.normalize import NormalizedImage
from pelvimark.labelgen.rasterize import (
    mask_to_bbox,
    rasterize_landmark,
    rasterize_outline,
    rasterize_patch,
)

BUNDLE_SCHEMA_VERSION = 1


@dataclass
class LabelConfig:
    """Feature sizing for rasterization, in millimetres.

    Overrides are keyed by class code. ``assumed_spacing_mm`` is the
    last-resort isotropic spacing for uncalibrated inputs; without it
    an uncalibrated image cannot be rasterized at all.
    """

    landmark_radius_mm: float = 2.0
    outline_stroke_mm: float = 2.0
    radius_overrides: Dict[str, float] = field(default_factory=dict)
    stroke_overrides: Dict[str, float] = field(default_factory=dict)
    assumed_spacing_mm: Optional[float] = None

    def radius_for(self, code: str) -> float:
        return self.radius_overrides.get(code, self.landmark_radius_mm)

    def stroke_for(self, code: str) -> float:
        return self.stroke_overrides.get(code, self.outline_stroke_mm)


@dataclass
class LabelBundle:
    """Model-frame masks and their tight boxes for one image."""

    image_id: str
    width: int
    height: int
    masks: Dict[int, Mask] = field(default_factory=dict)
    boxes: Dict[int, BBox] = field(default_factory=dict)
    split: Split = Split.UNASSIGNED


def model_spacing(original: Optional[Spacing], transform, config: LabelConfig) -> Spacing:
    """Millimetres per model-frame pixel."""
    if original is None:
        if config.assumed_spacing_mm is None:
            raise ValidationError(
                "image is uncalibrated and no assumed_spacing_mm is configured; "
                "cannot size features in millimetres"
            )
        original = Spacing(config.assumed_spacing_mm, config.assumed_spacing_mm)
    return Spacing(
        row_mm=original.row_mm / transform.scale_y,
        col_mm=original.col_mm / transform.scale_x,
    )


def build_label_bundle(
    ann: AnnotationSet,
    norm: NormalizedImage,
    original_spacing: Optional[Spacing],
    registry: ClassRegistry,
    config: Optional[LabelConfig] = None,
    split: Split = Split.UNASSIGNED,
) -> LabelBundle:
    """Rasterize every annotated feature into the model frame.

    Raises :class:`EmptyMaskError` when a feature falls entirely
    outside the model canvas, naming the class code.
    """
    config = config or LabelConfig()
    spacing = model_spacing(original_spacing, norm.transform, config)
    canvas = (norm.width, norm.height)
    t = norm.transform
    bundle = LabelBundle(image_id=ann.image_id, width=norm.width, height=norm.height, split=split)

    for cid, p in ann.landmarks.items():
        code = registry.by_id(cid).code
        mask = rasterize_landmark(
            to_model_frame(p, t), config.radius_for(code), spacing, canvas, label=code
        )
        bundle.masks[cid] = mask
        bundle.boxes[cid] = mask_to_bbox(mask)
    for cid, pts in ann.outlines.items():
        code = registry.by_id(cid).code
        mask = rasterize_outline(
            [to_model_frame(p, t) for p in pts], config.stroke_for(code), spacing, canvas, label=code
        )
        bundle.masks[cid] = mask
        bundle.boxes[cid] = mask_to_bbox(mask)
    for cid, pts in ann.patches.items():
        code = registry.by_id(cid).code
        mask = rasterize_patch([to_model_frame(p, t) for p in pts], canvas, label=code)
        bundle.masks[cid] = mask
        bundle.boxes[cid] = mask_to_bbox(mask)
    return bundle


def save_label_bundle(bundle: LabelBundle, path) -> None:
    features = []
    for cid in sorted(bundle.masks):
        box = bundle.boxes[cid]
        features.append(
            {
                "class_id": cid,
                "box": [box.x_min, box.y_min, box.x_max, box.y_max],
                "mask_runs": list(bundle.masks[cid].runs),
            }
        )
    doc = {
        "schema_version": BUNDLE_SCHEMA_VERSION,
        "image_id": bundle.image_id,
        "width": bundle.width,
        "height": bundle.height,
        "split": bundle.split.value,
        "features": features,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", "utf-8")


def load_label_bundle(path) -> LabelBundle:
    doc = json.loads(Path(path).read_text("utf-8"))
    if doc.get("schema_version") != BUNDLE_SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported bundle schema_version {doc.get('schema_version')!r}")
    bundle = LabelBundle(
        image_id=doc["image_id"],
        width=doc["width"],
        height=doc["height"],
        split=Split(doc.get("split", "unassigned")),
    )
    for entry in doc["features"]:
        cid = entry["class_id"]
        bundle.masks[cid] = Mask(bundle.width, bundle.height, tuple(entry["mask_runs"]), Frame.MODEL)
        x0, y0, x1, y1 = entry["box"]
        bundle.boxes[cid] = BBox(x0, y0, x1, y1, Frame.MODEL)
    return bundle
