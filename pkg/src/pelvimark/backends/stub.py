"""Deterministic oracle backend that wraps ground truth in configured noise.

Four orthogonal corruptions, each mapping to one failure mode a real
model exhibits: a per-class drop set (missed classes), Gaussian box
center jitter (localization error), multiplicative box scale jitter,
and mask erosion/dilation (imperfect segmentation). With all knobs at
zero the stub reproduces ground truth exactly, which is what the
end-to-end identity tests rely on.

Randomness is per image: a generator seeded from (seed, crc32(image_id))
drives draws for emitted detections in ascending class-id order, so
outputs are bit-identical across runs and independent of batch order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional

import numpy as np
from scipy import ndimage

from pelvimark.backends.base import (
    BackendDescriptor,
    Detection,
    PROVIDES_BOTH,
    SegmentResult,
)
from pelvimark.core.geometry import BBox, Frame, Spacing, to_model_frame
from pelvimark.core.masks import Mask
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry
from pelvimark.errors import BackendError, ContractViolation
from pelvimark.ingestion.annotations import AnnotationSet
from pelvimark.ingestion.normalize import NormalizedImage, normalize_image
from pelvimark.labelgen.bundles import LabelConfig, model_spacing
from pelvimark.labelgen.rasterize import (
    mask_to_bbox,
    rasterize_outline,
    rasterize_patch,
)


@dataclass(frozen=True)
class StubCorruption:
    """All knobs default to "off"; the stub is then an exact oracle."""

    drop_classes: FrozenSet[int] = frozenset()
    center_jitter_px: float = 0.0
    scale_jitter: float = 0.0
    morph_iterations: int = 0  # > 0 dilate, < 0 erode
    confidence_penalty: float = 0.0

    def active_detection_corruptions(self) -> int:
        return int(self.center_jitter_px > 0) + int(self.scale_jitter > 0)


@dataclass
class StubImageTruth:
    """Model-frame ground truth the stub consults for one image.

    Landmark boxes are built directly around the annotated point, so a
    zero-noise detection's center is the annotated location itself.
    """

    image_id: str
    boxes: Dict[int, BBox] = field(default_factory=dict)
    masks: Dict[int, Mask] = field(default_factory=dict)


def build_stub_truth(
    record: ImageRecord,
    ann: AnnotationSet,
    registry: ClassRegistry,
    target_side: int,
    config: Optional[LabelConfig] = None,
) -> StubImageTruth:
    if record.image_id != ann.image_id:
        raise ContractViolation(
            f"record '{record.image_id}' paired with annotations for '{ann.image_id}'"
        )
    config = config or LabelConfig()
    norm = normalize_image(record, target_side)
    spacing = model_spacing(record.pixel_spacing, norm.transform, config)
    canvas = (norm.width, norm.height)
    t = norm.transform
    truth = StubImageTruth(image_id=record.image_id)

    for cid, p in ann.landmarks.items():
        code = registry.by_id(cid).code
        radius = config.radius_for(code)
        pm = to_model_frame(p, t)
        rx = radius / spacing.col_mm
        ry = radius / spacing.row_mm
        truth.boxes[cid] = BBox(pm.x - rx, pm.y - ry, pm.x + rx, pm.y + ry, Frame.MODEL)
    for cid, pts in ann.outlines.items():
        code = registry.by_id(cid).code
        mask = rasterize_outline(
            [to_model_frame(p, t) for p in pts], config.stroke_for(code), spacing, canvas, label=code
        )
        truth.masks[cid] = mask
        truth.boxes[cid] = mask_to_bbox(mask)
    for cid, pts in ann.patches.items():
        code = registry.by_id(cid).code
        mask = rasterize_patch([to_model_frame(p, t) for p in pts], canvas, label=code)
        truth.masks[cid] = mask
        truth.boxes[cid] = mask_to_bbox(mask)
    return truth


class StubBackend:
    def __init__(
        self,
        truth: Dict[str, StubImageTruth],
        corruption: Optional[StubCorruption] = None,
        seed: int = 0,
        input_side: int = 512,
    ):
        self.descriptor = BackendDescriptor(
            name="stub-oracle", required_input_side=input_side, provides=PROVIDES_BOTH
        )
        self._truth = truth
        self._corruption = corruption or StubCorruption()
        self._seed = int(seed)

    def _truth_for(self, image_id: str) -> StubImageTruth:
        try:
            return self._truth[image_id]
        except KeyError:
            raise BackendError(f"stub has no ground truth for image '{image_id}'") from None

    def _rng(self, image_id: str) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self._seed, zlib.crc32(image_id.encode("utf-8"))])
        )

    def detect(self, img: NormalizedImage) -> List[Detection]:
        truth = self._truth_for(img.image_id)
        c = self._corruption
        rng = self._rng(img.image_id)
        confidence = max(0.0, 1.0 - c.confidence_penalty * c.active_detection_corruptions())

        out: List[Detection] = []
        for cid in sorted(truth.boxes):
            if cid in c.drop_classes:
                continue
            box = truth.boxes[cid]
            x0, y0, x1, y1 = box.x_min, box.y_min, box.x_max, box.y_max
            if c.center_jitter_px > 0:
                dx, dy = rng.normal(0.0, c.center_jitter_px, size=2)
                x0, x1, y0, y1 = x0 + dx, x1 + dx, y0 + dy, y1 + dy
            if c.scale_jitter > 0:
                f = float(np.exp(rng.normal(0.0, c.scale_jitter)))
                cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
                hw, hh = (x1 - x0) / 2.0 * f, (y1 - y0) / 2.0 * f
                x0, x1, y0, y1 = cx - hw, cx + hw, cy - hh, cy + hh
            out.append(Detection(cid, BBox(x0, y0, x1, y1, Frame.MODEL), confidence))
        return out

    def segment(self, img: NormalizedImage, prompt: BBox, class_id: int) -> SegmentResult:
        truth = self._truth_for(img.image_id)
        side = self.descriptor.required_input_side

        clipped_box, vanished = _clip_box(prompt, side)
        if vanished:
            zeros = np.zeros((side, side), dtype=np.float64)
            return SegmentResult(class_id, zeros, clipped_box, clipped=True)

        gt = truth.masks.get(class_id)
        if gt is None:
            grid = np.zeros((side, side), dtype=bool)
        else:
            grid = gt.to_array()
        n = self._corruption.morph_iterations
        if n > 0 and grid.any():
            grid = ndimage.binary_dilation(grid, iterations=n)
        elif n < 0 and grid.any():
            grid = ndimage.binary_erosion(grid, iterations=-n)
        return SegmentResult(
            class_id,
            grid.astype(np.float64),
            clipped_box,
            clipped=clipped_box != prompt,
        )


def _clip_box(box: BBox, side: int):
    """Clip to the canvas; a box entirely outside collapses to a sliver flag."""
    x0 = min(max(box.x_min, 0.0), float(side))
    y0 = min(max(box.y_min, 0.0), float(side))
    x1 = min(max(box.x_max, 0.0), float(side))
    y1 = min(max(box.y_max, 0.0), float(side))
    if x1 <= x0 or y1 <= y0:
        return box, True
    return BBox(x0, y0, x1, y1, box.frame), False
