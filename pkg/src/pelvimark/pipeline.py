"""Two-stage inference per image: detect, select, segment, back-transform.

Landmark coordinates come from detection box centers, never from
segmenter masks (the optional ``landmarks_via_segmentation`` switch
flips that for experiments). Masks are thresholded, reduced to their
largest 4-connected component, and resampled to the original frame
with nearest-neighbor lookup to stay binary.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import ndimage

from pelvimark.backends.base import (
    Backend,
    Detection,
    SegmentResult,
    validate_detection,
    validate_segment_result,
)
from pelvimark.core.geometry import (
    BBox,
    Frame,
    GeometryTransform,
    PointPx,
    Spacing,
    to_original_frame,
)
from pelvimark.core.masks import Mask, encode_mask
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, FeatureKind
from pelvimark.errors import ContractViolation, ValidationError
from pelvimark.ingestion.normalize import normalize_image

log = logging.getLogger(__name__)

PREDICTION_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    confidence_threshold: float = 0.25
    mask_threshold: float = 0.5
    landmarks_via_segmentation: bool = False
    workers: int = 4

    def __post_init__(self):
        if not 0.0 < self.mask_threshold < 1.0:
            raise ValidationError(f"mask_threshold must be in (0,1), got {self.mask_threshold}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValidationError(
                f"confidence_threshold must be in [0,1], got {self.confidence_threshold}"
            )
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class LandmarkPrediction:
    class_id: int
    point: PointPx  # original frame
    confidence: float
    x_mm: Optional[float] = None
    y_mm: Optional[float] = None

    @property
    def calibrated(self) -> bool:
        return self.x_mm is not None


@dataclass(frozen=True)
class MaskPrediction:
    class_id: int
    mask: Mask  # original frame
    confidence: float


@dataclass
class PredictionSet:
    image_id: str
    landmarks: Dict[int, LandmarkPrediction] = field(default_factory=dict)
    masks: Dict[int, MaskPrediction] = field(default_factory=dict)
    boxes: Dict[int, BBox] = field(default_factory=dict)  # selected boxes, model frame
    missing: Set[int] = field(default_factory=set)
    calibrated: bool = True
    warnings: List[str] = field(default_factory=list)

    def validate(self, registry: ClassRegistry) -> None:
        predicted = set(self.landmarks) | set(self.masks)
        if self.missing & predicted:
            raise ContractViolation(
                f"{self.image_id}: classes both predicted and missing: {sorted(self.missing & predicted)}"
            )
        for cid in self.landmarks:
            if registry.by_id(cid).kind != FeatureKind.LANDMARK:
                raise ContractViolation(f"{self.image_id}: class {cid} is not a landmark")
        for cid in self.masks:
            if registry.by_id(cid).kind == FeatureKind.LANDMARK:
                raise ContractViolation(f"{self.image_id}: landmark class {cid} carries a mask")


def select_best_per_class(dets: Sequence[Detection]) -> Dict[int, Detection]:
    """Argmax by confidence; ties go to the larger box, then the lower y_min."""
    best: Dict[int, Detection] = {}
    for d in dets:
        cur = best.get(d.class_id)
        if cur is None or _rank(d) > _rank(cur):
            best[d.class_id] = d
    return best


def _rank(d: Detection) -> Tuple[float, float, float]:
    return (d.confidence, d.box.area, -d.box.y_min)


def box_center(b: BBox) -> PointPx:
    return PointPx((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0, b.frame)


def postprocess_mask(r: SegmentResult, threshold: float = 0.5) -> Optional[Mask]:
    """Threshold at >= threshold and keep the largest 4-connected component.

    Returns None when nothing survives; the caller files the class as
    missing.
    """
    binary = np.asarray(r.prob_mask) >= threshold
    if not binary.any():
        return None
    labeled, count = ndimage.label(binary)  # default structure: 4-connectivity
    if count > 1:
        sizes = np.bincount(labeled.ravel())
        sizes[0] = 0
        binary = labeled == int(sizes.argmax())
    return encode_mask(binary, Frame.MODEL)


def mask_to_original_frame(
    mask: Mask, transform: GeometryTransform, width: int, height: int
) -> Mask:
    """Nearest-neighbor resample of a model-frame mask onto the original grid.

    Each original pixel center maps into the model frame and samples
    the pixel whose footprint contains it (round half up).
    """
    grid = mask.to_array()
    mh, mw = grid.shape
    xs = np.arange(width, dtype=np.float64) * transform.scale_x + transform.pad_x
    ys = np.arange(height, dtype=np.float64) * transform.scale_y + transform.pad_y
    mj = np.floor(xs + 0.5).astype(np.int64)
    mi = np.floor(ys + 0.5).astype(np.int64)
    valid_j = (mj >= 0) & (mj < mw)
    valid_i = (mi >= 0) & (mi < mh)
    out = np.zeros((height, width), dtype=bool)
    if valid_i.any() and valid_j.any():
        sub = grid[np.ix_(mi[valid_i], mj[valid_j])]
        out[np.ix_(valid_i, valid_j)] = sub
    return encode_mask(out, Frame.ORIGINAL)


def _clip_to_canvas(box: BBox, side: int) -> Optional[BBox]:
    x0 = min(max(box.x_min, 0.0), float(side))
    y0 = min(max(box.y_min, 0.0), float(side))
    x1 = min(max(box.x_max, 0.0), float(side))
    y1 = min(max(box.y_max, 0.0), float(side))
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1, y1, box.frame)


def run_pipeline(
    rec: ImageRecord,
    backend: Backend,
    registry: ClassRegistry,
    config: Optional[PipelineConfig] = None,
) -> PredictionSet:
    """Full flow for one image; every registry class ends up either
    predicted or in the missing set."""
    config = config or PipelineConfig()
    side = backend.descriptor.required_input_side
    norm = normalize_image(rec, side)
    spacing = rec.pixel_spacing

    dets = backend.detect(norm)
    for d in dets:
        validate_detection(d, side, backend.descriptor.name)
    best = select_best_per_class(
        [d for d in dets if d.confidence >= config.confidence_threshold]
    )

    result = PredictionSet(image_id=rec.image_id, calibrated=spacing is not None)
    for fc in registry:
        cid = fc.class_id
        det = best.get(cid)
        if det is None:
            result.missing.add(cid)
            continue
        if fc.kind == FeatureKind.LANDMARK and not config.landmarks_via_segmentation:
            center_model = box_center(det.box)
            point = to_original_frame(center_model, norm.transform)
            result.landmarks[cid] = _calibrate(cid, point, det.confidence, spacing)
            result.boxes[cid] = det.box
            continue

        prompt = _clip_to_canvas(det.box, side)
        if prompt is None:
            result.missing.add(cid)
            result.warnings.append(f"{fc.code}: prompt box entirely outside the canvas")
            continue
        if prompt != det.box:
            result.warnings.append(f"{fc.code}: prompt box clipped to the canvas")
        seg = backend.segment(norm, prompt, cid)
        validate_segment_result(seg, side, backend.descriptor.name)
        mask_model = postprocess_mask(seg, config.mask_threshold)
        if mask_model is None:
            result.missing.add(cid)
            result.warnings.append(f"{fc.code}: segmentation empty at threshold {config.mask_threshold}")
            continue
        if fc.kind == FeatureKind.LANDMARK:
            point = _mask_centroid_original(mask_model, norm.transform)
            result.landmarks[cid] = _calibrate(cid, point, det.confidence, spacing)
        else:
            result.masks[cid] = MaskPrediction(
                cid,
                mask_to_original_frame(mask_model, norm.transform, rec.width, rec.height),
                det.confidence,
            )
        result.boxes[cid] = det.box

    result.validate(registry)
    return result


def _calibrate(
    cid: int, point: PointPx, confidence: float, spacing: Optional[Spacing]
) -> LandmarkPrediction:
    if spacing is None:
        return LandmarkPrediction(cid, point, confidence)
    return LandmarkPrediction(
        cid, point, confidence, x_mm=point.x * spacing.col_mm, y_mm=point.y * spacing.row_mm
    )


def _mask_centroid_original(mask: Mask, transform: GeometryTransform) -> PointPx:
    grid = mask.to_array()
    ys, xs = np.nonzero(grid)
    center = PointPx(float(xs.mean()), float(ys.mean()), Frame.MODEL)
    return to_original_frame(center, transform)


def run_batch(
    records: Sequence[ImageRecord],
    backend: Backend,
    registry: ClassRegistry,
    config: Optional[PipelineConfig] = None,
) -> Tuple[Dict[str, PredictionSet], Dict[str, str]]:
    """Run many images; failures are collected per image, never fatal.

    Returns (predictions, failures) with deterministic (sorted) key
    order regardless of worker scheduling.
    """
    config = config or PipelineConfig()
    results: Dict[str, PredictionSet] = {}
    failures: Dict[str, str] = {}

    def one(rec: ImageRecord):
        return rec.image_id, run_pipeline(rec, backend, registry, config)

    workers = config.workers if backend.descriptor.thread_safe else 1
    if workers == 1:
        for rec in records:
            try:
                results[rec.image_id] = run_pipeline(rec, backend, registry, config)
            except Exception as exc:
                failures[rec.image_id] = str(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(one, rec): rec.image_id for rec in records}
            for fut, image_id in futures.items():
                try:
                    rid, pred = fut.result()
                    results[rid] = pred
                except Exception as exc:
                    failures[image_id] = str(exc)

    return (
        {k: results[k] for k in sorted(results)},
        {k: failures[k] for k in sorted(failures)},
    )


def prediction_to_dict(pred: PredictionSet, registry: ClassRegistry) -> dict:
    def code(cid: int) -> str:
        return registry.by_id(cid).code

    return {
        "schema_version": PREDICTION_SCHEMA_VERSION,
        "image_id": pred.image_id,
        "calibrated": pred.calibrated,
        "landmarks": [
            {
                "class_id": cid,
                "code": code(cid),
                "x_px": lp.point.x,
                "y_px": lp.point.y,
                "x_mm": lp.x_mm,
                "y_mm": lp.y_mm,
                "confidence": lp.confidence,
            }
            for cid, lp in sorted(pred.landmarks.items())
        ],
        "masks": [
            {
                "class_id": cid,
                "code": code(cid),
                "width": mp.mask.width,
                "height": mp.mask.height,
                "runs": list(mp.mask.runs),
                "confidence": mp.confidence,
            }
            for cid, mp in sorted(pred.masks.items())
        ],
        "boxes": [
            {
                "class_id": cid,
                "box": [b.x_min, b.y_min, b.x_max, b.y_max],
            }
            for cid, b in sorted(pred.boxes.items())
        ],
        "missing": sorted(pred.missing),
        "warnings": list(pred.warnings),
    }


def prediction_from_dict(doc: dict) -> PredictionSet:
    if doc.get("schema_version") != PREDICTION_SCHEMA_VERSION:
        raise ValidationError(f"unsupported prediction schema_version {doc.get('schema_version')!r}")
    pred = PredictionSet(
        image_id=doc["image_id"],
        calibrated=doc.get("calibrated", True),
        warnings=list(doc.get("warnings", [])),
    )
    for entry in doc.get("landmarks", ()):
        cid = entry["class_id"]
        pred.landmarks[cid] = LandmarkPrediction(
            cid,
            PointPx(entry["x_px"], entry["y_px"], Frame.ORIGINAL),
            entry["confidence"],
            x_mm=entry.get("x_mm"),
            y_mm=entry.get("y_mm"),
        )
    for entry in doc.get("masks", ()):
        cid = entry["class_id"]
        pred.masks[cid] = MaskPrediction(
            cid,
            Mask(entry["width"], entry["height"], tuple(entry["runs"]), Frame.ORIGINAL),
            entry["confidence"],
        )
    for entry in doc.get("boxes", ()):
        x0, y0, x1, y1 = entry["box"]
        pred.boxes[entry["class_id"]] = BBox(x0, y0, x1, y1, Frame.MODEL)
    pred.missing = set(doc.get("missing", ()))
    return pred


def save_predictions(pred: PredictionSet, path, registry: ClassRegistry) -> None:
    Path(path).write_text(
        json.dumps(prediction_to_dict(pred, registry), indent=2) + "\n", "utf-8"
    )


def load_predictions(path) -> PredictionSet:
    return prediction_from_dict(json.loads(Path(path).read_text("utf-8")))


def predictions_to_csv(
    preds: Sequence[PredictionSet], registry: ClassRegistry
) -> str:
    """Flat landmark table for spreadsheets; masks have no row here."""
    lines = ["image_id,class,x_mm,y_mm,confidence"]
    for pred in sorted(preds, key=lambda p: p.image_id):
        for cid, lp in sorted(pred.landmarks.items()):
            x_mm = f"{lp.x_mm:.6f}" if lp.x_mm is not None else ""
            y_mm = f"{lp.y_mm:.6f}" if lp.y_mm is not None else ""
            lines.append(
                f"{pred.image_id},{registry.by_id(cid).code},{x_mm},{y_mm},{lp.confidence:.6f}"
            )
    return "\n".join(lines) + "\n"
