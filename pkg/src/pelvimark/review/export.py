"""Turn curated review records into the next training pool.

The pool is a directory of corrected AnnotationSets plus LabelBundles
regenerated through the normal label pipeline, so rasterization has a
single definition. Output is deterministic: canonical serializers, no
timestamps, manifest hashed over file bytes; exporting twice without
new curation produces byte-identical content.

Geometry per corrected class:
  landmark  accepted -> predicted point; moved -> corrected point;
            added -> supplied point
  patch     accepted / mask_replaced -> mask's outer boundary traced
            into a polygon; added -> supplied polygon
  outline   added -> supplied polyline; accepted / mask_replaced have
            no polyline to recover, so the mask itself is carried into
            the regenerated bundle and the class is listed under
            direct_mask_classes in the manifest
"""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from pelvimark.core.geometry import Frame, GeometryTransform, PointPx
from pelvimark.core.masks import Mask, encode_mask
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, FeatureKind
from pelvimark.errors import ValidationError
from pelvimark.ingestion.annotations import AnnotationSet, serialize_annotations
from pelvimark.ingestion.normalize import normalize_image
from pelvimark.labelgen.bundles import LabelConfig, build_label_bundle, save_label_bundle
from pelvimark.labelgen.export import trace_mask_polygon
from pelvimark.labelgen.rasterize import mask_to_bbox
from pelvimark.review.store import ReviewStore, StoredState

POOL_SCHEMA_VERSION = 1


def _prediction_landmark(prediction: dict, class_id: int) -> Optional[PointPx]:
    for entry in prediction.get("landmarks", ()):
        if entry["class_id"] == class_id:
            return PointPx(entry["x_px"], entry["y_px"], Frame.ORIGINAL)
    return None


def _prediction_mask(prediction: dict, class_id: int) -> Optional[Mask]:
    for entry in prediction.get("masks", ()):
        if entry["class_id"] == class_id:
            return Mask(entry["width"], entry["height"], tuple(entry["runs"]), Frame.ORIGINAL)
    return None


def _corr_mask(corr: dict) -> Mask:
    return Mask(corr["width"], corr["height"], tuple(corr["runs"]), Frame.ORIGINAL)


def _points(raw) -> Tuple[PointPx, ...]:
    return tuple(PointPx(float(p[0]), float(p[1]), Frame.ORIGINAL) for p in raw)


def corrected_annotation_set(
    state: StoredState, registry: ClassRegistry
) -> Tuple[AnnotationSet, Dict[int, Mask], List[str]]:
    """Resolve corrections into (annotations, direct masks, skipped codes)."""
    ann = AnnotationSet(image_id=state.image_id)
    direct_masks: Dict[int, Mask] = {}
    skipped: List[str] = []

    for code in sorted(state.corrections):
        corr = state.corrections[code]
        fc = registry.by_code(code)
        cid = fc.class_id
        ctype = corr["type"]
        if ctype == "marked_missing":
            continue

        if fc.kind == FeatureKind.LANDMARK:
            if ctype == "moved":
                ann.landmarks[cid] = PointPx(float(corr["point"][0]), float(corr["point"][1]), Frame.ORIGINAL)
            elif ctype == "added":
                p = corr["geometry"]["point"]
                ann.landmarks[cid] = PointPx(float(p[0]), float(p[1]), Frame.ORIGINAL)
            elif ctype == "accepted":
                point = _prediction_landmark(state.prediction, cid)
                if point is None:
                    skipped.append(code)
                else:
                    ann.landmarks[cid] = point
            else:
                skipped.append(code)
            continue

        if ctype == "added":
            pts = _points(corr["geometry"]["points"])
            if fc.kind == FeatureKind.OUTLINE:
                ann.outlines[cid] = pts
            else:
                ann.patches[cid] = pts
            continue

        mask = _corr_mask(corr) if ctype == "mask_replaced" else _prediction_mask(state.prediction, cid)
        if mask is None or mask.empty:
            skipped.append(code)
        elif fc.kind == FeatureKind.PATCH:
            vertices = trace_mask_polygon(mask)
            ann.patches[cid] = tuple(PointPx(x, y, Frame.ORIGINAL) for x, y in vertices)
        else:
            direct_masks[cid] = mask

    return ann, direct_masks, skipped


def mask_to_model_frame(
    mask: Mask, transform: GeometryTransform, side: int
) -> Mask:
    """Inverse of the pipeline's back-transform, same nearest-neighbor rule."""
    grid = mask.to_array()
    h, w = grid.shape
    xs = (np.arange(side, dtype=np.float64) - transform.pad_x) / transform.scale_x
    ys = (np.arange(side, dtype=np.float64) - transform.pad_y) / transform.scale_y
    oj = np.floor(xs + 0.5).astype(np.int64)
    oi = np.floor(ys + 0.5).astype(np.int64)
    valid_j = (oj >= 0) & (oj < w)
    valid_i = (oi >= 0) & (oi < h)
    out = np.zeros((side, side), dtype=bool)
    if valid_i.any() and valid_j.any():
        out[np.ix_(valid_i, valid_j)] = grid[np.ix_(oi[valid_i], oj[valid_j])]
    return encode_mask(out, Frame.MODEL)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_training_pool(
    store: ReviewStore,
    pool_dir,
    records: Dict[str, ImageRecord],
    registry: ClassRegistry,
    label_config: Optional[LabelConfig] = None,
    target_side: int = 512,
) -> dict:
    """Write every curated record to ``pool_dir``; returns the manifest."""
    label_config = label_config or LabelConfig()
    pool = Path(pool_dir)
    ann_dir = pool / "annotations"
    bundle_dir = pool / "bundles"
    for sub in (ann_dir, bundle_dir):
        if sub.exists():
            shutil.rmtree(sub)
        sub.mkdir(parents=True)

    images = []
    errors: List[str] = []
    for state in store.curated_states():
        ann, direct_masks, skipped = corrected_annotation_set(state, registry)
        ann_rel = f"annotations/{state.image_id}.json"
        (pool / ann_rel).write_text(serialize_annotations(ann, registry), "utf-8")

        entry = {
            "image_id": state.image_id,
            "revision": state.revision,
            "annotation": ann_rel,
            "annotation_sha256": _sha256(pool / ann_rel),
            "direct_mask_classes": sorted(registry.by_id(cid).code for cid in direct_masks),
            "skipped_classes": skipped,
        }

        rec = records.get(state.image_id)
        if rec is None:
            errors.append(f"{state.image_id}: no image record; bundle not regenerated")
        else:
            try:
                norm = normalize_image(rec, target_side)
                bundle = build_label_bundle(
                    ann, norm, rec.pixel_spacing, registry, label_config, split=rec.split
                )
                for cid, mask in direct_masks.items():
                    model_mask = mask_to_model_frame(mask, norm.transform, target_side)
                    if model_mask.empty:
                        errors.append(
                            f"{state.image_id}: {registry.by_id(cid).code} mask vanished in the model frame"
                        )
                        continue
                    bundle.masks[cid] = model_mask
                    bundle.boxes[cid] = mask_to_bbox(model_mask)
                bundle_rel = f"bundles/{state.image_id}.json"
                save_label_bundle(bundle, pool / bundle_rel)
                entry["bundle"] = bundle_rel
                entry["bundle_sha256"] = _sha256(pool / bundle_rel)
            except ValidationError as exc:
                errors.append(f"{state.image_id}: bundle regeneration failed: {exc}")

        images.append(entry)

    manifest = {
        "schema_version": POOL_SCHEMA_VERSION,
        "count": len(images),
        "images": images,
        "errors": sorted(errors),
    }
    (pool / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return manifest
