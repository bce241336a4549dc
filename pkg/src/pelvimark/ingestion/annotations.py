"""Ground-truth annotation documents.

One JSON document per image: points for landmarks, open polylines for
outlines, closed polygons for patches. Document structure is validated
strictly against the shipped JSON-Schema; individual features are
validated leniently, so a single malformed or unknown feature lands in
a rejection list instead of failing the whole document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import jsonschema

from pelvimark.core.geometry import Frame, PointPx
from pelvimark.core.registry import ClassRegistry, FeatureKind
from pelvimark.errors import IngestionError

ANNOTATION_SCHEMA_VERSION = 1

_KIND_CONTAINER = {
    "landmarks": FeatureKind.LANDMARK,
    "outlines": FeatureKind.OUTLINE,
    "patches": FeatureKind.PATCH,
}


def annotation_schema() -> dict:
    raw = resources.files("pelvimark.ingestion").joinpath("annotation.schema.json").read_text("utf-8")
    return json.loads(raw)


@dataclass(frozen=True)
class RejectedFeature:
    code: str
    reason: str


@dataclass
class FeatureAnnotation:
    """Not a stored type; the loader's view of one raw feature entry."""

    code: str
    container: str
    payload: dict


@dataclass
class AnnotationSet:
    """Per-image ground truth keyed by class id, coordinates in the original frame."""

    image_id: str
    landmarks: Dict[int, PointPx] = field(default_factory=dict)
    outlines: Dict[int, Tuple[PointPx, ...]] = field(default_factory=dict)
    patches: Dict[int, Tuple[PointPx, ...]] = field(default_factory=dict)

    def geometry_of(self, class_id: int):
        for container in (self.landmarks, self.outlines, self.patches):
            if class_id in container:
                return container[class_id]
        return None

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(sorted([*self.landmarks, *self.outlines, *self.patches]))

    def is_empty(self) -> bool:
        return not (self.landmarks or self.outlines or self.patches)


def _parse_point(value, code: str) -> PointPx:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value)
    ):
        raise ValueError(f"feature '{code}': point must be [x, y]")
    return PointPx(float(value[0]), float(value[1]), Frame.ORIGINAL)


def _parse_points(value, code: str, minimum: int) -> Tuple[PointPx, ...]:
    if not isinstance(value, list):
        raise ValueError(f"feature '{code}': points must be an array of [x, y] pairs")
    pts = tuple(_parse_point(v, code) for v in value)
    if len(pts) < minimum:
        raise ValueError(f"feature '{code}': needs at least {minimum} points, got {len(pts)}")
    return pts


def load_annotations(
    path,
    registry: ClassRegistry,
    adapter: Optional[Callable[[dict], dict]] = None,
) -> Tuple[AnnotationSet, List[RejectedFeature]]:
    """Parse one annotation document.

    ``adapter``, when given, maps an external provider's raw JSON layout
    onto the canonical document shape before validation. Returns the
    parsed set plus a list of per-feature rejections (unknown codes,
    kind mismatches, malformed geometry, duplicates).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read annotations {path}: {exc}") from exc
    if adapter is not None:
        doc = adapter(doc)
    try:
        jsonschema.validate(doc, annotation_schema())
    except jsonschema.ValidationError as exc:
        raise IngestionError(f"{path}: invalid annotation document: {exc.message}") from exc

    ann = AnnotationSet(image_id=doc["image_id"])
    rejections: List[RejectedFeature] = []
    seen: set = set()

    for container, kind in _KIND_CONTAINER.items():
        for entry in doc.get(container, ()):
            code = entry["code"]
            if code not in registry:
                rejections.append(RejectedFeature(code, "unknown class code"))
                continue
            fc = registry.by_code(code)
            if fc.kind != kind:
                rejections.append(
                    RejectedFeature(code, f"class kind is '{fc.kind.value}' but listed under '{container}'")
                )
                continue
            if fc.class_id in seen:
                rejections.append(RejectedFeature(code, "duplicate feature"))
                continue
            try:
                if kind == FeatureKind.LANDMARK:
                    ann.landmarks[fc.class_id] = _parse_point(entry.get("point"), code)
                elif kind == FeatureKind.OUTLINE:
                    ann.outlines[fc.class_id] = _parse_points(entry.get("points"), code, 2)
                else:
                    ann.patches[fc.class_id] = _parse_points(entry.get("points"), code, 3)
            except ValueError as exc:
                rejections.append(RejectedFeature(code, str(exc)))
                continue
            seen.add(fc.class_id)

    return ann, rejections


def save_annotations(ann: AnnotationSet, path, registry: ClassRegistry) -> None:
    """Write the canonical form: containers in fixed order, features sorted by code."""
    Path(path).write_text(serialize_annotations(ann, registry), "utf-8")


def serialize_annotations(ann: AnnotationSet, registry: ClassRegistry) -> str:
    def code_of(cid: int) -> str:
        return registry.by_id(cid).code

    doc = {
        "schema_version": ANNOTATION_SCHEMA_VERSION,
        "image_id": ann.image_id,
        "landmarks": [
            {"code": code_of(cid), "point": [p.x, p.y]}
            for cid, p in sorted(ann.landmarks.items(), key=lambda kv: code_of(kv[0]))
        ],
        "outlines": [
            {"code": code_of(cid), "points": [[p.x, p.y] for p in pts]}
            for cid, pts in sorted(ann.outlines.items(), key=lambda kv: code_of(kv[0]))
        ],
        "patches": [
            {"code": code_of(cid), "points": [[p.x, p.y] for p in pts]}
            for cid, pts in sorted(ann.patches.items(), key=lambda kv: code_of(kv[0]))
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def out_of_bounds_features(
    ann: AnnotationSet, width: int, height: int, registry: ClassRegistry
) -> List[str]:
    """Codes of features with any coordinate outside the image footprint.

    The footprint spans [-0.5, width-0.5] x [-0.5, height-0.5]: the union
    of all pixel squares under the integer-center convention.
    """

    def outside(p: PointPx) -> bool:
        return not (-0.5 <= p.x <= width - 0.5 and -0.5 <= p.y <= height - 0.5)

    flagged = []
    for cid, p in ann.landmarks.items():
        if outside(p):
            flagged.append(registry.by_id(cid).code)
    for container in (ann.outlines, ann.patches):
        for cid, pts in container.items():
            if any(outside(p) for p in pts):
                flagged.append(registry.by_id(cid).code)
    return sorted(flagged)
