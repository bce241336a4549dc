from pelvimark.core.geometry import (
    BBox,
    Frame,
    GeometryTransform,
    IDENTITY_TRANSFORM,
    PointPx,
    Spacing,
    bbox_to_model_frame,
    bbox_to_original_frame,
    point_distance_mm,
    px_to_mm,
    require_frame,
    to_model_frame,
    to_original_frame,
)
from pelvimark.core.masks import Mask, decode_mask, empty_mask, encode_mask
from pelvimark.core.records import ImageRecord, Split
from pelvimark.core.registry import (
    ClassRegistry,
    FeatureClass,
    FeatureKind,
    Side,
    load_class_registry,
    save_class_registry,
)

__all__ = [
    "BBox",
    "ClassRegistry",
    "FeatureClass",
    "FeatureKind",
    "Frame",
    "GeometryTransform",
    "IDENTITY_TRANSFORM",
    "ImageRecord",
    "Mask",
    "PointPx",
    "Side",
    "Spacing",
    "Split",
    "bbox_to_model_frame",
    "bbox_to_original_frame",
    "decode_mask",
    "empty_mask",
    "encode_mask",
    "load_class_registry",
    "point_distance_mm",
    "px_to_mm",
    "require_frame",
    "save_class_registry",
    "to_model_frame",
    "to_original_frame",
]
