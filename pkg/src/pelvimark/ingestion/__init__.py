from pelvimark.ingestion.dicom import load_dicom, save_dicom
from pelvimark.ingestion.annotations import (
    AnnotationSet,
    FeatureAnnotation,
    load_annotations,
    save_annotations,
)
from pelvimark.ingestion.normalize import NormalizedImage, normalize_image

__all__ = [
    "AnnotationSet",
    "FeatureAnnotation",
    "NormalizedImage",
    "load_annotations",
    "load_dicom",
    "normalize_image",
    "save_annotations",
    "save_dicom",
]
