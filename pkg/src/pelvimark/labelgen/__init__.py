from pelvimark.labelgen.rasterize import (
    mask_to_bbox,
    rasterize_landmark,
    rasterize_outline,
    rasterize_patch,
)
from pelvimark.labelgen.bundles import (
    LabelBundle,
    LabelConfig,
    build_label_bundle,
    load_label_bundle,
    save_label_bundle,
)
from pelvimark.labelgen.export import (
    export_detection_labels,
    parse_detection_labels,
    trace_mask_polygon,
)
from pelvimark.labelgen.split import (
    load_split_manifest,
    save_split_manifest,
    split_dataset,
)

__all__ = [
    "LabelBundle",
    "LabelConfig",
    "build_label_bundle",
    "export_detection_labels",
    "load_label_bundle",
    "load_split_manifest",
    "mask_to_bbox",
    "parse_detection_labels",
    "rasterize_landmark",
    "rasterize_outline",
    "rasterize_patch",
    "save_label_bundle",
    "save_split_manifest",
    "split_dataset",
    "trace_mask_polygon",
]
