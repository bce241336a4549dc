from pelvimark.evaluation.metrics import (
    Aggregate,
    acceptability,
    aggregate,
    box_iou,
    detection_rate,
    iou,
    point_error_mm,
    point_error_px,
)
from pelvimark.evaluation.report import (
    ClassStats,
    EvalConfig,
    EvalReport,
    emit_report,
    evaluate_predictions,
    verify_report_dict,
)

__all__ = [
    "Aggregate",
    "ClassStats",
    "EvalConfig",
    "EvalReport",
    "acceptability",
    "aggregate",
    "box_iou",
    "detection_rate",
    "emit_report",
    "evaluate_predictions",
    "iou",
    "point_error_mm",
    "point_error_px",
    "verify_report_dict",
]
