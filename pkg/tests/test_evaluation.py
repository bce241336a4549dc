"""Metrics, report assembly, and the three report renderings."""

import json
import math

import numpy as np
import pytest

from pelvimark.backends.stub import StubBackend, StubCorruption, build_stub_truth
from pelvimark.core.geometry import BBox, Frame, PointPx, Spacing
from pelvimark.core.masks import empty_mask, encode_mask
from pelvimark.core.registry import ClassRegistry, FeatureClass, FeatureKind, Side
from pelvimark.errors import ContractViolation, ValidationError
from pelvimark.evaluation.metrics import (
    acceptability,
    aggregate,
    box_iou,
    detection_rate,
    iou,
    point_error_mm,
    point_error_px,
)
from pelvimark.evaluation.report import (
    EvalConfig,
    emit_report,
    evaluate_predictions,
    group_of,
    report_from_dict,
    verify_report_dict,
)
from pelvimark.ingestion.annotations import AnnotationSet
from pelvimark.pipeline import LandmarkPrediction, run_pipeline
from pelvimark.errors import PelvimarkError

from conftest import make_record

SIDE = 64


def _block(rows, cols, shape=(20, 20), frame=Frame.ORIGINAL):
    grid = np.zeros(shape, dtype=bool)
    grid[rows[0]: rows[1], cols[0]: cols[1]] = True
    return encode_mask(grid, frame)


# --- scalar metrics ---


def test_point_error_px_is_euclidean():
    a = PointPx(0.0, 0.0, Frame.ORIGINAL)
    b = PointPx(3.0, 4.0, Frame.ORIGINAL)
    assert point_error_px(a, b) == 5.0


def test_point_error_mm_scales_each_axis():
    a = PointPx(0.0, 0.0, Frame.ORIGINAL)
    b = PointPx(3.0, 4.0, Frame.ORIGINAL)
    err = point_error_mm(a, b, Spacing(row_mm=1.0, col_mm=0.5))
    assert err == pytest.approx(math.sqrt(1.5**2 + 4.0**2))


def test_point_error_rejects_frame_mixing():
    a = PointPx(0.0, 0.0, Frame.ORIGINAL)
    b = PointPx(0.0, 0.0, Frame.MODEL)
    with pytest.raises(PelvimarkError):
        point_error_px(a, b)


def test_mask_iou_extremes():
    a = _block((0, 10), (0, 10))
    assert iou(a, a) == 1.0
    assert iou(a, _block((12, 15), (12, 15))) == 0.0


def test_mask_iou_partial_overlap():
    a = _block((0, 10), (0, 10))
    b = _block((0, 10), (5, 15))
    assert iou(a, b) == pytest.approx(50 / 150)


def test_mask_iou_both_empty_is_perfect():
    assert iou(empty_mask(20, 20, Frame.ORIGINAL), empty_mask(20, 20, Frame.ORIGINAL)) == 1.0


def test_mask_iou_rejects_shape_and_frame_mismatch():
    with pytest.raises(ContractViolation, match="dimensions"):
        iou(_block((0, 2), (0, 2)), _block((0, 2), (0, 2), shape=(10, 20)))
    with pytest.raises(PelvimarkError):
        iou(_block((0, 2), (0, 2)), _block((0, 2), (0, 2), frame=Frame.MODEL))


def test_box_iou_values():
    a = BBox(0.0, 0.0, 10.0, 10.0, Frame.MODEL)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BBox(20.0, 20.0, 30.0, 30.0, Frame.MODEL)) == 0.0
    assert box_iou(a, BBox(5.0, 0.0, 15.0, 10.0, Frame.MODEL)) == pytest.approx(1 / 3)


def test_aggregate_known_lists():
    agg = aggregate([1.0, 2.0, 3.0])
    assert (agg.median, agg.mean) == (2.0, 2.0)
    assert agg.std == pytest.approx(math.sqrt(2.0 / 3.0), abs=1e-12)
    agg = aggregate([2.0, 4.0])
    assert (agg.median, agg.mean, agg.std) == (3.0, 3.0, 1.0)
    agg = aggregate([5.0])
    assert (agg.median, agg.mean, agg.std) == (5.0, 5.0, 0.0)
    assert aggregate([]) is None


def test_detection_rate_fractions():
    assert detection_rate(67, 72) == pytest.approx(67 / 72)
    assert detection_rate(16, 18) == pytest.approx(8 / 9)
    assert detection_rate(0, 5) == 0.0
    with pytest.raises(ValidationError, match="positive total"):
        detection_rate(0, 0)
    with pytest.raises(ValidationError, match="outside"):
        detection_rate(7, 5)
    with pytest.raises(ValidationError, match="outside"):
        detection_rate(-1, 5)


def test_acceptability_is_strictly_below_threshold():
    assert acceptability([1.0, 2.9, 3.1], 3.0) == pytest.approx(2 / 3)
    assert acceptability([3.0], 3.0) == 0.0
    assert acceptability([], 3.0) is None


def test_group_partition_rejects_unknown_landmark_group():
    fc = FeatureClass(0, "X1", FeatureKind.LANDMARK, Side.NONE, "skull")
    with pytest.raises(ValidationError, match="skull"):
        group_of(fc)


# --- report assembly ---


@pytest.fixture
def scored_scene(tiny_registry):
    rec = make_record(width=64, height=48)
    ann = AnnotationSet(image_id=rec.image_id)
    ann.landmarks[0] = PointPx(30.0, 20.0, Frame.ORIGINAL)
    ann.outlines[2] = [
        PointPx(10.0, 40.0, Frame.ORIGINAL),
        PointPx(30.0, 44.0, Frame.ORIGINAL),
        PointPx(50.0, 38.0, Frame.ORIGINAL),
    ]
    ann.patches[3] = [
        PointPx(40.0, 10.0, Frame.ORIGINAL),
        PointPx(56.0, 12.0, Frame.ORIGINAL),
        PointPx(48.0, 24.0, Frame.ORIGINAL),
    ]
    truth = build_stub_truth(rec, ann, tiny_registry, SIDE)
    return rec, ann, truth


def _evaluate(rec, ann, truth, tiny_registry, corruption=None):
    backend = StubBackend({rec.image_id: truth}, corruption, input_side=SIDE)
    pred = run_pipeline(rec, backend, tiny_registry)
    return evaluate_predictions(
        {rec.image_id: pred},
        {rec.image_id: ann},
        {rec.image_id: rec},
        tiny_registry,
        EvalConfig(target_side=SIDE),
    )


def test_noiseless_run_scores_perfectly(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    report = _evaluate(rec, ann, truth, tiny_registry)
    assert report.n_images == 1
    doc = report.to_dict()
    summary = doc["summary"]
    assert summary["landmark_error_mm"]["median"] == 0.0
    assert summary["landmark_error_mm"]["mean"] == pytest.approx(0.0, abs=1e-12)
    assert summary["mask_iou"] == {"median": 1.0, "mean": 1.0, "std": 0.0}
    assert summary["acceptability"] == 1.0
    assert summary["rates"]["landmarks"] == {"identified": 1, "total": 1, "rate": 1.0}
    assert summary["rates"]["patches_and_outlines"] == {"identified": 2, "total": 2, "rate": 1.0}
    for g in ("landmarks-femora", "patches-and-outlines"):
        assert doc["groups"][g]["box_iou"]["median"] == 1.0
    assert doc["groups"]["landmarks-pelvis"]["box_iou"] is None


def test_dropped_class_lowers_rate_not_errors(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    report = _evaluate(
        rec, ann, truth, tiny_registry, StubCorruption(drop_classes=frozenset({0}))
    )
    doc = report.to_dict()
    assert doc["summary"]["rates"]["landmarks"] == {"identified": 0, "total": 1, "rate": 0.0}
    assert doc["summary"]["landmark_error_mm"] is None
    assert doc["summary"]["acceptability"] is None
    assert report.classes[0].errors_mm == []


def test_spurious_prediction_is_counted(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    backend = StubBackend({rec.image_id: truth}, input_side=SIDE)
    pred = run_pipeline(rec, backend, tiny_registry)
    pred.missing.discard(1)
    pred.landmarks[1] = LandmarkPrediction(1, PointPx(5.0, 5.0, Frame.ORIGINAL), 0.9)
    report = evaluate_predictions(
        {rec.image_id: pred},
        {rec.image_id: ann},
        {rec.image_id: rec},
        tiny_registry,
        EvalConfig(target_side=SIDE),
    )
    assert report.classes[1].spurious == 1
    assert report.classes[1].identified == 0


def test_predictions_without_ground_truth_are_skipped(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    backend = StubBackend({rec.image_id: truth}, input_side=SIDE)
    pred = run_pipeline(rec, backend, tiny_registry)
    report = evaluate_predictions(
        {rec.image_id: pred, "mystery": pred},
        {rec.image_id: ann},
        {rec.image_id: rec},
        tiny_registry,
        EvalConfig(target_side=SIDE),
    )
    assert report.skipped == ["mystery"]
    assert report.n_images == 1


def test_uncalibrated_image_scores_in_pixels(tiny_registry):
    rec = make_record(width=64, height=48, spacing=None)
    ann = AnnotationSet(image_id=rec.image_id)
    ann.landmarks[0] = PointPx(30.0, 20.0, Frame.ORIGINAL)
    ann.patches[3] = [
        PointPx(40.0, 10.0, Frame.ORIGINAL),
        PointPx(56.0, 12.0, Frame.ORIGINAL),
        PointPx(48.0, 24.0, Frame.ORIGINAL),
    ]
    truth = build_stub_truth(rec, ann, tiny_registry, SIDE, _assumed(0.5))
    backend = StubBackend({rec.image_id: truth}, input_side=SIDE)
    pred = run_pipeline(rec, backend, tiny_registry)
    report = evaluate_predictions(
        {rec.image_id: pred},
        {rec.image_id: ann},
        {rec.image_id: rec},
        tiny_registry,
        EvalConfig(target_side=SIDE),
    )
    assert report.uncalibrated_images == [rec.image_id]
    cs = report.classes[0]
    assert cs.errors_mm == []
    assert cs.errors_px == [pytest.approx(0.0, abs=1e-9)]
    doc = report.to_dict()
    assert doc["summary"]["landmark_error_mm"] is None
    assert doc["summary"]["landmark_error_px"] is not None
    # patch IoU needs no calibration
    assert report.classes[3].ious == [1.0]


def _assumed(v):
    from pelvimark.labelgen.bundles import LabelConfig

    return LabelConfig(assumed_spacing_mm=v)


# --- renderings and self-verification ---


def test_json_report_verifies_and_survives_tampering(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    report = _evaluate(rec, ann, truth, tiny_registry)
    doc = json.loads(emit_report(report, "json"))
    assert doc["schema_version"] == 1
    assert verify_report_dict(doc)
    doc["summary"]["mask_iou"]["mean"] = 0.9
    assert not verify_report_dict(doc)


def test_tampered_group_aggregate_detected(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    report = _evaluate(rec, ann, truth, tiny_registry)
    doc = report.to_dict()
    doc["groups"]["patches-and-outlines"]["iou"]["median"] = 0.5
    assert not verify_report_dict(doc)


def test_report_round_trips_through_its_dict(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    report = _evaluate(rec, ann, truth, tiny_registry)
    assert report_from_dict(report.to_dict()).to_dict() == report.to_dict()


def test_report_schema_version_checked(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    doc = _evaluate(rec, ann, truth, tiny_registry).to_dict()
    doc["schema_version"] = 4
    with pytest.raises(ValidationError, match="schema_version"):
        report_from_dict(doc)


def test_csv_rendering_has_one_row_per_class(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    text = emit_report(_evaluate(rec, ann, truth, tiny_registry), "csv")
    lines = text.splitlines()
    assert lines[0].startswith("code,kind,group,total,identified,spurious,")
    assert len(lines) == 5
    assert lines[1].startswith("L1,landmark,landmarks-femora,1,1,0,")


def test_unknown_report_format_rejected(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    with pytest.raises(ValidationError, match="format"):
        emit_report(_evaluate(rec, ann, truth, tiny_registry), "xml")


def test_markdown_rendering_matches_expected_layout(scored_scene, tiny_registry):
    rec, ann, truth = scored_scene
    text = emit_report(_evaluate(rec, ann, truth, tiny_registry), "markdown")
    expected = """# Evaluation report

Images evaluated: 1
Acceptability threshold: 3 mm

## Box accuracy (IoU between predicted and ground-truth boxes)

|        | LANDMARKS on femora | LANDMARKS on pelvis | PATCHES AND OUTLINES |
|--------|---|---|---|
| median | 1.00 | n/a | 1.00 |
| mean | 1.00 | n/a | 1.00 |
| st.dev | 0.00 | n/a | 0.00 |

## Identification

- Identified landmarks: 1/1 (100%)
- Identified patches and outlines: 2/2 (100%)

## Summary

- Median error (distance in mm) for identified landmarks: 0.00 mm
- Mean error for identified landmarks: 0.00 mm
- St.dev of error for identified landmarks: 0.00 mm
- Acceptable landmarks (< 3 mm): 100%
- Median IoU for identified patches and outlines: 1.00
- Mean IoU: 1.00
- St.dev of IoU: 0.00

## Per-class detail

| class | kind | group | total | identified | median err (mm) | mean err (mm) | median IoU | median box IoU |
|---|---|---|---|---|---|---|---|---|
| L1 | landmark | landmarks-femora | 1 | 1 | 0.00 | 0.00 | n/a | 1.00 |
| L2 | landmark | landmarks-pelvis | 0 | 0 | n/a | n/a | n/a | n/a |
| C1 | outline | patches-and-outlines | 1 | 1 | n/a | n/a | 1.00 | 1.00 |
| R1 | patch | patches-and-outlines | 1 | 1 | n/a | n/a | 1.00 | 1.00 |
"""
    assert text == expected
