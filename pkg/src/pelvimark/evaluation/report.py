"""Build and render the evaluation report.

The report keeps every raw per-class value list alongside the printed
aggregates, so any consumer can recompute the numbers from the
document itself; :func:`verify_report_dict` does exactly that.

Group partition: landmark classes split by their registry ``group``
("femora" / "pelvis"); all outline and patch classes form the third
group. A landmark class with any other group value breaks the
partition and is rejected up front.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from pelvimark.backends.stub import build_stub_truth
from pelvimark.core.geometry import Frame, Spacing
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, FeatureClass, FeatureKind
from pelvimark.errors import ValidationError
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
from pelvimark.ingestion.annotations import AnnotationSet
from pelvimark.labelgen.bundles import LabelConfig, model_spacing as _model_spacing
from pelvimark.labelgen.rasterize import rasterize_outline, rasterize_patch
from pelvimark.pipeline import PredictionSet

REPORT_SCHEMA_VERSION = 1

GROUP_FEMORA = "landmarks-femora"
GROUP_PELVIS = "landmarks-pelvis"
GROUP_MASKS = "patches-and-outlines"
GROUP_ORDER = (GROUP_FEMORA, GROUP_PELVIS, GROUP_MASKS)
GROUP_TITLES = {
    GROUP_FEMORA: "LANDMARKS on femora",
    GROUP_PELVIS: "LANDMARKS on pelvis",
    GROUP_MASKS: "PATCHES AND OUTLINES",
}


@dataclass(frozen=True)
class EvalConfig:
    """``target_side`` must match the side the predictions were made at,
    since ground-truth boxes are rebuilt in that model frame."""

    threshold_mm: float = 3.0
    target_side: int = 512
    label_config: LabelConfig = field(default_factory=LabelConfig)


@dataclass
class ClassStats:
    class_id: int
    code: str
    kind: str
    group: str
    total: int = 0
    identified: int = 0
    spurious: int = 0
    errors_mm: List[float] = field(default_factory=list)
    errors_px: List[float] = field(default_factory=list)
    ious: List[float] = field(default_factory=list)
    box_ious: List[float] = field(default_factory=list)
    both_empty: int = 0


def group_of(fc: FeatureClass) -> str:
    if fc.kind in (FeatureKind.OUTLINE, FeatureKind.PATCH):
        return GROUP_MASKS
    if fc.group == "femora":
        return GROUP_FEMORA
    if fc.group == "pelvis":
        return GROUP_PELVIS
    raise ValidationError(
        f"landmark class '{fc.code}' has group {fc.group!r}; expected 'femora' or 'pelvis' "
        "so the report groups partition the classes"
    )


@dataclass
class EvalReport:
    threshold_mm: float
    classes: Dict[int, ClassStats]
    n_images: int = 0
    uncalibrated_images: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    def _stats_in(self, group: str) -> List[ClassStats]:
        return [self.classes[cid] for cid in sorted(self.classes) if self.classes[cid].group == group]

    def group_values(self, group: str, attr: str) -> List[float]:
        out: List[float] = []
        for cs in self._stats_in(group):
            out.extend(getattr(cs, attr))
        return out

    def kind_counts(self, *kinds: str) -> Dict[str, int]:
        total = identified = 0
        for cs in self.classes.values():
            if cs.kind in kinds:
                total += cs.total
                identified += cs.identified
        return {"identified": identified, "total": total}

    def landmark_errors_mm(self) -> List[float]:
        return self.group_values(GROUP_FEMORA, "errors_mm") + self.group_values(
            GROUP_PELVIS, "errors_mm"
        )

    def mask_ious(self) -> List[float]:
        return self.group_values(GROUP_MASKS, "ious")

    def to_dict(self) -> dict:
        groups = {}
        for g in GROUP_ORDER:
            groups[g] = {
                "box_iou": _agg_dict(aggregate(self.group_values(g, "box_ious"))),
                "errors_mm": _agg_dict(aggregate(self.group_values(g, "errors_mm"))),
                "iou": _agg_dict(aggregate(self.group_values(g, "ious"))),
            }
        lm = self.kind_counts("landmark")
        mk = self.kind_counts("outline", "patch")
        errors = self.landmark_errors_mm()
        summary = {
            "landmark_error_mm": _agg_dict(aggregate(errors)),
            "landmark_error_px": _agg_dict(aggregate(self.group_values(GROUP_FEMORA, "errors_px")
                                                     + self.group_values(GROUP_PELVIS, "errors_px"))),
            "mask_iou": _agg_dict(aggregate(self.mask_ious())),
            "acceptability": acceptability(errors, self.threshold_mm),
            "rates": {
                "landmarks": {**lm, "rate": detection_rate(**lm) if lm["total"] else None},
                "patches_and_outlines": {**mk, "rate": detection_rate(**mk) if mk["total"] else None},
            },
        }
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "threshold_mm": self.threshold_mm,
            "n_images": self.n_images,
            "uncalibrated_images": sorted(self.uncalibrated_images),
            "skipped": sorted(self.skipped),
            "classes": [
                {
                    "class_id": cs.class_id,
                    "code": cs.code,
                    "kind": cs.kind,
                    "group": cs.group,
                    "total": cs.total,
                    "identified": cs.identified,
                    "spurious": cs.spurious,
                    "errors_mm": cs.errors_mm,
                    "errors_px": cs.errors_px,
                    "ious": cs.ious,
                    "box_ious": cs.box_ious,
                    "both_empty": cs.both_empty,
                }
                for cid, cs in sorted(self.classes.items())
            ],
            "groups": groups,
            "summary": summary,
        }


def _agg_dict(agg: Optional[Aggregate]) -> Optional[dict]:
    if agg is None:
        return None
    return {"median": agg.median, "mean": agg.mean, "std": agg.std}


def report_from_dict(doc: dict) -> EvalReport:
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValidationError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    classes: Dict[int, ClassStats] = {}
    for entry in doc["classes"]:
        cs = ClassStats(
            class_id=entry["class_id"],
            code=entry["code"],
            kind=entry["kind"],
            group=entry["group"],
            total=entry["total"],
            identified=entry["identified"],
            spurious=entry.get("spurious", 0),
            errors_mm=list(entry["errors_mm"]),
            errors_px=list(entry.get("errors_px", [])),
            ious=list(entry["ious"]),
            box_ious=list(entry.get("box_ious", [])),
            both_empty=entry.get("both_empty", 0),
        )
        classes[cs.class_id] = cs
    return EvalReport(
        threshold_mm=doc["threshold_mm"],
        classes=classes,
        n_images=doc.get("n_images", 0),
        uncalibrated_images=list(doc.get("uncalibrated_images", [])),
        skipped=list(doc.get("skipped", [])),
    )


def verify_report_dict(doc: dict, tolerance: float = 1e-12) -> bool:
    """Recompute every aggregate from the stored per-class lists."""
    rebuilt = report_from_dict(doc).to_dict()

    def close(a, b) -> bool:
        if isinstance(a, dict) and isinstance(b, dict):
            return a.keys() == b.keys() and all(close(a[k], b[k]) for k in a)
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            return abs(float(a) - float(b)) <= tolerance * max(1.0, abs(float(a)))
        return a == b

    return close(doc["groups"], rebuilt["groups"]) and close(doc["summary"], rebuilt["summary"])


def evaluate_predictions(
    preds: Dict[str, PredictionSet],
    annotations: Dict[str, AnnotationSet],
    records: Dict[str, ImageRecord],
    registry: ClassRegistry,
    config: Optional[EvalConfig] = None,
) -> EvalReport:
    """Score predictions image by image against ground truth.

    Missed classes contribute to detection rate only; error and IoU
    lists hold identified classes exclusively. Masks are compared in
    the original frame; boxes in the model frame at ``target_side``.
    """
    config = config or EvalConfig()
    classes = {
        fc.class_id: ClassStats(fc.class_id, fc.code, fc.kind.value, group_of(fc))
        for fc in registry
    }
    report = EvalReport(threshold_mm=config.threshold_mm, classes=classes)

    for image_id in sorted(preds):
        pred = preds[image_id]
        ann = annotations.get(image_id)
        rec = records.get(image_id)
        if ann is None or rec is None:
            report.skipped.append(image_id)
            continue
        report.n_images += 1
        spacing = rec.pixel_spacing
        if spacing is None:
            report.uncalibrated_images.append(image_id)

        # Millimetre-sized ground truth (boxes, outline strokes) needs some
        # spacing; without any, those comparisons are skipped, not faked.
        can_rasterize_mm = (
            spacing is not None or config.label_config.assumed_spacing_mm is not None
        )
        truth = (
            build_stub_truth(rec, ann, registry, config.target_side, config.label_config)
            if can_rasterize_mm
            else None
        )

        for cid, gt_point in ann.landmarks.items():
            cs = classes[cid]
            cs.total += 1
            lp = pred.landmarks.get(cid)
            if lp is None:
                continue
            cs.identified += 1
            if spacing is not None:
                cs.errors_mm.append(point_error_mm(lp.point, gt_point, spacing))
            else:
                cs.errors_px.append(point_error_px(lp.point, gt_point))

        gt_spacing = spacing
        if gt_spacing is None and config.label_config.assumed_spacing_mm is not None:
            a = config.label_config.assumed_spacing_mm
            gt_spacing = Spacing(a, a)
        canvas = (rec.width, rec.height)
        for cid, pts in {**ann.outlines, **ann.patches}.items():
            cs = classes[cid]
            cs.total += 1
            mp = pred.masks.get(cid)
            if mp is None:
                continue
            cs.identified += 1
            fc = registry.by_id(cid)
            if fc.kind == FeatureKind.OUTLINE:
                if gt_spacing is None:
                    continue  # stroke width is metric; no spacing, no honest IoU
                gt_mask = rasterize_outline(
                    list(pts),
                    config.label_config.stroke_for(fc.code),
                    gt_spacing,
                    canvas,
                    frame=Frame.ORIGINAL,
                    label=fc.code,
                )
            else:
                gt_mask = rasterize_patch(list(pts), canvas, frame=Frame.ORIGINAL, label=fc.code)
            if mp.mask.empty and gt_mask.empty:
                cs.both_empty += 1
            cs.ious.append(iou(mp.mask, gt_mask))

        if truth is not None:
            for cid, gt_box in truth.boxes.items():
                if cid in pred.boxes:
                    classes[cid].box_ious.append(box_iou(pred.boxes[cid], gt_box))

        annotated = set(ann.landmarks) | set(ann.outlines) | set(ann.patches)
        for cid in (set(pred.landmarks) | set(pred.masks)) - annotated:
            classes[cid].spurious += 1

    return report


def emit_report(report: EvalReport, format: str) -> str:
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        return _emit_csv(report)
    if format == "markdown":
        return _emit_markdown(report)
    raise ValidationError(f"unknown report format {format!r}")


def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def _agg_cells(agg: Optional[Aggregate]):
    if agg is None:
        return "n/a", "n/a", "n/a"
    return f"{agg.median:.2f}", f"{agg.mean:.2f}", f"{agg.std:.2f}"


def _emit_csv(report: EvalReport) -> str:
    lines = [
        "code,kind,group,total,identified,spurious,"
        "median_error_mm,mean_error_mm,std_error_mm,"
        "median_iou,mean_iou,std_iou,median_box_iou,mean_box_iou,std_box_iou"
    ]
    for cid in sorted(report.classes):
        cs = report.classes[cid]
        err = aggregate(cs.errors_mm)
        msk = aggregate(cs.ious)
        box = aggregate(cs.box_ious)
        cells = [cs.code, cs.kind, cs.group, str(cs.total), str(cs.identified), str(cs.spurious)]
        for agg in (err, msk, box):
            cells.extend(_agg_cells(agg) if agg else ("", "", ""))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _emit_markdown(report: EvalReport) -> str:
    doc = report.to_dict()
    out: List[str] = []
    out.append("# Evaluation report")
    out.append("")
    out.append(f"Images evaluated: {report.n_images}")
    out.append(f"Acceptability threshold: {report.threshold_mm:g} mm")
    if report.uncalibrated_images:
        out.append(
            f"Uncalibrated images (errors in px, excluded from mm aggregates): "
            f"{', '.join(sorted(report.uncalibrated_images))}"
        )
    if report.skipped:
        out.append(f"Skipped (no ground truth): {', '.join(sorted(report.skipped))}")
    out.append("")

    out.append("## Box accuracy (IoU between predicted and ground-truth boxes)")
    out.append("")
    header = "|        | " + " | ".join(GROUP_TITLES[g] for g in GROUP_ORDER) + " |"
    out.append(header)
    out.append("|--------|" + "|".join("---" for _ in GROUP_ORDER) + "|")
    rows = {"median": [], "mean": [], "st.dev": []}
    for g in GROUP_ORDER:
        med, mean, std = _agg_cells(aggregate(report.group_values(g, "box_ious")))
        rows["median"].append(med)
        rows["mean"].append(mean)
        rows["st.dev"].append(std)
    for name in ("median", "mean", "st.dev"):
        out.append(f"| {name} | " + " | ".join(rows[name]) + " |")
    out.append("")

    out.append("## Identification")
    out.append("")
    for label, key in (
        ("landmarks", "landmarks"),
        ("patches and outlines", "patches_and_outlines"),
    ):
        entry = doc["summary"]["rates"][key]
        if entry["total"]:
            pct = f"{100 * entry['rate']:.0f}%"
            out.append(f"- Identified {label}: {entry['identified']}/{entry['total']} ({pct})")
        else:
            out.append(f"- Identified {label}: none annotated")
    out.append("")

    out.append("## Summary")
    out.append("")
    err = aggregate(report.landmark_errors_mm())
    if err is not None:
        out.append(f"- Median error (distance in mm) for identified landmarks: {err.median:.2f} mm")
        out.append(f"- Mean error for identified landmarks: {err.mean:.2f} mm")
        out.append(f"- St.dev of error for identified landmarks: {err.std:.2f} mm")
    else:
        out.append("- No calibrated landmark errors available")
    acc = doc["summary"]["acceptability"]
    if acc is not None:
        out.append(f"- Acceptable landmarks (< {report.threshold_mm:g} mm): {100 * acc:.0f}%")
    msk = aggregate(report.mask_ious())
    if msk is not None:
        out.append(f"- Median IoU for identified patches and outlines: {msk.median:.2f}")
        out.append(f"- Mean IoU: {msk.mean:.2f}")
        out.append(f"- St.dev of IoU: {msk.std:.2f}")
    else:
        out.append("- No mask IoU values available")
    out.append("")

    out.append("## Per-class detail")
    out.append("")
    out.append(
        "| class | kind | group | total | identified | median err (mm) | mean err (mm) "
        "| median IoU | median box IoU |"
    )
    out.append("|---|---|---|---|---|---|---|---|---|")
    for cid in sorted(report.classes):
        cs = report.classes[cid]
        err_a = aggregate(cs.errors_mm)
        iou_a = aggregate(cs.ious)
        box_a = aggregate(cs.box_ious)
        out.append(
            f"| {cs.code} | {cs.kind} | {cs.group} | {cs.total} | {cs.identified} "
            f"| {_fmt(err_a.median if err_a else None)} | {_fmt(err_a.mean if err_a else None)} "
            f"| {_fmt(iou_a.median if iou_a else None)} | {_fmt(box_a.median if box_a else None)} |"
        )
    out.append("")
    return "\n".join(out)
