"""Command line entry point.

One executable, one subcommand per pipeline stage, each stage's output
consumable by the next without manual edits:

    pelvimark synth --n 20 --seed 7 --data-root work
    pelvimark --data-root work labels
    pelvimark --data-root work predict --backend stub
    pelvimark --data-root work evaluate

Errors leave as JSON on stderr: {"error": <class>, "message": <text>}.
Exit codes: 0 success, 1 validation or configuration, 2 runtime,
3 backend failure.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Optional

import click

from pelvimark import __version__
from pelvimark.backends.base import BackendDescriptor, PROVIDES_BOTH
from pelvimark.backends.stub import StubBackend, StubCorruption, build_stub_truth
from pelvimark.config import RunConfig, load_run_config, merge_config
from pelvimark.core.records import Split
from pelvimark.core.registry import ClassRegistry, load_class_registry
from pelvimark.errors import (
    BackendError,
    ConfigurationError,
    IngestionError,
    PelvimarkError,
    ValidationError,
)
from pelvimark.evaluation.report import EvalConfig, emit_report, evaluate_predictions
from pelvimark.ingestion.annotations import load_annotations, save_annotations
from pelvimark.ingestion.dicom import load_dicom, save_dicom
from pelvimark.ingestion.normalize import normalize_image
from pelvimark.labelgen.bundles import LabelConfig, build_label_bundle, save_label_bundle
from pelvimark.labelgen.export import BOX_FORMAT, POLYGON_FORMAT, export_detection_labels
from pelvimark.labelgen.split import load_split_manifest, save_split_manifest, split_dataset
from pelvimark.pipeline import PipelineConfig, load_predictions, predictions_to_csv, run_batch, save_predictions
from pelvimark.synth import generate_synthetic_dataset

_pass_config = click.make_pass_decorator(RunConfig)


def _label_config(cfg: RunConfig) -> LabelConfig:
    return LabelConfig(
        landmark_radius_mm=cfg.landmark_radius_mm,
        outline_stroke_mm=cfg.outline_stroke_mm,
        assumed_spacing_mm=cfg.assumed_spacing_mm,
    )


def _registry(cfg: RunConfig) -> ClassRegistry:
    path = cfg.registry_file
    if not path.is_file():
        raise ConfigurationError(f"class registry not found: {path}")
    return load_class_registry(path)


def _image_ids(images_dir: Path):
    if not images_dir.is_dir():
        raise ConfigurationError(f"image directory not found: {images_dir}")
    return [p.stem for p in sorted(images_dir.glob("*.dcm"))]


def _load_records(images_dir: Path, jobs: int) -> Dict[str, "object"]:
    paths = sorted(images_dir.glob("*.dcm"))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        records = list(pool.map(load_dicom, paths))
    return {rec.image_id: rec for rec in records}


@click.group()
@click.version_option(__version__, prog_name="pelvimark")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON run config; flags override its values.")
@click.option("--data-root", type=click.Path(path_type=Path), default=None,
              help="Root holding registry.json, images/, annotations/ and outputs.")
@click.option("--registry", "registry_path", type=click.Path(path_type=Path), default=None,
              help="Class registry file (default: <data-root>/registry.json).")
@click.option("--output-root", type=click.Path(path_type=Path), default=None,
              help="Where outputs land (default: the data root).")
@click.option("--jobs", type=int, default=None, help="Worker threads for batch stages.")
@click.pass_context
def cli(ctx, config_path, **overrides):
    """Anatomical landmarking toolkit for pelvic radiographs."""
    base = load_run_config(config_path) if config_path is not None else RunConfig()
    ctx.obj = merge_config(base, overrides, origin="command line")


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of images to generate.")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Target directory (default: the data root).")
@_pass_config
def synth(cfg: RunConfig, n: int, seed: int, out_dir: Optional[Path]):
    """Generate schematic-pelvis DICOMs with full annotations."""
    if n <= 0:
        raise ConfigurationError(f"--n must be positive, got {n}")
    target = out_dir if out_dir is not None else cfg.data_root
    ids = generate_synthetic_dataset(target, n, seed)
    click.echo(f"wrote {len(ids)} synthetic images under {target}")


@cli.command()
@click.argument("dicom_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("annotations_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@_pass_config
def ingest(cfg: RunConfig, dicom_dir: Path, annotations_dir: Path):
    """Validate raw inputs and write them into the canonical store."""
    registry = _registry(cfg)
    images_out = cfg.out_root / "images"
    ann_out = cfg.out_root / "annotations"
    images_out.mkdir(parents=True, exist_ok=True)
    ann_out.mkdir(parents=True, exist_ok=True)

    report = {"images": [], "annotations": []}
    ok = 0
    for path in sorted(dicom_dir.glob("*.dcm")):
        try:
            rec = load_dicom(path)
            save_dicom(rec, images_out / f"{rec.image_id}.dcm")
            report["images"].append(
                {"file": path.name, "status": "ok", "image_id": rec.image_id,
                 "calibrated": rec.calibrated}
            )
            click.echo(f"OK        {path.name}")
            ok += 1
        except PelvimarkError as exc:
            report["images"].append({"file": path.name, "status": "rejected", "reason": str(exc)})
            click.echo(f"REJECTED  {path.name}: {exc}")
    for path in sorted(annotations_dir.glob("*.json")):
        try:
            ann, rejected = load_annotations(path, registry)
            save_annotations(ann, ann_out / f"{ann.image_id}.json", registry)
            entry = {"file": path.name, "status": "ok", "image_id": ann.image_id,
                     "rejected_features": [
                         {"code": r.code, "reason": r.reason} for r in rejected
                     ]}
            report["annotations"].append(entry)
            suffix = f" ({len(rejected)} feature(s) rejected)" if rejected else ""
            click.echo(f"OK        {path.name}{suffix}")
            ok += 1
        except PelvimarkError as exc:
            report["annotations"].append({"file": path.name, "status": "rejected", "reason": str(exc)})
            click.echo(f"REJECTED  {path.name}: {exc}")

    report_path = cfg.out_root / "ingest-report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8")
    click.echo(f"report written to {report_path}")
    if ok == 0:
        raise IngestionError(f"no valid inputs under {dicom_dir} / {annotations_dir}")


@cli.command()
@click.option("--counts", default="80,5,15", show_default=True,
              help="train,val,test image counts; must sum to the image total.")
@click.option("--seed", type=int, default=None, help="Shuffle seed (required).")
@_pass_config
def split(cfg: RunConfig, counts: str, seed: Optional[int]):
    """Assign images to train/val/test and write the split manifest."""
    if seed is None:
        seed = cfg.seed
    if seed is None:
        raise ConfigurationError("split is seeded; pass --seed (or set it in the config file)")
    try:
        parsed = tuple(int(c) for c in counts.split(","))
    except ValueError:
        raise ConfigurationError(f"--counts must be three comma-separated integers, got {counts!r}")
    if len(parsed) != 3:
        raise ConfigurationError(f"--counts must be three comma-separated integers, got {counts!r}")
    ids = _image_ids(cfg.data_root / "images")
    assignment = split_dataset(ids, parsed, seed)
    out_path = cfg.out_root / "split.txt"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_split_manifest(assignment, out_path, seed, parsed)
    click.echo(f"split manifest written to {out_path}")


@cli.command()
@click.option("--format", "fmt", type=click.Choice(["boxes", "polygons", "both"]),
              default="both", show_default=True)
@click.option("--input-side", type=int, default=None, help="Model canvas side in pixels.")
@click.option("--assumed-spacing-mm", type=float, default=None,
              help="Fallback isotropic spacing for uncalibrated images.")
@_pass_config
def labels(cfg: RunConfig, fmt: str, input_side: Optional[int], assumed_spacing_mm: Optional[float]):
    """Rasterize annotations into label bundles and exported label files."""
    cfg = merge_config(cfg, {"input_side": input_side, "assumed_spacing_mm": assumed_spacing_mm})
    registry = _registry(cfg)
    images_dir = cfg.data_root / "images"
    ann_dir = cfg.data_root / "annotations"
    if not ann_dir.is_dir():
        raise ConfigurationError(f"annotation directory not found: {ann_dir}")

    split_path = cfg.out_root / "split.txt"
    assignment = load_split_manifest(split_path)[0] if split_path.is_file() else {}

    bundles_dir = cfg.out_root / "bundles"
    bundles_dir.mkdir(parents=True, exist_ok=True)
    label_dirs = {}
    for name, wanted in (("boxes", fmt in ("boxes", "both")), ("polygons", fmt in ("polygons", "both"))):
        if wanted:
            d = cfg.out_root / "labels" / name
            d.mkdir(parents=True, exist_ok=True)
            label_dirs[name] = d

    label_config = _label_config(cfg)

    def one(image_id: str):
        rec = load_dicom(images_dir / f"{image_id}.dcm")
        ann, rejected = load_annotations(ann_dir / f"{image_id}.json", registry)
        norm = normalize_image(rec, cfg.input_side)
        bundle = build_label_bundle(
            ann, norm, rec.pixel_spacing, registry, label_config,
            split=assignment.get(image_id, Split.UNASSIGNED),
        )
        return bundle, rejected

    done = 0
    skipped = []
    ids = _image_ids(images_dir)
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = {}
        for image_id in ids:
            if not (ann_dir / f"{image_id}.json").is_file():
                skipped.append(image_id)
                continue
            futures[image_id] = pool.submit(one, image_id)
        for image_id in sorted(futures):
            bundle, rejected = futures[image_id].result()
            save_label_bundle(bundle, bundles_dir / f"{image_id}.json")
            if "boxes" in label_dirs:
                text = export_detection_labels(bundle, BOX_FORMAT)
                (label_dirs["boxes"] / f"{image_id}.txt").write_text(text, "utf-8")
            if "polygons" in label_dirs:
                text = export_detection_labels(bundle, POLYGON_FORMAT)
                (label_dirs["polygons"] / f"{image_id}.txt").write_text(text, "utf-8")
            for r in rejected:
                click.echo(f"note: {image_id}: feature {r.code} skipped: {r.reason}")
            done += 1

    msg = f"labelled {done} image(s)"
    if skipped:
        msg += f"; {len(skipped)} without annotations skipped"
    click.echo(msg)
    if done == 0:
        raise ConfigurationError(f"no image in {images_dir} has annotations in {ann_dir}")


@cli.command()
@click.option("--backend", "backend_name", type=click.Choice(["stub", "model"]), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Prediction directory (default: <output-root>/predictions).")
@click.option("--input-side", type=int, default=None)
@click.option("--confidence-threshold", type=float, default=None)
@click.option("--mask-threshold", type=float, default=None)
@click.option("--landmarks-via-segmentation", is_flag=True, default=False,
              help="Derive landmark points from mask centroids instead of box centers.")
@click.option("--seed", type=int, default=None, help="Stub corruption seed.")
@click.option("--drop", multiple=True, help="Class code the stub should fail to detect (repeatable).")
@click.option("--center-jitter-px", type=float, default=None,
              help="Stub box-center jitter sigma, model-frame pixels.")
@click.option("--scale-jitter", type=float, default=None, help="Stub lognormal box-scale sigma.")
@click.option("--morph-iterations", type=int, default=None,
              help="Stub mask morphology: >0 dilate, <0 erode.")
@click.option("--confidence-penalty", type=float, default=None,
              help="Stub confidence drop per active detection corruption.")
@click.option("--detector", "detector_model", type=click.Path(path_type=Path), default=None,
              help="TorchScript detector (model backend).")
@click.option("--segmenter", "segmenter_model", type=click.Path(path_type=Path), default=None,
              help="TorchScript segmenter (model backend).")
@_pass_config
def predict(cfg: RunConfig, backend_name: str, out_dir: Optional[Path], drop, **overrides):
    """Run detection + segmentation over the image store."""
    flat = {
        "input_side": overrides["input_side"],
        "confidence_threshold": overrides["confidence_threshold"],
        "mask_threshold": overrides["mask_threshold"],
        "seed": overrides["seed"],
        "stub_center_jitter_px": overrides["center_jitter_px"],
        "stub_scale_jitter": overrides["scale_jitter"],
        "stub_morph_iterations": overrides["morph_iterations"],
        "stub_confidence_penalty": overrides["confidence_penalty"],
        "detector_model": overrides["detector_model"],
        "segmenter_model": overrides["segmenter_model"],
    }
    if overrides["landmarks_via_segmentation"]:
        flat["landmarks_via_segmentation"] = True
    if drop:
        flat["stub_drop"] = tuple(drop)
    cfg = merge_config(cfg, flat)

    registry = _registry(cfg)
    records = _load_records(cfg.data_root / "images", cfg.jobs)
    if not records:
        raise ConfigurationError(f"no DICOM images under {cfg.data_root / 'images'}")

    backend = _build_backend(cfg, backend_name, registry, records)

    pipeline_config = PipelineConfig(
        confidence_threshold=cfg.confidence_threshold,
        mask_threshold=cfg.mask_threshold,
        landmarks_via_segmentation=cfg.landmarks_via_segmentation,
        workers=cfg.jobs,
    )
    results, failures = run_batch(list(records.values()), backend, registry, pipeline_config)

    target = out_dir if out_dir is not None else cfg.out_root / "predictions"
    target.mkdir(parents=True, exist_ok=True)
    for image_id, pred in results.items():
        save_predictions(pred, target / f"{image_id}.json", registry)
    (cfg.out_root / "predictions.csv").write_text(
        predictions_to_csv(list(results.values()), registry), "utf-8"
    )

    if failures:
        failures_path = cfg.out_root / "predict-failures.json"
        failures_path.write_text(json.dumps(failures, indent=2, sort_keys=True) + "\n", "utf-8")
        for image_id in sorted(failures):
            click.echo(f"failed: {image_id}: {failures[image_id]}", err=True)
        if not results:
            raise BackendError(f"all {len(failures)} images failed; see {failures_path}")
        click.echo(
            f"predicted {len(results)} image(s), {len(failures)} failed (see {failures_path})"
        )
    else:
        click.echo(f"predicted {len(results)} image(s) into {target}")


def _build_backend(cfg: RunConfig, backend_name: str, registry: ClassRegistry, records):
    if backend_name == "model":
        if cfg.detector_model is None or cfg.segmenter_model is None:
            raise ConfigurationError("model backend needs --detector and --segmenter paths")
        from pelvimark.backends.torchscript import load_model_backend

        descriptor = BackendDescriptor(
            name="torchscript", required_input_side=cfg.input_side, provides=PROVIDES_BOTH
        )
        return load_model_backend(cfg.detector_model, cfg.segmenter_model, descriptor)

    corruption = StubCorruption(
        drop_classes=frozenset(registry.by_code(c).class_id for c in cfg.stub_drop),
        center_jitter_px=cfg.stub_center_jitter_px,
        scale_jitter=cfg.stub_scale_jitter,
        morph_iterations=cfg.stub_morph_iterations,
        confidence_penalty=cfg.stub_confidence_penalty,
    )
    stochastic = corruption.center_jitter_px > 0 or corruption.scale_jitter > 0
    if stochastic and cfg.seed is None:
        raise ConfigurationError("stub jitter is stochastic; pass --seed")

    ann_dir = cfg.data_root / "annotations"
    if not ann_dir.is_dir():
        raise ConfigurationError(f"stub backend needs ground truth; {ann_dir} not found")
    label_config = _label_config(cfg)
    truth = {}
    for image_id, rec in records.items():
        ann_path = ann_dir / f"{image_id}.json"
        if not ann_path.is_file():
            raise ConfigurationError(f"stub backend: no annotations for image '{image_id}'")
        ann, _ = load_annotations(ann_path, registry)
        truth[image_id] = build_stub_truth(rec, ann, registry, cfg.input_side, label_config)
    return StubBackend(truth, corruption, seed=cfg.seed or 0, input_side=cfg.input_side)


@cli.command()
@click.argument("predictions_dir", type=click.Path(path_type=Path), required=False)
@click.argument("ground_truth", type=click.Path(path_type=Path), required=False)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Report directory (default: <output-root>/report).")
@click.option("--threshold-mm", type=float, default=None,
              help="Acceptability gate for landmark errors.")
@click.option("--input-side", type=int, default=None,
              help="Model canvas side the predictions were made at.")
@_pass_config
def evaluate(cfg: RunConfig, predictions_dir: Optional[Path], ground_truth: Optional[Path],
             out_dir: Optional[Path], threshold_mm: Optional[float], input_side: Optional[int]):
    """Score predictions against ground truth; writes json, csv and markdown."""
    cfg = merge_config(cfg, {"threshold_mm": threshold_mm, "input_side": input_side})
    preds_dir = predictions_dir if predictions_dir is not None else cfg.out_root / "predictions"
    gt_root = ground_truth if ground_truth is not None else cfg.data_root
    if not preds_dir.is_dir():
        raise ConfigurationError(f"prediction directory not found: {preds_dir}")

    registry_path = gt_root / "registry.json"
    registry = load_class_registry(registry_path) if registry_path.is_file() else _registry(cfg)

    preds = {}
    for path in sorted(preds_dir.glob("*.json")):
        pred = load_predictions(path)
        preds[pred.image_id] = pred
    if not preds:
        raise ConfigurationError(f"no prediction files under {preds_dir}")

    records = _load_records(gt_root / "images", cfg.jobs)
    annotations = {}
    ann_dir = gt_root / "annotations"
    if ann_dir.is_dir():
        for path in sorted(ann_dir.glob("*.json")):
            ann, _ = load_annotations(path, registry)
            annotations[ann.image_id] = ann

    eval_config = EvalConfig(
        threshold_mm=cfg.threshold_mm,
        target_side=cfg.input_side,
        label_config=_label_config(cfg),
    )
    report = evaluate_predictions(preds, annotations, records, registry, eval_config)

    target = out_dir if out_dir is not None else cfg.out_root / "report"
    target.mkdir(parents=True, exist_ok=True)
    for fmt, name in (("json", "report.json"), ("csv", "report.csv"), ("markdown", "report.md")):
        (target / name).write_text(emit_report(report, fmt), "utf-8")
    click.echo(emit_report(report, "markdown"), nl=False)
    click.echo(f"\nreports written to {target}")


@cli.command()
@click.option("--port", type=int, default=None)
@click.option("--host", default=None)
@click.option("--service-config", type=click.Path(path_type=Path), default=None,
              help="Service JSON config; PELVIMARK_* env vars override its keys.")
def serve(port: Optional[int], host: Optional[str], service_config: Optional[Path]):
    """Start the curation review service."""
    from pelvimark.review.service import load_service_config, run_service

    config = load_service_config(service_config)
    replacements = {}
    if port is not None:
        replacements["port"] = port
    if host is not None:
        replacements["host"] = host
    if replacements:
        config = dataclasses.replace(config, **replacements)
    run_service(config)


def _exit_code(exc: PelvimarkError) -> int:
    if isinstance(exc, (ConfigurationError, ValidationError, IngestionError)):
        return 1
    if isinstance(exc, BackendError):
        return 3
    return 2


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return 130
    except click.ClickException as exc:
        return _fail("usage", exc.format_message(), 1)
    except PelvimarkError as exc:
        return _fail(type(exc).__name__, str(exc), _exit_code(exc))
    except Exception as exc:  # noqa: BLE001 - last-ditch conversion to the JSON contract
        return _fail("internal", f"{type(exc).__name__}: {exc}", 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
