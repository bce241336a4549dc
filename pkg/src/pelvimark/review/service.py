"""HTTP review service: images and predictions out, corrections in.

All endpoints live under /api. Authentication is a static
``X-Api-Token`` header, enabled by configuring a token; without one
the service is open (local use). Configuration comes from a JSON file
with PELVIMARK_* environment overrides.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from fastapi import Body, Depends, FastAPI, HTTPException, Query, Request, Response
from PIL import Image

from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, load_class_registry
from pelvimark.errors import (
    ConfigurationError,
    CurationIncompleteError,
    StaleRevisionError,
    ValidationError,
)
from pelvimark.ingestion.dicom import load_dicom
from pelvimark.labelgen.bundles import LabelConfig
from pelvimark.review.export import export_training_pool
from pelvimark.review.store import ReviewStore

log = logging.getLogger(__name__)

_ENV_PREFIX = "PELVIMARK_"


@dataclass
class ServiceConfig:
    data_root: Path
    store_root: Path
    registry_path: Path
    pool_dir: Path
    predictions_dir: Optional[Path] = None
    api_token: str = ""
    target_side: int = 512
    host: str = "127.0.0.1"
    port: int = 8000
    label_config: LabelConfig = field(default_factory=LabelConfig)


_CONFIG_KEYS = {
    "data_root": Path,
    "store_root": Path,
    "registry_path": Path,
    "pool_dir": Path,
    "predictions_dir": Path,
    "api_token": str,
    "target_side": int,
    "host": str,
    "port": int,
}


def load_service_config(path=None, env: Optional[Dict[str, str]] = None) -> ServiceConfig:
    """Config file first, then PELVIMARK_<KEY> environment overrides."""
    env = os.environ if env is None else env
    values: Dict[str, object] = {}
    if path is not None:
        doc = json.loads(Path(path).read_text("utf-8"))
        for key in _CONFIG_KEYS:
            if key in doc:
                values[key] = doc[key]
    for key, cast in _CONFIG_KEYS.items():
        env_key = _ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = env[env_key]
    missing = [k for k in ("data_root", "store_root", "registry_path", "pool_dir") if k not in values]
    if missing:
        raise ConfigurationError(f"service config missing required keys: {', '.join(missing)}")
    for key, cast in _CONFIG_KEYS.items():
        if key in values:
            values[key] = cast(values[key])
    return ServiceConfig(**values)  # type: ignore[arg-type]


def _render_png(rec: ImageRecord) -> bytes:
    if rec.window is not None:
        center, width = rec.window
        lo, hi = center - width / 2.0, center + width / 2.0
    else:
        lo, hi = float(rec.pixels.min()), float(rec.pixels.max())
    if hi <= lo:
        gray = np.zeros(rec.pixels.shape, dtype=np.uint8)
    else:
        gray = np.round(
            np.clip((rec.pixels.astype(np.float64) - lo) * (255.0 / (hi - lo)), 0.0, 255.0)
        ).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def create_app(config: ServiceConfig) -> FastAPI:
    registry = load_class_registry(config.registry_path)
    store = ReviewStore(config.store_root, registry)

    records: Dict[str, ImageRecord] = {}
    data_root = Path(config.data_root)
    # accept the pipeline's data-root layout (images/ subdirectory) or a flat
    # directory of DICOMs
    images_dir = data_root / "images" if (data_root / "images").is_dir() else data_root
    if images_dir.is_dir():
        for path in sorted(images_dir.glob("*.dcm")):
            try:
                rec = load_dicom(path)
                records[rec.image_id] = rec
            except Exception as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)

    predictions_dir = config.predictions_dir
    if predictions_dir is None and (data_root / "predictions").is_dir():
        predictions_dir = data_root / "predictions"
    if predictions_dir is not None and Path(predictions_dir).is_dir():
        for path in sorted(Path(predictions_dir).glob("*.json")):
            try:
                doc = json.loads(path.read_text("utf-8"))
                store.seed_prediction(doc["image_id"], doc)
            except Exception as exc:
                log.warning("skipping unreadable prediction %s: %s", path, exc)

    app = FastAPI(title="review service", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.registry = registry
    app.state.records = records
    app.state.config = config

    def require_token(request: Request) -> None:
        if config.api_token and request.headers.get("X-Api-Token") != config.api_token:
            raise HTTPException(401, {"error": "unauthorized"})

    auth = Depends(require_token)

    def get_state(image_id: str):
        try:
            return store.get(image_id)
        except KeyError:
            raise HTTPException(404, {"error": "unknown_image", "image_id": image_id}) from None

    @app.get("/api/images", dependencies=[auth])
    def list_images(page: int = Query(1, ge=1), page_size: int = Query(50, ge=1, le=500)):
        rows = store.list_records()
        start = (page - 1) * page_size
        return {
            "images": rows[start : start + page_size],
            "total": len(rows),
            "page": page,
            "page_size": page_size,
        }

    @app.get("/api/registry", dependencies=[auth])
    def get_registry():
        return {
            "classes": [
                {"class_id": fc.class_id, "code": fc.code, "kind": fc.kind.value,
                 "side": fc.side.value, "group": fc.group}
                for fc in registry
            ]
        }

    @app.get("/api/images/{image_id}/render", dependencies=[auth])
    def render(image_id: str, frame: str = Query("original")):
        if frame != "original":
            raise HTTPException(422, {"error": "unsupported_frame", "frame": frame})
        rec = records.get(image_id)
        if rec is None:
            raise HTTPException(404, {"error": "unknown_image", "image_id": image_id})
        return Response(content=_render_png(rec), media_type="image/png")

    @app.get("/api/images/{image_id}/predictions", dependencies=[auth])
    def predictions(image_id: str):
        return get_state(image_id).prediction

    @app.get("/api/images/{image_id}/record", dependencies=[auth])
    def record(image_id: str):
        return get_state(image_id).to_dict()

    @app.post("/api/images/{image_id}/corrections", dependencies=[auth])
    def corrections(image_id: str, payload: dict = Body(...)):
        get_state(image_id)
        base_revision = payload.get("base_revision")
        corr = payload.get("corrections")
        if not isinstance(base_revision, int) or not isinstance(corr, dict) or not corr:
            raise HTTPException(
                422,
                {"error": "invalid_request",
                 "reasons": ["body needs integer base_revision and a non-empty corrections object"]},
            )
        try:
            revision = store.apply_corrections(
                image_id, corr, base_revision, str(payload.get("reviewer", ""))
            )
        except StaleRevisionError as exc:
            raise HTTPException(
                409, {"error": "stale_revision", "current_revision": exc.current_revision}
            ) from None
        except ValidationError as exc:
            raise HTTPException(
                422, {"error": "invalid_corrections", "reasons": str(exc).split("; ")}
            ) from None
        return {"image_id": image_id, "revision": revision}

    @app.post("/api/images/{image_id}/finalize", dependencies=[auth])
    def finalize(image_id: str, payload: dict = Body(...)):
        get_state(image_id)
        base_revision = payload.get("base_revision")
        if not isinstance(base_revision, int):
            raise HTTPException(
                422, {"error": "invalid_request", "reasons": ["body needs integer base_revision"]}
            )
        try:
            revision = store.finalize(image_id, base_revision, str(payload.get("reviewer", "")))
        except StaleRevisionError as exc:
            raise HTTPException(
                409, {"error": "stale_revision", "current_revision": exc.current_revision}
            ) from None
        except CurationIncompleteError as exc:
            raise HTTPException(
                422, {"error": "curation_incomplete", "unresolved": exc.unresolved}
            ) from None
        return {"image_id": image_id, "revision": revision, "status": "curated"}

    @app.post("/api/export/training-pool", dependencies=[auth])
    def export_pool():
        manifest = export_training_pool(
            store,
            config.pool_dir,
            records,
            registry,
            label_config=config.label_config,
            target_side=config.target_side,
        )
        return manifest

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
