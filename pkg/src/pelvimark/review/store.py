"""Append-only on-disk store for review state.

Layout: one directory per image, numbered revision files::

    <root>/records/<image_id>/rev-0001.json
    <root>/records/<image_id>/rev-0002.json
    <root>/index.json            (derived; rebuilt by rescan)

Every revision file carries the full merged state alongside the delta
that produced it, so recovery is "read the newest parseable revision".
Files are written to a temp name and renamed, and the index is only a
cache: a crash at any point leaves the store recoverable by rescan().

Concurrency: writes are serialized per image; a submitted delta names
the revision it was based on and is rejected as stale when that is no
longer current. Resubmitting the exact delta that already produced the
current revision is answered with that revision (idempotent replay),
so a retried request after a lost response does not fail.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from pelvimark.core.registry import ClassRegistry, FeatureKind
from pelvimark.errors import (
    CurationIncompleteError,
    StaleRevisionError,
    StoreError,
    ValidationError,
)

STORE_SCHEMA_VERSION = 1

STATUS_PENDING = "pending"
STATUS_IN_REVIEW = "in_review"
STATUS_CURATED = "curated"

CORRECTION_TYPES = ("accepted", "moved", "mask_replaced", "marked_missing", "added")


@dataclass
class StoredState:
    """Current merged state of one image's review."""

    image_id: str
    revision: int
    status: str
    prediction: dict
    corrections: Dict[str, dict] = field(default_factory=dict)  # keyed by class code
    reviewer: str = ""

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "revision": self.revision,
            "status": self.status,
            "prediction": self.prediction,
            "corrections": {k: self.corrections[k] for k in sorted(self.corrections)},
            "reviewer": self.reviewer,
        }


def _validate_point(value, where: str, reasons: List[str]) -> None:
    ok = (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value)
    )
    if not ok:
        reasons.append(f"{where}: expected [x, y] numbers")


def validate_correction(code: str, corr: dict, registry: ClassRegistry) -> List[str]:
    """Returns per-field reasons; empty means valid."""
    reasons: List[str] = []
    if code not in registry:
        return [f"{code}: unknown class code"]
    fc = registry.by_code(code)
    ctype = corr.get("type")
    if ctype not in CORRECTION_TYPES:
        return [f"{code}.type: expected one of {CORRECTION_TYPES}, got {ctype!r}"]

    if ctype == "moved":
        if fc.kind != FeatureKind.LANDMARK:
            reasons.append(f"{code}: 'moved' applies to landmarks, class kind is {fc.kind.value}")
        _validate_point(corr.get("point"), f"{code}.point", reasons)
    elif ctype == "mask_replaced":
        if fc.kind == FeatureKind.LANDMARK:
            reasons.append(f"{code}: 'mask_replaced' does not apply to landmarks")
        runs = corr.get("runs")
        if (
            not isinstance(corr.get("width"), int)
            or not isinstance(corr.get("height"), int)
            or not isinstance(runs, list)
            or not all(isinstance(r, int) and r >= 0 for r in runs)
        ):
            reasons.append(f"{code}: 'mask_replaced' needs integer width, height and runs")
    elif ctype == "added":
        geom = corr.get("geometry")
        if not isinstance(geom, dict):
            return reasons + [f"{code}.geometry: missing"]
        gkind = geom.get("kind")
        if gkind != fc.kind.value:
            reasons.append(f"{code}.geometry.kind: {gkind!r} does not match class kind {fc.kind.value}")
        if fc.kind == FeatureKind.LANDMARK:
            _validate_point(geom.get("point"), f"{code}.geometry.point", reasons)
        else:
            pts = geom.get("points")
            minimum = 2 if fc.kind == FeatureKind.OUTLINE else 3
            if not isinstance(pts, list) or len(pts) < minimum:
                reasons.append(f"{code}.geometry.points: need at least {minimum} points")
            else:
                for i, p in enumerate(pts):
                    _validate_point(p, f"{code}.geometry.points[{i}]", reasons)
    return reasons


class ReviewStore:
    def __init__(self, root, registry: ClassRegistry):
        self.root = Path(root)
        self.registry = registry
        self._records_dir = self.root / "records"
        self._records_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._image_locks: Dict[str, threading.Lock] = {}
        self._states: Dict[str, StoredState] = {}
        self.rescan()

    # -- recovery ---------------------------------------------------------

    def rescan(self) -> None:
        """Rebuild in-memory state and the index from revision files."""
        states: Dict[str, StoredState] = {}
        for image_dir in sorted(self._records_dir.iterdir() if self._records_dir.exists() else []):
            if not image_dir.is_dir():
                continue
            state = self._recover_image(image_dir)
            if state is not None:
                states[state.image_id] = state
        with self._lock:
            self._states = states
        self._write_index()

    def _recover_image(self, image_dir: Path) -> Optional[StoredState]:
        for rev_file in sorted(image_dir.glob("rev-*.json"), reverse=True):
            try:
                doc = json.loads(rev_file.read_text("utf-8"))
                state = doc["state"]
                return StoredState(
                    image_id=state["image_id"],
                    revision=doc["revision"],
                    status=state["status"],
                    prediction=state["prediction"],
                    corrections=dict(state.get("corrections", {})),
                    reviewer=state.get("reviewer", ""),
                )
            except (OSError, ValueError, KeyError):
                continue  # torn write; fall back to the previous revision
        return None

    def _write_index(self) -> None:
        index = {
            "schema_version": STORE_SCHEMA_VERSION,
            "images": {
                image_id: {"revision": s.revision, "status": s.status}
                for image_id, s in sorted(self._states.items())
            },
        }
        self._atomic_write(self.root / "index.json", json.dumps(index, indent=2) + "\n")

    @staticmethod
    def _atomic_write(path: Path, text: str) -> None:
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(text, "utf-8")
            tmp.replace(path)
        except OSError as exc:
            raise StoreError(f"cannot write {path}: {exc}") from exc

    # -- reads ------------------------------------------------------------

    def list_records(self) -> List[dict]:
        with self._lock:
            return [
                {"image_id": s.image_id, "status": s.status, "revision": s.revision}
                for _, s in sorted(self._states.items())
            ]

    def get(self, image_id: str) -> StoredState:
        with self._lock:
            state = self._states.get(image_id)
        if state is None:
            raise KeyError(image_id)
        return state

    def curated_states(self) -> List[StoredState]:
        with self._lock:
            return [s for _, s in sorted(self._states.items()) if s.status == STATUS_CURATED]

    # -- writes -----------------------------------------------------------

    def _lock_for(self, image_id: str) -> threading.Lock:
        with self._lock:
            return self._image_locks.setdefault(image_id, threading.Lock())

    def seed_prediction(self, image_id: str, prediction: dict) -> int:
        """Idempotent initial revision; an already-seeded image is untouched."""
        with self._lock_for(image_id):
            with self._lock:
                existing = self._states.get(image_id)
            if existing is not None:
                return existing.revision
            state = StoredState(
                image_id=image_id,
                revision=1,
                status=STATUS_PENDING,
                prediction=prediction,
            )
            self._append_revision(state, base_revision=0, delta={"seeded": True}, reviewer="")
            return state.revision

    def apply_corrections(
        self, image_id: str, corrections: Dict[str, dict], base_revision: int, reviewer: str
    ) -> int:
        reasons: List[str] = []
        for code in sorted(corrections):
            reasons.extend(validate_correction(code, corrections[code], self.registry))
        if reasons:
            raise ValidationError("; ".join(reasons))

        delta = {"corrections": {k: corrections[k] for k in sorted(corrections)}}
        with self._lock_for(image_id):
            state = self.get(image_id)
            replay = self._check_revision(image_id, state, base_revision, delta)
            if replay is not None:
                return replay
            new = StoredState(
                image_id=image_id,
                revision=state.revision + 1,
                status=STATUS_IN_REVIEW if state.status != STATUS_CURATED else STATUS_CURATED,
                prediction=state.prediction,
                corrections={**state.corrections, **delta["corrections"]},
                reviewer=reviewer,
            )
            self._append_revision(new, base_revision, delta, reviewer)
            return new.revision

    def finalize(self, image_id: str, base_revision: int, reviewer: str) -> int:
        delta = {"finalize": True}
        with self._lock_for(image_id):
            state = self.get(image_id)
            replay = self._check_revision(image_id, state, base_revision, delta)
            if replay is not None:
                return replay
            unresolved = self.unresolved_classes(state)
            if unresolved:
                raise CurationIncompleteError(
                    f"{image_id}: {len(unresolved)} classes unresolved", unresolved
                )
            new = StoredState(
                image_id=image_id,
                revision=state.revision + 1,
                status=STATUS_CURATED,
                prediction=state.prediction,
                corrections=dict(state.corrections),
                reviewer=reviewer,
            )
            self._append_revision(new, base_revision, delta, reviewer)
            return new.revision

    def unresolved_classes(self, state: StoredState) -> List[str]:
        """Registry classes with no explicit disposition yet."""
        return sorted(fc.code for fc in self.registry if fc.code not in state.corrections)

    def _check_revision(
        self, image_id: str, state: StoredState, base_revision: int, delta: dict
    ) -> Optional[int]:
        if base_revision == state.revision:
            return None
        # replay of the write that produced the current revision?
        if base_revision == state.revision - 1:
            stored = self._read_revision(image_id, state.revision)
            if stored is not None and stored.get("delta") == delta:
                return state.revision
        raise StaleRevisionError(
            f"{image_id}: base revision {base_revision} is stale", state.revision
        )

    def _read_revision(self, image_id: str, revision: int) -> Optional[dict]:
        path = self._records_dir / image_id / f"rev-{revision:04d}.json"
        try:
            return json.loads(path.read_text("utf-8"))
        except (OSError, ValueError):
            return None

    def _append_revision(
        self, state: StoredState, base_revision: int, delta: dict, reviewer: str
    ) -> None:
        image_dir = self._records_dir / state.image_id
        image_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "schema_version": STORE_SCHEMA_VERSION,
            "image_id": state.image_id,
            "revision": state.revision,
            "base_revision": base_revision,
            "delta": delta,
            "reviewer": reviewer,
            "written_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "state": state.to_dict(),
        }
        self._atomic_write(
            image_dir / f"rev-{state.revision:04d}.json", json.dumps(doc, indent=2) + "\n"
        )
        with self._lock:
            self._states[state.image_id] = state
        self._write_index()
