"""The feature-class registry: which landmarks, outlines and patches exist.

The taxonomy is operator-supplied configuration, not code. A registry file
is a JSON document::

    {
      "schema_version": 1,
      "classes": [
        {"code": "A01_r", "kind": "landmark", "side": "right", "group": "pelvis"},
        {"code": "P01",   "kind": "patch"}
      ]
    }

``class_id`` values are assigned densely in file order. ``group`` is
report-level metadata (e.g. "femora" / "pelvis" for landmark classes);
``side`` defaults to "none".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

from pelvimark.errors import ConfigurationError

REGISTRY_SCHEMA_VERSION = 1


class FeatureKind(str, Enum):
    LANDMARK = "landmark"
    OUTLINE = "outline"
    PATCH = "patch"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    NONE = "none"


@dataclass(frozen=True)
class FeatureClass:
    class_id: int
    code: str
    kind: FeatureKind
    side: Side = Side.NONE
    group: str = ""


class ClassRegistry:
    """Immutable lookup over the configured feature classes."""

    def __init__(self, classes: Sequence[FeatureClass]):
        if not classes:
            raise ConfigurationError("registry contains no classes")
        by_code: dict[str, FeatureClass] = {}
        for i, fc in enumerate(classes):
            if fc.class_id != i:
                raise ConfigurationError(
                    f"class ids must be contiguous from 0; entry '{fc.code}' has id {fc.class_id}, expected {i}"
                )
            if fc.code in by_code:
                raise ConfigurationError(f"duplicate class code '{fc.code}'")
            by_code[fc.code] = fc
        self._classes = tuple(classes)
        self._by_code = by_code

    def __len__(self) -> int:
        return len(self._classes)

    def __iter__(self) -> Iterator[FeatureClass]:
        return iter(self._classes)

    def __contains__(self, code: str) -> bool:
        return code in self._by_code

    def by_code(self, code: str) -> FeatureClass:
        try:
            return self._by_code[code]
        except KeyError:
            raise ConfigurationError(f"unknown class code '{code}'") from None

    def by_id(self, class_id: int) -> FeatureClass:
        if not 0 <= class_id < len(self._classes):
            raise ConfigurationError(f"unknown class id {class_id}")
        return self._classes[class_id]

    def ids_of_kind(self, *kinds: FeatureKind) -> tuple[int, ...]:
        return tuple(fc.class_id for fc in self._classes if fc.kind in kinds)

    @property
    def landmark_ids(self) -> tuple[int, ...]:
        return self.ids_of_kind(FeatureKind.LANDMARK)

    @property
    def mask_ids(self) -> tuple[int, ...]:
        """Classes whose predictions are masks: outlines and patches."""
        return self.ids_of_kind(FeatureKind.OUTLINE, FeatureKind.PATCH)

    @property
    def all_ids(self) -> tuple[int, ...]:
        return tuple(fc.class_id for fc in self._classes)


def load_class_registry(path) -> ClassRegistry:
    """Parse a registry file, raising :class:`ConfigurationError` on bad entries."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read registry {path}: {exc}") from exc
    if not isinstance(doc, dict) or "classes" not in doc:
        raise ConfigurationError(f"registry {path} must be an object with a 'classes' array")
    version = doc.get("schema_version")
    if version != REGISTRY_SCHEMA_VERSION:
        raise ConfigurationError(f"registry {path}: unsupported schema_version {version!r}")
    entries = doc["classes"]
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError(f"registry {path} declares no classes")
    classes = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "code" not in entry or "kind" not in entry:
            raise ConfigurationError(f"registry {path}: entry {i} needs 'code' and 'kind'")
        code = entry["code"]
        try:
            kind = FeatureKind(entry["kind"])
        except ValueError:
            raise ConfigurationError(
                f"registry {path}: entry '{code}' has unknown kind {entry['kind']!r}"
            ) from None
        try:
            side = Side(entry.get("side", "none"))
        except ValueError:
            raise ConfigurationError(
                f"registry {path}: entry '{code}' has unknown side {entry['side']!r}"
            ) from None
        classes.append(FeatureClass(i, code, kind, side, str(entry.get("group", ""))))
    return ClassRegistry(classes)


def save_class_registry(registry: ClassRegistry, path) -> None:
    doc = {
        "schema_version": REGISTRY_SCHEMA_VERSION,
        "classes": [
            {"code": fc.code, "kind": fc.kind.value, "side": fc.side.value, "group": fc.group}
            for fc in registry
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", "utf-8")
