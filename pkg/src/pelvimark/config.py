"""Run configuration shared by the command line tools.

A config file is plain JSON whose keys match :class:`RunConfig` field
names. Unknown keys are rejected so typos fail loudly instead of
silently falling back to defaults. Command line flags override file
values, which override defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from pelvimark.errors import ConfigurationError

_PATH_FIELDS = {"data_root", "registry_path", "output_root", "detector_model", "segmenter_model"}


@dataclass
class RunConfig:
    data_root: Path = Path("data")
    registry_path: Optional[Path] = None      # default: <data_root>/registry.json
    output_root: Optional[Path] = None        # default: <data_root>
    input_side: int = 512
    confidence_threshold: float = 0.25
    mask_threshold: float = 0.5
    landmarks_via_segmentation: bool = False
    seed: Optional[int] = None
    jobs: int = 4
    threshold_mm: float = 3.0
    landmark_radius_mm: float = 2.0
    outline_stroke_mm: float = 2.0
    assumed_spacing_mm: Optional[float] = None
    stub_drop: Tuple[str, ...] = ()
    stub_center_jitter_px: float = 0.0
    stub_scale_jitter: float = 0.0
    stub_morph_iterations: int = 0
    stub_confidence_penalty: float = 0.0
    detector_model: Optional[Path] = None
    segmenter_model: Optional[Path] = None

    def __post_init__(self):
        if self.input_side <= 0:
            raise ConfigurationError(f"input_side must be positive, got {self.input_side}")
        if self.jobs <= 0:
            raise ConfigurationError(f"jobs must be positive, got {self.jobs}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigurationError(f"confidence_threshold {self.confidence_threshold} outside [0, 1]")
        if not 0.0 <= self.mask_threshold <= 1.0:
            raise ConfigurationError(f"mask_threshold {self.mask_threshold} outside [0, 1]")
        if self.threshold_mm <= 0:
            raise ConfigurationError(f"threshold_mm must be positive, got {self.threshold_mm}")

    @property
    def registry_file(self) -> Path:
        return self.registry_path if self.registry_path is not None else self.data_root / "registry.json"

    @property
    def out_root(self) -> Path:
        return self.output_root if self.output_root is not None else self.data_root


def load_run_config(path) -> RunConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {p} must hold a JSON object")
    return merge_config(RunConfig(), raw, origin=str(p))


def merge_config(base: RunConfig, overrides: dict, origin: str = "overrides") -> RunConfig:
    """New RunConfig with ``overrides`` applied on top of ``base``."""
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ConfigurationError(f"{origin}: unknown config keys {unknown}")
    values = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _PATH_FIELDS:
            value = Path(value)
        elif key == "stub_drop":
            if isinstance(value, str):
                value = [c for c in value.split(",") if c]
            value = tuple(str(c) for c in value)
        values[key] = value
    try:
        return dataclasses.replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{origin}: {exc}")
