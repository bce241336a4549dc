"""The two-stage inference contract every backend implements.

Backends produce raw detections and probability masks in the model
frame. The pipeline validates these at the boundary rather than
trusting them; a backend that violates the contract surfaces as a
:class:`BackendError`, never as silent bad data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Protocol, runtime_checkable

import numpy as np

from pelvimark.core.geometry import BBox, Frame
from pelvimark.errors import BackendError, ContractViolation
from pelvimark.ingestion.normalize import NormalizedImage

PROVIDES_DETECT = "detect"
PROVIDES_SEGMENT = "segment"
PROVIDES_BOTH = "both"


@dataclass(frozen=True)
class BackendDescriptor:
    """What a backend needs and offers.

    ``thread_safe`` False makes the batch runner serialize calls.
    """

    name: str
    required_input_side: int
    provides: str = PROVIDES_BOTH
    thread_safe: bool = True

    def __post_init__(self):
        if self.required_input_side <= 0:
            raise ContractViolation(
                f"backend '{self.name}': required_input_side must be positive"
            )
        if self.provides not in (PROVIDES_DETECT, PROVIDES_SEGMENT, PROVIDES_BOTH):
            raise ContractViolation(f"backend '{self.name}': unknown provides {self.provides!r}")


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractViolation(f"detection confidence {self.confidence} outside [0,1]")


@dataclass
class SegmentResult:
    """Per-pixel probabilities for one class, plus the prompt that produced them.

    ``clipped`` is set when the prompt had to be cut down to the canvas
    (or vanished entirely, in which case the probabilities are all zero).
    """

    class_id: int
    prob_mask: np.ndarray
    prompt_box: BBox
    clipped: bool = False


@runtime_checkable
class Backend(Protocol):
    descriptor: BackendDescriptor

    def detect(self, img: NormalizedImage) -> List[Detection]: ...

    def segment(self, img: NormalizedImage, prompt: BBox, class_id: int) -> SegmentResult: ...


def validate_detection(det: Detection, side: int, backend_name: str) -> None:
    b = det.box
    if b.frame != Frame.MODEL:
        raise BackendError(f"{backend_name}: detection box not in model frame")
    for v in (b.x_min, b.y_min, b.x_max, b.y_max):
        if not math.isfinite(v):
            raise BackendError(f"{backend_name}: non-finite detection box {b}")
    if not math.isfinite(det.confidence) or not 0.0 <= det.confidence <= 1.0:
        raise BackendError(f"{backend_name}: detection confidence {det.confidence} outside [0,1]")


def validate_segment_result(r: SegmentResult, side: int, backend_name: str) -> None:
    grid = np.asarray(r.prob_mask)
    if grid.shape != (side, side):
        raise BackendError(
            f"{backend_name}: probability grid shape {grid.shape} does not match input side {side}"
        )
    if grid.size and (not np.isfinite(grid).all() or grid.min() < 0.0 or grid.max() > 1.0):
        raise BackendError(f"{backend_name}: probabilities outside [0,1]")
