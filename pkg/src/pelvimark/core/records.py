"""In-memory image records as they come out of ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from pelvimark.core.geometry import Spacing
from pelvimark.errors import ValidationError


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


@dataclass(eq=False)
class ImageRecord:
    """A decoded radiograph plus its acquisition metadata.

    ``pixels`` is the raw stored intensity grid (row-major, shape
    ``(height, width)``), already flipped to MONOCHROME2 polarity so
    higher values mean brighter. ``pixel_spacing`` is None when the
    source carried no calibration; distances in mm are then
    unavailable and consumers must degrade explicitly.
    """

    image_id: str
    width: int
    height: int
    bit_depth: int
    pixels: np.ndarray
    pixel_spacing: Optional[Spacing] = None
    window: Optional[Tuple[float, float]] = None  # (center, width)
    split: Split = Split.UNASSIGNED
    source_path: str = ""

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"{self.image_id}: non-positive dimensions {self.width}x{self.height}")
        if not 8 <= self.bit_depth <= 16:
            raise ValidationError(f"{self.image_id}: bit depth {self.bit_depth} outside 8..16")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValidationError(f"{self.image_id}: pixel array must be 2-D, got shape {px.shape}")
        if px.shape != (self.height, self.width):
            raise ValidationError(
                f"{self.image_id}: pixel shape {px.shape} does not match {self.height}x{self.width}"
            )
        if px.dtype != np.uint16:
            px = px.astype(np.uint16)
        if px.size and int(px.max()) >= (1 << self.bit_depth):
            raise ValidationError(
                f"{self.image_id}: pixel values exceed {self.bit_depth}-bit range"
            )
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.window is not None:
            center, width = self.window
            if not np.isfinite(center) or not np.isfinite(width) or width <= 0:
                raise ValidationError(f"{self.image_id}: invalid display window {self.window}")

    @property
    def calibrated(self) -> bool:
        return self.pixel_spacing is not None
