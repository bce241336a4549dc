"""Resize and window radiographs into fixed-size 8-bit model input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from pelvimark.core.geometry import GeometryTransform
from pelvimark.core.records import ImageRecord
from pelvimark.errors import ValidationError


@dataclass
class NormalizedImage:
    """Model-input image plus the transform back to the original frame.

    ``intensities`` is (side, side) uint8. ``degenerate`` marks inputs
    with no usable contrast; their intensities are all zero.
    """

    image_id: str
    intensities: np.ndarray
    transform: GeometryTransform
    degenerate: bool = False

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


def normalize_image(rec: ImageRecord, target_side: int) -> NormalizedImage:
    """Aspect-preserving resize to ``target_side`` on the longer edge,
    zero-padded to square, intensities mapped to [0, 255].

    The intensity window is the record's display window when present,
    else the image min/max. The returned transform maps original-frame
    pixel-center coordinates into the model frame as x' = x*scale + pad.
    """
    if target_side <= 0:
        raise ValidationError(f"target_side must be positive, got {target_side}")

    scale = target_side / max(rec.width, rec.height)
    new_w = max(1, round(rec.width * scale))
    new_h = max(1, round(rec.height * scale))
    pad_x = (target_side - new_w) // 2
    pad_y = (target_side - new_h) // 2
    transform = GeometryTransform(
        scale_x=new_w / rec.width,
        scale_y=new_h / rec.height,
        pad_x=float(pad_x),
        pad_y=float(pad_y),
    )

    if rec.window is not None:
        center, width = rec.window
        lo, hi = center - width / 2.0, center + width / 2.0
    else:
        lo = float(rec.pixels.min())
        hi = float(rec.pixels.max())

    if hi <= lo:
        zeros = np.zeros((target_side, target_side), dtype=np.uint8)
        return NormalizedImage(rec.image_id, zeros, transform, degenerate=True)

    content = np.asarray(rec.pixels, dtype=np.float32)
    if (new_w, new_h) != (rec.width, rec.height):
        content = np.asarray(
            Image.fromarray(content, mode="F").resize((new_w, new_h), Image.BILINEAR)
        )
    mapped = np.clip((content - lo) * (255.0 / (hi - lo)), 0.0, 255.0)

    canvas = np.zeros((target_side, target_side), dtype=np.uint8)
    canvas[pad_y : pad_y + new_h, pad_x : pad_x + new_w] = np.round(mapped).astype(np.uint8)
    return NormalizedImage(rec.image_id, canvas, transform, degenerate=False)
