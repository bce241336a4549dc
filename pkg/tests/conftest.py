import numpy as np
import pytest

from pelvimark.core.geometry import Spacing
from pelvimark.core.records import ImageRecord
from pelvimark.core.registry import ClassRegistry, FeatureClass, FeatureKind, Side


@pytest.fixture
def tiny_registry() -> ClassRegistry:
    return ClassRegistry(
        [
            FeatureClass(0, "L1", FeatureKind.LANDMARK, Side.RIGHT, "femora"),
            FeatureClass(1, "L2", FeatureKind.LANDMARK, Side.LEFT, "pelvis"),
            FeatureClass(2, "C1", FeatureKind.OUTLINE, Side.NONE, ""),
            FeatureClass(3, "R1", FeatureKind.PATCH, Side.NONE, ""),
        ]
    )


def make_record(
    image_id: str = "img",
    width: int = 64,
    height: int = 48,
    spacing=Spacing(0.5, 0.5),
    window=None,
    bit_depth: int = 12,
    seed: int = 0,
    pixels=None,
) -> ImageRecord:
    if pixels is None:
        rng = np.random.default_rng(seed)
        pixels = rng.integers(0, 1 << bit_depth, size=(height, width), dtype=np.uint16)
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        bit_depth=bit_depth,
        pixels=pixels,
        pixel_spacing=spacing,
        window=window,
    )


@pytest.fixture
def record_factory():
    return make_record
