import math

import numpy as np
import pytest

from pelvimark.core.geometry import (
    BBox,
    Frame,
    GeometryTransform,
    IDENTITY_TRANSFORM,
    PointPx,
    Spacing,
    bbox_to_model_frame,
    bbox_to_original_frame,
    point_distance_mm,
    px_to_mm,
    to_model_frame,
    to_original_frame,
)
from pelvimark.errors import ConfigurationError, ContractViolation, FrameMismatchError


def random_transform(rng) -> GeometryTransform:
    return GeometryTransform(
        scale_x=float(rng.uniform(0.05, 20.0)),
        scale_y=float(rng.uniform(0.05, 20.0)),
        pad_x=float(rng.uniform(-500.0, 500.0)),
        pad_y=float(rng.uniform(-500.0, 500.0)),
    )


def test_round_trip_identity_over_1000_random_transforms():
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(1000):
        t = random_transform(rng)
        p = PointPx(float(rng.uniform(-1e4, 1e4)), float(rng.uniform(-1e4, 1e4)), Frame.ORIGINAL)
        back = to_original_frame(to_model_frame(p, t), t)
        worst = max(worst, abs(back.x - p.x), abs(back.y - p.y))
    assert worst < 1e-9


def test_bbox_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(300):
        t = random_transform(rng)
        x0, y0 = rng.uniform(-100, 100, 2)
        b = BBox(float(x0), float(y0), float(x0 + rng.uniform(0.1, 50)), float(y0 + rng.uniform(0.1, 50)), Frame.ORIGINAL)
        back = bbox_to_original_frame(bbox_to_model_frame(b, t), t)
        for attr in ("x_min", "y_min", "x_max", "y_max"):
            assert getattr(back, attr) == pytest.approx(getattr(b, attr), abs=1e-9)
        assert back.frame is Frame.ORIGINAL


def test_forward_map_is_scale_then_pad():
    t = GeometryTransform(scale_x=0.5, scale_y=0.25, pad_x=128.0, pad_y=0.0)
    q = to_model_frame(PointPx(100.0, 200.0, Frame.ORIGINAL), t)
    assert (q.x, q.y) == (178.0, 50.0)
    assert q.frame is Frame.MODEL


def test_identity_transform_is_noop():
    p = PointPx(12.5, -3.0, Frame.ORIGINAL)
    q = to_model_frame(p, IDENTITY_TRANSFORM)
    assert (q.x, q.y) == (p.x, p.y)


def test_frame_tags_are_enforced():
    model_pt = PointPx(1.0, 2.0, Frame.MODEL)
    original_pt = PointPx(1.0, 2.0, Frame.ORIGINAL)
    with pytest.raises(FrameMismatchError):
        to_model_frame(model_pt, IDENTITY_TRANSFORM)
    with pytest.raises(FrameMismatchError):
        to_original_frame(original_pt, IDENTITY_TRANSFORM)
    box = BBox(0, 0, 1, 1, Frame.MODEL)
    with pytest.raises(FrameMismatchError):
        bbox_to_model_frame(box, IDENTITY_TRANSFORM)
    with pytest.raises(FrameMismatchError):
        point_distance_mm(original_pt, model_pt, Spacing(1.0, 1.0))


def test_invalid_boxes_rejected():
    with pytest.raises(ContractViolation):
        BBox(5.0, 0.0, 5.0, 1.0, Frame.MODEL)
    with pytest.raises(ContractViolation):
        BBox(0.0, 3.0, 1.0, 2.0, Frame.MODEL)
    with pytest.raises(ContractViolation):
        BBox(0.0, 0.0, float("nan"), 1.0, Frame.MODEL)


def test_bbox_derived_quantities():
    b = BBox(1.0, 2.0, 4.0, 8.0, Frame.MODEL)
    assert (b.width, b.height, b.area) == (3.0, 6.0, 18.0)


def test_point_rejects_non_finite():
    with pytest.raises(ContractViolation):
        PointPx(float("inf"), 0.0, Frame.ORIGINAL)


def test_spacing_validation():
    for bad in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(ConfigurationError):
            Spacing(bad, 1.0)
        with pytest.raises(ConfigurationError):
            Spacing(1.0, bad)
    assert Spacing(0.5, 0.5).isotropic
    assert not Spacing(0.5, 0.6).isotropic


def test_px_to_mm_scalar_and_vector():
    assert px_to_mm(2.0, 0.5) == 1.0
    assert px_to_mm((3.0, 4.0), Spacing(1.0, 1.0)) == 5.0
    with pytest.raises(ConfigurationError):
        px_to_mm(1.0, 0.0)


def test_anisotropic_displacement():
    # (3, 4) px at 0.5 mm horizontally, 1.0 mm vertically
    got = px_to_mm((3.0, 4.0), Spacing(row_mm=1.0, col_mm=0.5))
    assert got == pytest.approx(math.sqrt(1.5**2 + 4.0**2), abs=1e-12)
    assert got == pytest.approx(4.272, abs=5e-4)


def test_point_distance_mm():
    a = PointPx(0.0, 0.0, Frame.ORIGINAL)
    b = PointPx(3.0, 4.0, Frame.ORIGINAL)
    assert point_distance_mm(a, b, Spacing(1.0, 1.0)) == 5.0
    assert point_distance_mm(a, a, Spacing(0.3, 0.7)) == 0.0
