import json

import pytest

from pelvimark.core.geometry import Frame, PointPx
from pelvimark.errors import IngestionError
from pelvimark.ingestion.annotations import (
    AnnotationSet,
    load_annotations,
    out_of_bounds_features,
    save_annotations,
    serialize_annotations,
)


def write_doc(tmp_path, doc, name="ann.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), "utf-8")
    return path


def sample_doc():
    return {
        "schema_version": 1,
        "image_id": "img",
        "landmarks": [
            {"code": "L1", "point": [10.5, 20.25]},
            {"code": "L2", "point": [3, 4]},
        ],
        "outlines": [{"code": "C1", "points": [[0, 0], [5, 5], [10, 2]]}],
        "patches": [{"code": "R1", "points": [[1, 1], [8, 1], [4, 6]]}],
    }


def test_load_parses_all_kinds(tmp_path, tiny_registry):
    ann, rejected = load_annotations(write_doc(tmp_path, sample_doc()), tiny_registry)
    assert rejected == []
    assert ann.image_id == "img"
    assert ann.landmarks[0] == PointPx(10.5, 20.25, Frame.ORIGINAL)
    assert ann.landmarks[1] == PointPx(3.0, 4.0, Frame.ORIGINAL)
    assert len(ann.outlines[2]) == 3
    assert len(ann.patches[3]) == 3
    assert ann.class_ids == (0, 1, 2, 3)
    assert not ann.is_empty()


def test_save_load_round_trip_is_exact(tmp_path, tiny_registry):
    ann, _ = load_annotations(write_doc(tmp_path, sample_doc()), tiny_registry)
    out = tmp_path / "canonical.json"
    save_annotations(ann, out, tiny_registry)
    back, rejected = load_annotations(out, tiny_registry)
    assert rejected == []
    assert back == ann
    # canonical form is a fixed point
    save_annotations(back, tmp_path / "again.json", tiny_registry)
    assert (tmp_path / "again.json").read_bytes() == out.read_bytes()


def test_empty_annotation_set_is_valid(tmp_path, tiny_registry):
    doc = {"schema_version": 1, "image_id": "img"}
    ann, rejected = load_annotations(write_doc(tmp_path, doc), tiny_registry)
    assert ann.is_empty() and rejected == []


def test_unknown_code_rejected_not_fatal(tmp_path, tiny_registry):
    doc = sample_doc()
    doc["landmarks"].append({"code": "ZZ", "point": [1, 1]})
    ann, rejected = load_annotations(write_doc(tmp_path, doc), tiny_registry)
    assert [r.code for r in rejected] == ["ZZ"]
    assert "unknown" in rejected[0].reason
    assert len(ann.landmarks) == 2


def test_kind_mismatch_rejected(tmp_path, tiny_registry):
    doc = {
        "schema_version": 1,
        "image_id": "img",
        "landmarks": [{"code": "R1", "point": [1, 1]}],
    }
    ann, rejected = load_annotations(write_doc(tmp_path, doc), tiny_registry)
    assert ann.is_empty()
    assert rejected[0].code == "R1" and "landmarks" in rejected[0].reason


def test_duplicate_feature_rejected(tmp_path, tiny_registry):
    doc = sample_doc()
    doc["landmarks"].append({"code": "L1", "point": [0, 0]})
    ann, rejected = load_annotations(write_doc(tmp_path, doc), tiny_registry)
    assert [r.code for r in rejected] == ["L1"]
    assert rejected[0].reason == "duplicate feature"
    assert ann.landmarks[0].x == 10.5  # first occurrence wins


def test_malformed_geometry_rejected_per_feature(tmp_path, tiny_registry):
    doc = {
        "schema_version": 1,
        "image_id": "img",
        "landmarks": [
            {"code": "L1", "point": [1, 2, 3]},
            {"code": "L2", "point": [5, 5]},
        ],
        "outlines": [{"code": "C1", "points": [[0, 0]]}],
        "patches": [{"code": "R1", "points": [[0, 0], [1, 1]]}],
    }
    ann, rejected = load_annotations(write_doc(tmp_path, doc), tiny_registry)
    assert sorted(r.code for r in rejected) == ["C1", "L1", "R1"]
    assert set(ann.landmarks) == {1}
    doc["landmarks"][0]["point"] = [True, False]
    _, rejected = load_annotations(write_doc(tmp_path, doc, "b.json"), tiny_registry)
    assert "L1" in [r.code for r in rejected]


def test_document_level_failures_raise(tmp_path, tiny_registry):
    with pytest.raises(IngestionError):
        load_annotations(write_doc(tmp_path, {"image_id": "img"}), tiny_registry)  # no version
    with pytest.raises(IngestionError):
        load_annotations(write_doc(tmp_path, {"schema_version": 1}, "b.json"), tiny_registry)
    with pytest.raises(IngestionError):
        load_annotations(
            write_doc(tmp_path, {"schema_version": 2, "image_id": "x"}, "c.json"), tiny_registry
        )
    (tmp_path / "bad.json").write_text("{nope", "utf-8")
    with pytest.raises(IngestionError):
        load_annotations(tmp_path / "bad.json", tiny_registry)


def test_adapter_maps_foreign_layout(tmp_path, tiny_registry):
    foreign = {"id": "img", "pts": {"L1": [7, 8]}}

    def adapt(doc):
        return {
            "schema_version": 1,
            "image_id": doc["id"],
            "landmarks": [{"code": c, "point": p} for c, p in doc["pts"].items()],
        }

    ann, rejected = load_annotations(write_doc(tmp_path, foreign), tiny_registry, adapter=adapt)
    assert rejected == []
    assert ann.landmarks[0] == PointPx(7.0, 8.0, Frame.ORIGINAL)


def test_out_of_bounds_uses_pixel_footprint(tiny_registry):
    ann = AnnotationSet(image_id="img")
    ann.landmarks[0] = PointPx(-0.5, 0.0, Frame.ORIGINAL)   # exactly on the edge: inside
    ann.landmarks[1] = PointPx(9.5, 5.0, Frame.ORIGINAL)    # right edge of 10-wide image
    assert out_of_bounds_features(ann, 10, 8, tiny_registry) == []
    ann.landmarks[1] = PointPx(9.51, 5.0, Frame.ORIGINAL)
    ann.outlines[2] = (PointPx(0, 0, Frame.ORIGINAL), PointPx(3, 7.6, Frame.ORIGINAL))
    assert out_of_bounds_features(ann, 10, 8, tiny_registry) == ["C1", "L2"]


def test_serialization_sorts_by_code(tiny_registry):
    ann = AnnotationSet(image_id="img")
    ann.landmarks[1] = PointPx(1, 1, Frame.ORIGINAL)
    ann.landmarks[0] = PointPx(2, 2, Frame.ORIGINAL)
    doc = json.loads(serialize_annotations(ann, tiny_registry))
    assert [e["code"] for e in doc["landmarks"]] == ["L1", "L2"]
    assert doc["outlines"] == [] and doc["patches"] == []
