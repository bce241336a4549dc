import struct

import numpy as np
import pytest

from conftest import make_record
from pelvimark.core.geometry import Spacing
from pelvimark.errors import IngestionError
from pelvimark.ingestion.dicom import IMPLICIT_VR_LE, load_dicom, save_dicom


def _explicit_el(group, elem, vr, raw):
    head = struct.pack("<HH", group, elem) + vr
    return head + struct.pack("<H", len(raw)) + raw


def _implicit_el(group, elem, raw):
    return struct.pack("<HHI", group, elem, len(raw)) + raw


def _implicit_file(rows=4, cols=6, body_extra=b"", pixel_len=None, spacing_text=b"0.3\\0.4 "):
    """Hand-assembled Implicit VR LE file; meta group stays explicit."""
    uid = IMPLICIT_VR_LE.encode() + b"\x00"  # odd length, null padded
    meta = _explicit_el(0x0002, 0x0010, b"UI", uid)
    px = np.arange(rows * cols, dtype="<u2").tobytes()
    body = b""
    if spacing_text is not None:
        body += _implicit_el(0x0018, 0x1164, spacing_text)
    body += _implicit_el(0x0028, 0x0010, struct.pack("<H", rows))
    body += _implicit_el(0x0028, 0x0011, struct.pack("<H", cols))
    body += body_extra
    if pixel_len is None:
        body += _implicit_el(0x7FE0, 0x0010, px)
    else:
        body += struct.pack("<HHI", 0x7FE0, 0x0010, pixel_len) + px
    return b"\x00" * 128 + b"DICM" + meta + body


def test_write_read_round_trip(tmp_path):
    rec = make_record("rt-01", width=512, height=512, spacing=Spacing(0.2, 0.2),
                      window=(2048.0, 4096.0), bit_depth=12, seed=3)
    path = tmp_path / "rt-01.dcm"
    save_dicom(rec, path)
    back = load_dicom(path)
    assert back.image_id == "rt-01"
    assert (back.width, back.height, back.bit_depth) == (512, 512, 12)
    assert back.pixel_spacing == Spacing(0.2, 0.2)
    assert back.window == (2048.0, 4096.0)
    assert np.array_equal(back.pixels, rec.pixels)


def test_image_id_comes_from_file_stem(tmp_path):
    rec = make_record("whatever")
    path = tmp_path / "renamed-77.dcm"
    save_dicom(rec, path)
    assert load_dicom(path).image_id == "renamed-77"


def test_writer_is_deterministic(tmp_path):
    rec = make_record("det", seed=5, window=(100.0, 50.0))
    save_dicom(rec, tmp_path / "a.dcm")
    save_dicom(rec, tmp_path / "b.dcm")
    assert (tmp_path / "a.dcm").read_bytes() == (tmp_path / "b.dcm").read_bytes()


def test_uncalibrated_round_trip(tmp_path):
    rec = make_record("nospc", spacing=None)
    path = tmp_path / "nospc.dcm"
    save_dicom(rec, path)
    back = load_dicom(path)
    assert back.pixel_spacing is None
    assert not back.calibrated


def test_eight_bit_round_trip(tmp_path):
    rec = make_record("small8", width=5, height=3, bit_depth=8, seed=2)
    path = tmp_path / "small8.dcm"
    save_dicom(rec, path)
    back = load_dicom(path)
    assert back.bit_depth == 8
    assert np.array_equal(back.pixels, rec.pixels)


def test_odd_pixel_payload_is_padded_and_accepted(tmp_path):
    rec = make_record("odd", width=3, height=3, bit_depth=8, seed=9)
    path = tmp_path / "odd.dcm"
    save_dicom(rec, path)
    back = load_dicom(path)
    assert np.array_equal(back.pixels, rec.pixels)


def test_monochrome1_is_inverted_on_load(tmp_path):
    rec = make_record("inv", bit_depth=12, seed=4)
    path = tmp_path / "inv.dcm"
    save_dicom(rec, path)
    raw = path.read_bytes()
    assert raw.count(b"MONOCHROME2") == 1
    (tmp_path / "inv1.dcm").write_bytes(raw.replace(b"MONOCHROME2", b"MONOCHROME1"))
    back = load_dicom(tmp_path / "inv1.dcm")
    assert np.array_equal(back.pixels, 4095 - rec.pixels.astype(np.int64))


def test_truncated_file_rejected(tmp_path):
    rec = make_record("trunc", width=32, height=32)
    path = tmp_path / "trunc.dcm"
    save_dicom(rec, path)
    raw = path.read_bytes()
    (tmp_path / "cut.dcm").write_bytes(raw[: len(raw) - 50])
    with pytest.raises(IngestionError, match="truncated|length"):
        load_dicom(tmp_path / "cut.dcm")


def test_non_dicom_rejected(tmp_path):
    path = tmp_path / "junk.dcm"
    path.write_bytes(b"\x00" * 200)
    with pytest.raises(IngestionError, match="DICM"):
        load_dicom(path)
    with pytest.raises(IngestionError):
        load_dicom(tmp_path / "absent.dcm")


def test_unsupported_transfer_syntax_rejected(tmp_path):
    uid = b"1.2.840.10008.1.2.2\x00"  # big endian
    meta = _explicit_el(0x0002, 0x0010, b"UI", uid)
    path = tmp_path / "be.dcm"
    path.write_bytes(b"\x00" * 128 + b"DICM" + meta)
    with pytest.raises(IngestionError, match="transfer syntax"):
        load_dicom(path)


def test_implicit_vr_with_fallback_spacing_tag(tmp_path):
    path = tmp_path / "impl.dcm"
    path.write_bytes(_implicit_file(rows=4, cols=6))
    rec = load_dicom(path)
    assert (rec.height, rec.width) == (4, 6)
    assert rec.pixel_spacing == Spacing(row_mm=0.3, col_mm=0.4)
    assert rec.bit_depth == 16  # defaults: 16 allocated, 16 stored
    assert np.array_equal(rec.pixels, np.arange(24).reshape(4, 6))


def test_undefined_length_rejected(tmp_path):
    path = tmp_path / "undef.dcm"
    path.write_bytes(_implicit_file(pixel_len=0xFFFFFFFF))
    with pytest.raises(IngestionError, match="undefined length"):
        load_dicom(path)


def test_signed_pixels_rejected(tmp_path):
    extra = _implicit_el(0x0028, 0x0103, struct.pack("<H", 1))
    path = tmp_path / "signed.dcm"
    path.write_bytes(_implicit_file(body_extra=extra))
    with pytest.raises(IngestionError, match="signed"):
        load_dicom(path)


def test_color_images_rejected(tmp_path):
    extra = _implicit_el(0x0028, 0x0002, struct.pack("<H", 3))
    path = tmp_path / "rgb.dcm"
    path.write_bytes(_implicit_file(body_extra=extra))
    with pytest.raises(IngestionError, match="SamplesPerPixel"):
        load_dicom(path)


def test_pixel_length_mismatch_rejected(tmp_path):
    path = tmp_path / "short.dcm"
    # claims 5x6 but carries 4x6 worth of samples
    path.write_bytes(_implicit_file(rows=4, cols=6).replace(
        _implicit_el(0x0028, 0x0010, struct.pack("<H", 4)),
        _implicit_el(0x0028, 0x0010, struct.pack("<H", 5)),
    ))
    with pytest.raises(IngestionError, match="PixelData length"):
        load_dicom(path)


def test_single_value_spacing_is_ignored(tmp_path):
    path = tmp_path / "one.dcm"
    path.write_bytes(_implicit_file(spacing_text=b"0.5 "))
    assert load_dicom(path).pixel_spacing is None
