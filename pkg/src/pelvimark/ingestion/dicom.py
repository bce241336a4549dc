"""Minimal DICOM reader and writer for uncompressed radiographs.

Supports Explicit and Implicit VR Little Endian only. Anything
compressed, big-endian, or using undefined element lengths is rejected
with :class:`IngestionError`; this tool ingests flat single-frame
grayscale images and nothing else.

The writer is deterministic: no dates, no times, and the SOP instance
UID is derived from a hash of the image id, so writing the same record
twice produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from pelvimark.core.geometry import Spacing
from pelvimark.core.records import ImageRecord
from pelvimark.errors import IngestionError

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"
_SC_STORAGE = "1.2.840.10008.5.1.4.1.1.7"

# VRs that use a 4-byte length field preceded by 2 reserved bytes.
_LONG_VRS = {b"OB", b"OW", b"OF", b"OD", b"OL", b"SQ", b"UC", b"UR", b"UT", b"UN"}

_TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
_TAG_SOP_INSTANCE = (0x0008, 0x0018)
_TAG_SAMPLES = (0x0028, 0x0002)
_TAG_PHOTOMETRIC = (0x0028, 0x0004)
_TAG_ROWS = (0x0028, 0x0010)
_TAG_COLS = (0x0028, 0x0011)
_TAG_SPACING = (0x0028, 0x0030)
_TAG_IMAGER_SPACING = (0x0018, 0x1164)
_TAG_BITS_ALLOC = (0x0028, 0x0100)
_TAG_BITS_STORED = (0x0028, 0x0101)
_TAG_PIXEL_REP = (0x0028, 0x0103)
_TAG_WINDOW_CENTER = (0x0028, 0x1050)
_TAG_WINDOW_WIDTH = (0x0028, 0x1051)
_TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_WANTED = {
    _TAG_SOP_INSTANCE,
    _TAG_SAMPLES,
    _TAG_PHOTOMETRIC,
    _TAG_ROWS,
    _TAG_COLS,
    _TAG_SPACING,
    _TAG_IMAGER_SPACING,
    _TAG_BITS_ALLOC,
    _TAG_BITS_STORED,
    _TAG_PIXEL_REP,
    _TAG_WINDOW_CENTER,
    _TAG_WINDOW_WIDTH,
    _TAG_PIXEL_DATA,
}


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, msg: str):
        raise IngestionError(f"{self.path}: {msg}")

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated file (need {n} bytes at offset {self.pos})")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def peek_tag(self) -> Tuple[int, int]:
        if self.pos + 4 > len(self.data):
            self.fail("truncated file while reading tag")
        return struct.unpack_from("<HH", self.data, self.pos)

    def read_element(self, explicit: bool) -> Tuple[Tuple[int, int], bytes]:
        group, elem = struct.unpack("<HH", self.take(4))
        if explicit:
            vr = self.take(2)
            if vr in _LONG_VRS:
                self.take(2)
                (length,) = struct.unpack("<I", self.take(4))
            else:
                (length,) = struct.unpack("<H", self.take(2))
        else:
            (length,) = struct.unpack("<I", self.take(4))
        if length == 0xFFFFFFFF:
            self.fail(
                f"element ({group:04X},{elem:04X}) has undefined length; "
                "only uncompressed defined-length files are supported"
            )
        return (group, elem), self.take(length)

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def _as_text(raw: bytes) -> str:
    return raw.decode("ascii", errors="replace").strip("\x00 ").strip()


def _as_floats(raw: bytes, where: str, path: str) -> Tuple[float, ...]:
    text = _as_text(raw)
    try:
        return tuple(float(part) for part in text.split("\\") if part.strip())
    except ValueError:
        raise IngestionError(f"{path}: malformed decimal string in {where}: {text!r}") from None


def _as_ushort(raw: bytes, where: str, path: str) -> int:
    if len(raw) < 2:
        raise IngestionError(f"{path}: {where} too short for US value")
    return struct.unpack_from("<H", raw)[0]


def load_dicom(path) -> ImageRecord:
    """Read one uncompressed grayscale DICOM file into an :class:`ImageRecord`.

    The image id is the file stem; source tags only supply geometry,
    calibration and windowing. MONOCHROME1 data is inverted on load so
    every record stores higher-is-brighter intensities.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    rdr = _Reader(data, str(path))

    if len(data) < 132 or data[128:132] != b"DICM":
        rdr.fail("missing DICM magic; not a DICOM part-10 file")
    rdr.pos = 132

    # File meta group is always explicit VR little endian.
    transfer_syntax = ""
    while not rdr.exhausted:
        group, _ = rdr.peek_tag()
        if group != 0x0002:
            break
        tag, raw = rdr.read_element(explicit=True)
        if tag == _TAG_TRANSFER_SYNTAX:
            transfer_syntax = _as_text(raw)

    if transfer_syntax == EXPLICIT_VR_LE:
        explicit = True
    elif transfer_syntax == IMPLICIT_VR_LE:
        explicit = False
    else:
        rdr.fail(f"unsupported transfer syntax {transfer_syntax!r}")

    found: Dict[Tuple[int, int], bytes] = {}
    while not rdr.exhausted:
        tag, raw = rdr.read_element(explicit=explicit)
        if tag in _WANTED:
            found[tag] = raw
            if tag == _TAG_PIXEL_DATA:
                break

    for required, name in ((_TAG_ROWS, "Rows"), (_TAG_COLS, "Columns"), (_TAG_PIXEL_DATA, "PixelData")):
        if required not in found:
            rdr.fail(f"required element {name} is absent")

    sp = str(path)
    rows = _as_ushort(found[_TAG_ROWS], "Rows", sp)
    cols = _as_ushort(found[_TAG_COLS], "Columns", sp)
    bits_alloc = _as_ushort(found.get(_TAG_BITS_ALLOC, b"\x10\x00"), "BitsAllocated", sp)
    bits_stored = _as_ushort(found.get(_TAG_BITS_STORED, struct.pack("<H", bits_alloc)), "BitsStored", sp)
    samples = _as_ushort(found.get(_TAG_SAMPLES, b"\x01\x00"), "SamplesPerPixel", sp)
    pixel_rep = _as_ushort(found.get(_TAG_PIXEL_REP, b"\x00\x00"), "PixelRepresentation", sp)

    if samples != 1:
        rdr.fail(f"SamplesPerPixel {samples} unsupported; expected grayscale")
    if pixel_rep != 0:
        rdr.fail("signed pixel data is unsupported")
    if bits_alloc not in (8, 16):
        rdr.fail(f"BitsAllocated {bits_alloc} unsupported")
    if not 1 <= bits_stored <= bits_alloc:
        rdr.fail(f"BitsStored {bits_stored} inconsistent with BitsAllocated {bits_alloc}")

    raw_px = found[_TAG_PIXEL_DATA]
    expected = rows * cols * (bits_alloc // 8)
    if len(raw_px) not in (expected, expected + 1):
        rdr.fail(f"PixelData length {len(raw_px)} does not match {rows}x{cols} at {bits_alloc} bits")
    dtype = np.dtype("<u2") if bits_alloc == 16 else np.uint8
    pixels = np.frombuffer(raw_px[:expected], dtype=dtype).reshape(rows, cols).astype(np.uint16)

    photometric = _as_text(found.get(_TAG_PHOTOMETRIC, b"MONOCHROME2"))
    if photometric == "MONOCHROME1":
        pixels = ((1 << bits_stored) - 1) - pixels
    elif photometric != "MONOCHROME2":
        rdr.fail(f"photometric interpretation {photometric!r} unsupported")

    spacing: Optional[Spacing] = None
    spacing_raw = found.get(_TAG_SPACING) or found.get(_TAG_IMAGER_SPACING)
    if spacing_raw is not None:
        values = _as_floats(spacing_raw, "PixelSpacing", sp)
        if len(values) >= 2:
            spacing = Spacing(row_mm=values[0], col_mm=values[1])

    window: Optional[Tuple[float, float]] = None
    if _TAG_WINDOW_CENTER in found and _TAG_WINDOW_WIDTH in found:
        centers = _as_floats(found[_TAG_WINDOW_CENTER], "WindowCenter", sp)
        widths = _as_floats(found[_TAG_WINDOW_WIDTH], "WindowWidth", sp)
        if centers and widths and widths[0] > 0:
            window = (centers[0], widths[0])

    bit_depth = max(bits_stored, 8)
    return ImageRecord(
        image_id=path.stem,
        width=cols,
        height=rows,
        bit_depth=bit_depth,
        pixels=pixels,
        pixel_spacing=spacing,
        window=window,
        source_path=str(path),
    )


def _uid_for(image_id: str) -> str:
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return "2.25." + str(int.from_bytes(digest[:16], "big"))


def _pad(raw: bytes, pad_byte: bytes) -> bytes:
    return raw + pad_byte if len(raw) % 2 else raw


def _element(group: int, elem: int, vr: bytes, raw: bytes) -> bytes:
    head = struct.pack("<HH", group, elem) + vr
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(raw)) + raw
    if len(raw) > 0xFFFF:
        raise IngestionError(f"element ({group:04X},{elem:04X}) value too long for short form")
    return head + struct.pack("<H", len(raw)) + raw


def _text_el(group: int, elem: int, vr: bytes, text: str) -> bytes:
    pad = b"\x00" if vr == b"UI" else b" "
    return _element(group, elem, vr, _pad(text.encode("ascii"), pad))


def _us_el(group: int, elem: int, value: int) -> bytes:
    return _element(group, elem, b"US", struct.pack("<H", value))


def _ds(value: float) -> str:
    text = f"{value:.10g}"
    if len(text) > 16:
        text = f"{value:.8g}"
    return text


def save_dicom(record: ImageRecord, path) -> None:
    """Write an :class:`ImageRecord` as Explicit VR Little Endian."""
    path = Path(path)
    sop_uid = _uid_for(record.image_id)

    meta = b"".join(
        [
            _text_el(0x0002, 0x0002, b"UI", _SC_STORAGE),
            _text_el(0x0002, 0x0003, b"UI", sop_uid),
            _text_el(0x0002, 0x0010, b"UI", EXPLICIT_VR_LE),
        ]
    )
    meta_len = _element(0x0002, 0x0000, b"UL", struct.pack("<I", len(meta)))

    bits_alloc = 16 if record.bit_depth > 8 else 8
    if bits_alloc == 16:
        px_raw = record.pixels.astype("<u2").tobytes()
    else:
        px_raw = record.pixels.astype(np.uint8).tobytes()
    px_raw = _pad(px_raw, b"\x00")

    body = [
        _text_el(0x0008, 0x0016, b"UI", _SC_STORAGE),
        _text_el(0x0008, 0x0018, b"UI", sop_uid),
        _text_el(0x0008, 0x0060, b"CS", "DX"),
        _us_el(0x0028, 0x0002, 1),
        _text_el(0x0028, 0x0004, b"CS", "MONOCHROME2"),
        _us_el(0x0028, 0x0010, record.height),
        _us_el(0x0028, 0x0011, record.width),
    ]
    if record.pixel_spacing is not None:
        text = f"{_ds(record.pixel_spacing.row_mm)}\\{_ds(record.pixel_spacing.col_mm)}"
        body.append(_text_el(0x0028, 0x0030, b"DS", text))
    body += [
        _us_el(0x0028, 0x0100, bits_alloc),
        _us_el(0x0028, 0x0101, record.bit_depth),
        _us_el(0x0028, 0x0102, record.bit_depth - 1),
        _us_el(0x0028, 0x0103, 0),
    ]
    if record.window is not None:
        body.append(_text_el(0x0028, 0x1050, b"DS", _ds(record.window[0])))
        body.append(_text_el(0x0028, 0x1051, b"DS", _ds(record.window[1])))
    body.append(_element(0x7FE0, 0x0010, b"OW" if bits_alloc == 16 else b"OB", px_raw))

    path.write_bytes(b"\x00" * 128 + b"DICM" + meta_len + meta + b"".join(body))
