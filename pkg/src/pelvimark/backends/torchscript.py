"""Adapter that executes exported neural networks.

Models are TorchScript archives. Expected signatures, documented here
because nothing else enforces them until load time:

  detector:  (1, 1, S, S) float32 in [0,1]  ->  (N, 6) float32 rows of
             [class_id, confidence, x_min, y_min, x_max, y_max] in
             model-frame pixels
  segmenter: ((1, 1, S, S) float32, (1, 4) float32 box)  ->  (1, S, S)
             float32 probabilities in [0,1]

A model may carry an ``input_side`` integer attribute; when present it
is checked against the descriptor. Either way a zero-image probe runs
at load time, so a shape mismatch fails before any real inference.
Torch modules are not assumed reentrant, so the descriptor declares
the backend single-threaded.
"""

from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np

from pelvimark.backends.base import (
    BackendDescriptor,
    Detection,
    PROVIDES_BOTH,
    SegmentResult,
)
from pelvimark.core.geometry import BBox, Frame
from pelvimark.errors import BackendError, ContractViolation
from pelvimark.ingestion.normalize import NormalizedImage


def _import_torch():
    try:
        import torch
    except ImportError as exc:
        raise BackendError(
            "torch is not installed; install the 'models' extra to run exported networks"
        ) from exc
    return torch


def _load_module(torch, path: Path):
    if not path.is_file():
        raise BackendError(f"model file not found: {path}")
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except Exception as exc:
        raise BackendError(f"cannot load model {path}: {exc}") from exc
    module.eval()
    return module


def _check_declared_side(module, expected: int, path: Path) -> None:
    declared = getattr(module, "input_side", None)
    if declared is not None and int(declared) != expected:
        raise BackendError(
            f"model {path} declares input side {int(declared)}, descriptor requires {expected}"
        )


class TorchScriptBackend:
    def __init__(self, detector, segmenter, descriptor: BackendDescriptor, torch):
        self.descriptor = descriptor
        self._detector = detector
        self._segmenter = segmenter
        self._torch = torch

    def _image_tensor(self, img: NormalizedImage):
        side = self.descriptor.required_input_side
        if img.intensities.shape != (side, side):
            raise ContractViolation(
                f"image '{img.image_id}' is {img.intensities.shape}, backend requires {side}x{side}"
            )
        arr = img.intensities.astype(np.float32) / 255.0
        return self._torch.from_numpy(arr).reshape(1, 1, side, side)

    def detect(self, img: NormalizedImage) -> List[Detection]:
        torch = self._torch
        with torch.no_grad():
            try:
                raw = self._detector(self._image_tensor(img))
            except Exception as exc:
                raise BackendError(f"detector failed on '{img.image_id}': {exc}") from exc
        rows = np.asarray(raw.detach().cpu().numpy(), dtype=np.float64)
        if rows.ndim != 2 or (rows.size and rows.shape[1] != 6):
            raise BackendError(f"detector output shape {rows.shape} is not (N, 6)")
        out: List[Detection] = []
        for row in rows:
            if not np.isfinite(row).all():
                raise BackendError(f"detector emitted non-finite row {row.tolist()}")
            cid, conf, x0, y0, x1, y1 = row
            try:
                out.append(
                    Detection(
                        int(cid),
                        BBox(float(x0), float(y0), float(x1), float(y1), Frame.MODEL),
                        float(min(max(conf, 0.0), 1.0)),
                    )
                )
            except ContractViolation as exc:
                raise BackendError(f"detector emitted invalid box: {exc}") from exc
        return out

    def segment(self, img: NormalizedImage, prompt: BBox, class_id: int) -> SegmentResult:
        torch = self._torch
        side = self.descriptor.required_input_side
        box = torch.tensor(
            [[prompt.x_min, prompt.y_min, prompt.x_max, prompt.y_max]], dtype=torch.float32
        )
        with torch.no_grad():
            try:
                raw = self._segmenter(self._image_tensor(img), box)
            except Exception as exc:
                raise BackendError(f"segmenter failed on '{img.image_id}': {exc}") from exc
        grid = np.asarray(raw.detach().cpu().numpy(), dtype=np.float64)
        if grid.ndim == 3 and grid.shape[0] == 1:
            grid = grid[0]
        if grid.shape != (side, side):
            raise BackendError(f"segmenter output shape {grid.shape} is not ({side}, {side})")
        return SegmentResult(class_id, np.clip(grid, 0.0, 1.0), prompt)


def load_model_backend(
    detector_path, segmenter_path, descriptor: BackendDescriptor
) -> TorchScriptBackend:
    """Load both models and smoke-test them on a zero image."""
    torch = _import_torch()
    det_path, seg_path = Path(detector_path), Path(segmenter_path)
    detector = _load_module(torch, det_path)
    segmenter = _load_module(torch, seg_path)
    side = descriptor.required_input_side
    _check_declared_side(detector, side, det_path)
    _check_declared_side(segmenter, side, seg_path)

    zero = torch.zeros((1, 1, side, side), dtype=torch.float32)
    probe_box = torch.tensor([[0.0, 0.0, 1.0, 1.0]], dtype=torch.float32)
    with torch.no_grad():
        try:
            det_out = detector(zero)
        except Exception as exc:
            raise BackendError(f"detector {det_path} rejects {side}x{side} input: {exc}") from exc
        try:
            seg_out = segmenter(zero, probe_box)
        except Exception as exc:
            raise BackendError(f"segmenter {seg_path} rejects {side}x{side} input: {exc}") from exc
    if det_out.dim() != 2 or (det_out.numel() and det_out.shape[1] != 6):
        raise BackendError(f"detector {det_path} probe output shape {tuple(det_out.shape)} is not (N, 6)")
    seg_shape = tuple(seg_out.shape)
    if seg_shape not in ((1, side, side), (side, side)):
        raise BackendError(
            f"segmenter {seg_path} probe output shape {seg_shape} does not match input side {side}"
        )
    return TorchScriptBackend(detector, segmenter, descriptor, torch)
