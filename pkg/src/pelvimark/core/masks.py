"""Binary occupancy masks, run-length encoded at rest and dense in compute.

Runs are row-major and alternate starting with background, so ``runs[0]``
is the number of leading background pixels (possibly zero) and odd-indexed
runs are foreground. Only the leading run may be zero; this keeps the
encoding canonical so equal masks compare equal structurally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pelvimark.core.geometry import Frame
from pelvimark.errors import ContractViolation


@dataclass(frozen=True)
class Mask:
    width: int
    height: int
    runs: tuple[int, ...]
    frame: Frame

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractViolation(f"mask dimensions must be positive, got {self.width}x{self.height}")
        total = 0
        for i, run in enumerate(self.runs):
            if run < 0 or (run == 0 and i != 0):
                raise ContractViolation(f"run {i} has non-canonical length {run}")
            total += run
        if total != self.width * self.height:
            raise ContractViolation(
                f"runs sum to {total}, expected {self.width * self.height} for {self.width}x{self.height}"
            )

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return int(sum(self.runs[1::2]))

    @property
    def empty(self) -> bool:
        return self.area == 0

    def to_array(self) -> np.ndarray:
        return decode_mask(self)


def encode_mask(grid: np.ndarray, frame: Frame) -> Mask:
    """Run-length encode a 2-D boolean grid (rows are y, columns x)."""
    arr = np.asarray(grid, dtype=bool)
    if arr.ndim != 2:
        raise ContractViolation(f"mask grid must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    flat = arr.ravel()
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return Mask(width=w, height=h, runs=tuple(int(r) for r in runs), frame=frame)


def decode_mask(m: Mask) -> np.ndarray:
    """Expand a mask to a dense boolean (height, width) grid."""
    values = np.zeros(len(m.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(m.runs, dtype=np.int64))
    return flat.reshape(m.height, m.width)


def empty_mask(width: int, height: int, frame: Frame) -> Mask:
    return Mask(width=width, height=height, runs=(width * height,), frame=frame)
