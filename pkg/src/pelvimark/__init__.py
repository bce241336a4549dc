"""Detect-then-segment anatomical landmarking for planar pelvic radiographs."""

__version__ = "0.1.0"
