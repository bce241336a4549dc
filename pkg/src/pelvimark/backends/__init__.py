from pelvimark.backends.base import (
    Backend,
    BackendDescriptor,
    Detection,
    SegmentResult,
    validate_detection,
    validate_segment_result,
)
from pelvimark.backends.stub import (
    StubBackend,
    StubCorruption,
    StubImageTruth,
    build_stub_truth,
)

__all__ = [
    "Backend",
    "BackendDescriptor",
    "Detection",
    "SegmentResult",
    "StubBackend",
    "StubCorruption",
    "StubImageTruth",
    "build_stub_truth",
    "validate_detection",
    "validate_segment_result",
]
