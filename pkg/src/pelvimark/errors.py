"""Exception hierarchy shared across the toolkit.

CLI exit codes map onto this hierarchy: configuration and validation
problems exit 1, backend failures exit 3, everything else exits 2.
"""


class PelvimarkError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PelvimarkError):
    """Bad configuration: registry entries, spacing values, split counts."""


class ContractViolation(PelvimarkError):
    """A call broke an API contract (invalid invariant, wrong value range)."""


class FrameMismatchError(ContractViolation):
    """A geometric value arrived in the wrong coordinate frame."""


class IngestionError(PelvimarkError):
    """A source file (DICOM, annotation document) could not be read."""


class ValidationError(PelvimarkError):
    """Invalid geometry: degenerate or self-intersecting polygons and the like."""


class EmptyMaskError(ValidationError):
    """A rasterization produced no pixels, or an empty mask was queried."""


class BackendError(PelvimarkError):
    """An inference backend failed or returned malformed output."""


class StoreError(PelvimarkError):
    """The review store could not complete a persistence operation."""


class StaleRevisionError(StoreError):
    """Optimistic-concurrency check failed: the submitted revision is stale."""

    def __init__(self, message: str, current_revision: int):
        super().__init__(message)
        self.current_revision = current_revision


class CurationIncompleteError(StoreError):
    """Finalize was requested while registry classes remain unresolved."""

    def __init__(self, message: str, unresolved: list[str]):
        super().__init__(message)
        self.unresolved = unresolved
