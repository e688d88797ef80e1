"""Exception types shared across the package.

Argument errors use the builtin ValueError; everything with a domain
meaning gets its own class so callers (and the HTTP layer) can map them.
"""


class BiodedupError(Exception):
    """Base class for all domain errors."""


class DimensionError(BiodedupError):
    """A vector has the wrong length for its segment."""


class DegenerateSegmentError(BiodedupError):
    """A segment vector has (near-)zero norm and cannot be normalized."""


class EmptyTemplateError(BiodedupError):
    """No usable segment remains; a template cannot be assembled."""


class FormatError(BiodedupError):
    """A serialized record or file is malformed (magic, version, size, checksum)."""


class CapacityError(BiodedupError):
    """A shard or gallery has no room for another template."""


class IdConflictError(BiodedupError):
    """A gallery id is already enrolled."""


class IncomparableError(BiodedupError):
    """Two templates share no present segment (or no weight mass); no score exists."""


class ConsistencyError(BiodedupError):
    """Internal cross-reference failure, e.g. a candidate id not found in the gallery."""


class StageError(BiodedupError):
    """A pipeline stage failed for a segment."""

    def __init__(self, segment: str, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed for segment {segment!r}: {message}")
        self.segment = segment
        self.stage = stage


class CalibrationError(BiodedupError):
    """Noise calibration could not reach the requested operating point."""

    def __init__(self, message: str, best_kappa: float | None = None, best_tmr: float | None = None):
        super().__init__(message)
        self.best_kappa = best_kappa
        self.best_tmr = best_tmr


class ResolutionError(BiodedupError):
    """Too few samples to resolve the requested error-rate target."""


class StateConflictError(BiodedupError):
    """An adjudication case is not in the state required by the operation."""


class NotFoundError(BiodedupError):
    """Unknown gallery id or case id."""
