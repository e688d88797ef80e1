"""Score-level fusion: weighted per-segment inner products with
presence renormalization, quality adaptation and threshold decisions.

The fused score of two templates is the weighted average of per-segment
cosines over segments present in BOTH templates:

    value = sum_i w_i * <q_i, g_i> / sum_{i present in both} w_i

Renormalizing by the pair's present-weight mass keeps self-match = 1 and
makes scores comparable across presence patterns, so a subject missing
segments is not penalized structurally. Weight scale cancels: c*w gives
identical values for any c > 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import IncomparableError
from .template import (
    MultiBiometricTemplate,
    N_SEGMENTS,
    SEGMENT_NAMES,
    SEGMENT_OF_DIM,
    SEGMENT_SLICES,
)

# Weight ratio face : iris : thumb+index finger : other finger = 12.5 : 6.25 : 2.3 : 1.
# Finger positions 1, 6 are thumbs and 2, 7 index fingers (right hand then left).
FACE_WEIGHT = 12.5
IRIS_WEIGHT = 6.25
THUMB_INDEX_WEIGHT = 2.3
OTHER_FINGER_WEIGHT = 1.0
_THUMB_INDEX_POSITIONS = (1, 2, 6, 7)  # 1-based finger positions


def default_weights() -> np.ndarray:
    """The default (adult) 13-entry weight vector; raw sum 40.2."""
    w = np.empty(N_SEGMENTS, dtype=np.float64)
    for pos in range(1, 11):
        w[pos - 1] = THUMB_INDEX_WEIGHT if pos in _THUMB_INDEX_POSITIONS else OTHER_FINGER_WEIGHT
    w[10] = FACE_WEIGHT
    w[11] = IRIS_WEIGHT
    w[12] = IRIS_WEIGHT
    return w


def validate_weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (N_SEGMENTS,):
        raise ValueError(f"weights must have {N_SEGMENTS} entries, got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    return w


def weights_from_profile(profile: dict[str, float]) -> np.ndarray:
    """Build a weight vector from a {segment_name: weight} mapping."""
    missing = set(SEGMENT_NAMES) - set(profile)
    if missing:
        raise ValueError(f"weight profile missing segments: {sorted(missing)}")
    return validate_weights(np.array([profile[name] for name in SEGMENT_NAMES]))


@dataclass(frozen=True)
class FusedScore:
    value: float
    per_segment: np.ndarray  # (13,) float64 raw inner products, 0 where not comparable
    effective_weight_sum: float


@dataclass(frozen=True)
class DecisionThreshold:
    tau: float

    def __post_init__(self):
        if not -1.0 <= self.tau <= 1.0:
            raise ValueError(f"threshold must be in [-1, 1], got {self.tau}")


class Decision(enum.Enum):
    DUPLICATE = "Duplicate"
    UNIQUE = "Unique"


def fused_score(
    q: MultiBiometricTemplate, g: MultiBiometricTemplate, w: np.ndarray
) -> FusedScore:
    """Presence-renormalized weighted fusion of per-segment inner products.

    Raises IncomparableError when the two templates share no present
    segment (or the shared segments carry zero weight); a silent 0 would
    be indistinguishable from orthogonality.
    """
    w = validate_weights(w)
    both = q.presence & g.presence
    per_segment = np.zeros(N_SEGMENTS, dtype=np.float64)
    for i in np.nonzero(both)[0]:
        sl = SEGMENT_SLICES[i]
        per_segment[i] = float(
            np.dot(q.vector[sl].astype(np.float64), g.vector[sl].astype(np.float64))
        )
    mass = float(w[both].sum())
    if not both.any() or mass <= 0.0:
        raise IncomparableError(
            "templates share no present segment with positive weight"
        )
    value = float(np.clip(np.dot(w, per_segment) / mass, -1.0, 1.0))
    return FusedScore(value=value, per_segment=per_segment, effective_weight_sum=mass)


def quality_adapted_weights(
    w: np.ndarray, q_probe: np.ndarray, q_gallery: np.ndarray
) -> np.ndarray:
    """Scale each weight by min(probe, gallery) quality for that segment.

    A comparison is only as reliable as its worse sample; a segment with
    quality 0 on either side drops out entirely.
    """
    w = validate_weights(w)
    qp = np.asarray(q_probe, dtype=np.float64)
    qg = np.asarray(q_gallery, dtype=np.float64)
    if qp.shape != (N_SEGMENTS,) or qg.shape != (N_SEGMENTS,):
        raise ValueError("quality vectors must have 13 entries")
    return w * np.minimum(qp, qg)


def probe_prescale(q: MultiBiometricTemplate, w: np.ndarray) -> np.ndarray:
    """Fold weights into the probe so one flat inner product yields the
    unnormalized weighted sum: <prescale(q, w), g> = sum_i w_i <q_i, g_i>."""
    w = validate_weights(w)
    return (q.vector * w[SEGMENT_OF_DIM].astype(np.float32)).astype(np.float32)


def pair_weight_mass(
    w: np.ndarray, probe_presence: np.ndarray, gallery_presence: np.ndarray
) -> float:
    """Weight mass over segments present in both templates."""
    return float(np.asarray(w, dtype=np.float64)[probe_presence & gallery_presence].sum())


def decide(s: FusedScore, tau: DecisionThreshold) -> Decision:
    """Duplicate iff value >= tau (boundary counts as duplicate)."""
    return Decision.DUPLICATE if s.value >= tau.tau else Decision.UNIQUE
