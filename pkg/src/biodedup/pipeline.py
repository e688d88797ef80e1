"""Per-segment enrollment pipeline: segmentation, quality estimation,
presentation-attack detection, embedding, and packet-level exceptions.

The real system runs DNN models at each stage; here every stage is an
interface with a stub reference implementation so the surrounding
contract (what gets excluded, what gets flagged, what reaches the
template) is fully exercised. A segment reaches the assembled template
only if it was provided, was not a capture failure, and PAD called it
live. Everything else is recorded as a structured exception for audit.

Stub behavior:
  - segmentation passes features through,
  - quality is the payload's latent quality plus bounded uniform noise
    (+-0.05, clamped to [0, 1]),
  - PAD flips a coin at the configured operating point: a spoof input is
    caught with probability TDR, a live input is wrongly flagged with
    probability FDR,
  - embedding L2-normalizes the features.

All stubs are deterministic under a fixed seed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DegenerateSegmentError, DimensionError, EmptyTemplateError, StageError
from .template import (
    MultiBiometricTemplate,
    SEGMENT_NAMES,
    assemble_template,
    normalize_segment,
    segment_index,
    segment_layout,
)

QUALITY_STUB_NOISE = 0.05
DEFAULT_LOW_QUALITY_FLAG = 0.3  # segments below this are flagged, never dropped


def modality_group(segment_name: str) -> str:
    if segment_name.startswith("finger_"):
        return "finger"
    if segment_name == "face":
        return "face"
    if segment_name.startswith("iris_"):
        return "iris"
    raise ValueError(f"unknown segment name {segment_name!r}")


@dataclass(frozen=True)
class StubOperatingPoint:
    """(TDR, FDR) pair for a stub detector."""

    tdr: float
    fdr: float

    def __post_init__(self):
        if not (0.0 <= self.tdr <= 1.0 and 0.0 <= self.fdr <= 1.0):
            raise ValueError("rates must be in [0, 1]")


DEFAULT_PAD_POINTS: dict[str, StubOperatingPoint] = {
    "finger": StubOperatingPoint(tdr=0.995, fdr=0.005),
    "face": StubOperatingPoint(tdr=0.995, fdr=0.005),
    "iris": StubOperatingPoint(tdr=0.99, fdr=0.01),
}


class PadVerdict(enum.Enum):
    LIVE = "Live"
    SPOOF = "Spoof"


@dataclass(frozen=True)
class PadOutcome:
    verdict: PadVerdict
    confidence: float


@dataclass
class SegmentPayload:
    """Opaque per-segment capture payload as the stubs understand it."""

    features: np.ndarray
    latent_quality: float = 1.0
    live: bool = True  # ground-truth liveness, consumed only by the PAD stub


@dataclass
class EnrollmentPacket:
    packet_id: str
    segments: dict[str, SegmentPayload] = field(default_factory=dict)
    failure_to_acquire: set[str] = field(default_factory=set)
    operator: str = ""

    def __post_init__(self):
        for name in list(self.segments) + list(self.failure_to_acquire):
            segment_index(name)  # validates the name
        overlap = set(self.segments) & self.failure_to_acquire
        if overlap:
            raise ValueError(
                f"failure-to-acquire segments must carry no payload: {sorted(overlap)}"
            )


@dataclass(frozen=True)
class ExceptionRecord:
    packet_id: str
    segment: str
    stage: str
    code: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "packet_id": self.packet_id,
                "segment": self.segment,
                "stage": self.stage,
                "code": self.code,
            }
        )


def pad_stub(
    live: bool, op: StubOperatingPoint, rng: np.random.Generator
) -> PadOutcome:
    """Coin-flip PAD at a fixed operating point.

    Spoof inputs are flagged with probability op.tdr; live inputs are
    wrongly flagged with probability op.fdr.
    """
    u = float(rng.random())
    flagged = (u < op.tdr) if not live else (u < op.fdr)
    verdict = PadVerdict.SPOOF if flagged else PadVerdict.LIVE
    return PadOutcome(verdict=verdict, confidence=0.5 + 0.5 * float(rng.random()))


def quality_stub(latent_quality: float, rng: np.random.Generator) -> float:
    """Latent quality plus bounded noise, clamped to [0, 1]."""
    noisy = latent_quality + float(rng.uniform(-QUALITY_STUB_NOISE, QUALITY_STUB_NOISE))
    return float(np.clip(noisy, 0.0, 1.0))


class Segmenter:
    def segment(self, name: str, payload: SegmentPayload) -> np.ndarray:
        raise NotImplementedError


class QualityEstimator:
    def estimate(self, name: str, payload: SegmentPayload) -> float:
        raise NotImplementedError


class PadDetector:
    def detect(self, name: str, payload: SegmentPayload) -> PadOutcome:
        raise NotImplementedError


class Embedder:
    def embed(self, name: str, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class PassthroughSegmenter(Segmenter):
    def segment(self, name, payload):
        return np.asarray(payload.features, dtype=np.float32)


class StubQualityEstimator(QualityEstimator):
    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def estimate(self, name, payload):
        return quality_stub(payload.latent_quality, self._rng)


class StubPadDetector(PadDetector):
    def __init__(
        self,
        rng: np.random.Generator,
        operating_points: Optional[Mapping[str, StubOperatingPoint]] = None,
    ):
        self._rng = rng
        self._points = dict(DEFAULT_PAD_POINTS)
        if operating_points:
            self._points.update(operating_points)

    def detect(self, name, payload):
        return pad_stub(payload.live, self._points[modality_group(name)], self._rng)


class UnitNormEmbedder(Embedder):
    """Stands in for the per-modality embedding networks: checks the
    expected dimensionality and projects onto the unit hypersphere."""

    def embed(self, name, features):
        arr = np.asarray(features, dtype=np.float32)
        expected = segment_layout()[segment_index(name)].length
        if arr.shape != (expected,):
            raise DimensionError(
                f"segment {name!r} features have shape {arr.shape}, expected ({expected},)"
            )
        return normalize_segment(arr)


@dataclass
class PipelineStages:
    segmenter: Segmenter
    quality: QualityEstimator
    pad: PadDetector
    embedder: Embedder
    low_quality_flag: float = DEFAULT_LOW_QUALITY_FLAG


def default_stages(
    seed: int = 0,
    pad_points: Optional[Mapping[str, StubOperatingPoint]] = None,
    low_quality_flag: float = DEFAULT_LOW_QUALITY_FLAG,
) -> PipelineStages:
    rng = np.random.default_rng(seed)
    return PipelineStages(
        segmenter=PassthroughSegmenter(),
        quality=StubQualityEstimator(rng),
        pad=StubPadDetector(rng, pad_points),
        embedder=UnitNormEmbedder(),
        low_quality_flag=low_quality_flag,
    )


def process_enrollment_packet(
    packet: EnrollmentPacket,
    stages: PipelineStages,
    subject_id: Optional[int] = None,
) -> tuple[MultiBiometricTemplate, list[ExceptionRecord]]:
    """Run the stage chain per segment and assemble the surviving template.

    Returns the template plus every exception recorded along the way.
    Raises EmptyTemplateError when nothing survives and StageError when a
    stage fails outright (bad feature length, degenerate vector).
    """
    if not packet.segments and not packet.failure_to_acquire:
        raise EmptyTemplateError(f"packet {packet.packet_id} carries no segments")
    exceptions: list[ExceptionRecord] = []
    vectors: dict[str, np.ndarray] = {}
    qualities: dict[str, float] = {}

    for name in sorted(packet.failure_to_acquire, key=segment_index):
        exceptions.append(
            ExceptionRecord(packet.packet_id, name, "capture", "failure_to_acquire")
        )

    for name in sorted(packet.segments, key=segment_index):
        payload = packet.segments[name]
        try:
            features = stages.segmenter.segment(name, payload)
            q = stages.quality.estimate(name, payload)
            outcome = stages.pad.detect(name, payload)
            if outcome.verdict is PadVerdict.SPOOF:
                exceptions.append(ExceptionRecord(packet.packet_id, name, "pad", "spoof"))
                continue
            if q < stages.low_quality_flag:
                # flagged for audit; enrollment still proceeds (no quality floor)
                exceptions.append(
                    ExceptionRecord(packet.packet_id, name, "quality", "low_quality")
                )
            embedding = stages.embedder.embed(name, features)
        except (DimensionError, DegenerateSegmentError) as exc:
            raise StageError(name, "embed", str(exc)) from exc
        vectors[name] = embedding
        qualities[name] = q

    if not vectors:
        raise EmptyTemplateError(
            f"packet {packet.packet_id}: every segment was excluded"
        )
    template = assemble_template(vectors, qualities, subject_id=subject_id)
    return template, exceptions


def write_exception_log(records: list[ExceptionRecord], path) -> None:
    with open(path, "a") as f:
        for rec in records:
            f.write(rec.to_json_line() + "\n")


def packet_from_identity_observation(
    packet_id: str,
    template_like: MultiBiometricTemplate,
    live: bool = True,
) -> EnrollmentPacket:
    """Convenience: wrap an observed template's segments as a raw packet.

    Used by the synthetic harness and tests to drive the full pipeline;
    absent segments become failure-to-acquire flags.
    """
    segments = {}
    fta = set()
    for name in SEGMENT_NAMES:
        i = segment_index(name)
        if template_like.presence[i]:
            segments[name] = SegmentPayload(
                features=np.array(template_like.segment(i)),
                latent_quality=float(template_like.quality[i]),
                live=live,
            )
        else:
            fta.add(name)
    return EnrollmentPacket(packet_id=packet_id, segments=segments, failure_to_acquire=fta)
