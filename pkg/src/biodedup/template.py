"""Fixed-length multi-biometric template: layout, assembly, serialization.

A template is a single 3,456-dimensional float32 vector laid out as 13
contiguous segments in canonical order:

    fingers 1..10 (192 dims each), face (512), iris left (512), iris right (512)

Finger positions 1-5 are the right hand thumb through little finger,
positions 6-10 the left hand in the same order. Present segments are unit
L2 norm; absent segments are exactly zero and flagged in a 13-bit presence
mask. A 13-entry quality vector (one score in [0, 1] per segment, 0 for
absent segments) rides along for quality-adaptive fusion.

Binary record format (little-endian), 13,902 bytes total:

    magic "BTPL" (4B) | version u16 = 1 | reserved u16 | subject_id u64
    (0 = none) | presence bitmask u16 (bit i = segment i, bits 13-15 zero)
    | reserved u64 | 13 x quality f32 | 3456 x vector f32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import DegenerateSegmentError, DimensionError, EmptyTemplateError, FormatError

FINGER_DIM = 192
FACE_DIM = 512
IRIS_DIM = 512
TEMPLATE_DIM = 10 * FINGER_DIM + FACE_DIM + 2 * IRIS_DIM  # 3456
N_SEGMENTS = 13

SEGMENT_NAMES = tuple(
    [f"finger_{i}" for i in range(1, 11)] + ["face", "iris_left", "iris_right"]
)
FINGER_INDICES = tuple(range(10))
FACE_INDEX = 10
IRIS_LEFT_INDEX = 11
IRIS_RIGHT_INDEX = 12

MIN_SEGMENT_NORM = 1e-12
NORM_TOL = 1e-5

_RECORD_MAGIC = b"BTPL"
_RECORD_VERSION = 1
_HEADER_STRUCT = struct.Struct("<4sHHQH8x")  # magic, version, reserved, subject_id, presence, pad
RECORD_SIZE = _HEADER_STRUCT.size + 4 * N_SEGMENTS + 4 * TEMPLATE_DIM  # 13,902


@dataclass(frozen=True)
class ModalitySegment:
    """One contiguous slice of the template vector."""

    name: str
    index: int
    offset: int
    length: int

    @property
    def stop(self) -> int:
        return self.offset + self.length


def _build_layout() -> tuple[ModalitySegment, ...]:
    segments = []
    offset = 0
    for i, name in enumerate(SEGMENT_NAMES):
        length = FINGER_DIM if i in FINGER_INDICES else (FACE_DIM if i == FACE_INDEX else IRIS_DIM)
        segments.append(ModalitySegment(name=name, index=i, offset=offset, length=length))
        offset += length
    assert offset == TEMPLATE_DIM
    return tuple(segments)


_LAYOUT = _build_layout()
SEGMENT_SLICES = tuple(slice(s.offset, s.stop) for s in _LAYOUT)

# Maps each of the 3456 dims to its owning segment index; used to expand
# per-segment scalars (weights) to full-vector scale factors.
SEGMENT_OF_DIM = np.empty(TEMPLATE_DIM, dtype=np.int64)
for _seg in _LAYOUT:
    SEGMENT_OF_DIM[_seg.offset : _seg.stop] = _seg.index


def segment_layout() -> tuple[ModalitySegment, ...]:
    """Return the 13 canonical segments (a partition of [0, 3456))."""
    return _LAYOUT


def segment_index(name: str) -> int:
    try:
        return SEGMENT_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown segment name {name!r}") from None


def normalize_segment(v: np.ndarray) -> np.ndarray:
    """Scale v to unit L2 norm. Raises DegenerateSegmentError near zero norm."""
    v = np.asarray(v, dtype=np.float32)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm <= MIN_SEGMENT_NORM:
        raise DegenerateSegmentError(f"segment norm {norm:.3e} too small to normalize")
    return (v.astype(np.float64) / norm).astype(np.float32)


@dataclass(frozen=True)
class MultiBiometricTemplate:
    """Immutable assembled template. Arrays are read-only after construction."""

    vector: np.ndarray  # (3456,) float32
    presence: np.ndarray  # (13,) bool
    quality: np.ndarray  # (13,) float32
    subject_id: Optional[int] = None

    def __post_init__(self):
        self.vector.flags.writeable = False
        self.presence.flags.writeable = False
        self.quality.flags.writeable = False

    def segment(self, index: int) -> np.ndarray:
        return self.vector[SEGMENT_SLICES[index]]

    def validate(self) -> None:
        """Check all structural invariants; raises on violation."""
        if self.vector.shape != (TEMPLATE_DIM,) or self.vector.dtype != np.float32:
            raise DimensionError("vector must be float32 of length 3456")
        if self.presence.shape != (N_SEGMENTS,) or self.quality.shape != (N_SEGMENTS,):
            raise DimensionError("presence/quality must have 13 entries")
        if not bool(self.presence.any()):
            raise EmptyTemplateError("no present segment")
        for seg in _LAYOUT:
            part = self.segment(seg.index)
            if self.presence[seg.index]:
                norm = float(np.linalg.norm(part.astype(np.float64)))
                if abs(norm - 1.0) > NORM_TOL:
                    raise DegenerateSegmentError(
                        f"present segment {seg.name} has norm {norm:.7f}"
                    )
            else:
                if part.any():
                    raise DegenerateSegmentError(f"absent segment {seg.name} is not zero")
                if self.quality[seg.index] != 0.0:
                    raise DegenerateSegmentError(f"absent segment {seg.name} has quality != 0")


def assemble_template(
    segments: Mapping[str, np.ndarray],
    quality: Optional[Mapping[str, float]] = None,
    subject_id: Optional[int] = None,
) -> MultiBiometricTemplate:
    """Build a template from per-segment vectors keyed by canonical name.

    Provided segments are L2-normalized and written at their canonical
    offsets; everything else is zero-filled with presence False and
    quality 0. Segment quality defaults to 1.0 when not given.
    """
    if not segments:
        raise EmptyTemplateError("no segments provided")
    vector = np.zeros(TEMPLATE_DIM, dtype=np.float32)
    presence = np.zeros(N_SEGMENTS, dtype=bool)
    qual = np.zeros(N_SEGMENTS, dtype=np.float32)
    for name, values in segments.items():
        seg = _LAYOUT[segment_index(name)]
        arr = np.asarray(values, dtype=np.float32)
        if arr.shape != (seg.length,):
            raise DimensionError(
                f"segment {name!r} has length {arr.shape}, expected ({seg.length},)"
            )
        vector[seg.offset : seg.stop] = normalize_segment(arr)
        presence[seg.index] = True
        q = 1.0 if quality is None else float(quality.get(name, 1.0))
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quality for {name!r} must be in [0, 1], got {q}")
        qual[seg.index] = q
    return MultiBiometricTemplate(
        vector=vector, presence=presence, quality=qual, subject_id=subject_id
    )


def presence_to_mask(presence: np.ndarray) -> int:
    mask = 0
    for i in range(N_SEGMENTS):
        if presence[i]:
            mask |= 1 << i
    return mask


def mask_to_presence(mask: int) -> np.ndarray:
    if mask >> N_SEGMENTS:
        raise FormatError(f"presence mask {mask:#06x} has bits above segment 12 set")
    return np.array([(mask >> i) & 1 == 1 for i in range(N_SEGMENTS)], dtype=bool)


def serialize_template(t: MultiBiometricTemplate) -> bytes:
    header = _HEADER_STRUCT.pack(
        _RECORD_MAGIC,
        _RECORD_VERSION,
        0,
        0 if t.subject_id is None else int(t.subject_id),
        presence_to_mask(t.presence),
    )
    return header + t.quality.astype("<f4").tobytes() + t.vector.astype("<f4").tobytes()


def deserialize_template(data: bytes) -> MultiBiometricTemplate:
    if len(data) != RECORD_SIZE:
        raise FormatError(f"record is {len(data)} bytes, expected {RECORD_SIZE}")
    magic, version, _reserved, subject_id, mask = _HEADER_STRUCT.unpack_from(data, 0)
    if magic != _RECORD_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _RECORD_VERSION:
        raise FormatError(f"unsupported record version {version}")
    off = _HEADER_STRUCT.size
    quality = np.frombuffer(data, dtype="<f4", count=N_SEGMENTS, offset=off).astype(np.float32)
    off += 4 * N_SEGMENTS
    vector = np.frombuffer(data, dtype="<f4", count=TEMPLATE_DIM, offset=off).astype(np.float32)
    return MultiBiometricTemplate(
        vector=vector,
        presence=mask_to_presence(mask),
        quality=quality,
        subject_id=None if subject_id == 0 else int(subject_id),
    )
