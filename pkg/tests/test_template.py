import numpy as np
import pytest

from biodedup.errors import (
    DegenerateSegmentError,
    DimensionError,
    EmptyTemplateError,
    FormatError,
)
from biodedup.template import (
    RECORD_SIZE,
    SEGMENT_NAMES,
    TEMPLATE_DIM,
    assemble_template,
    deserialize_template,
    normalize_segment,
    segment_layout,
    serialize_template,
)
from conftest import make_template


class TestSegmentLayout:
    def test_first_segment_is_right_thumb(self):
        seg = segment_layout()[0]
        assert (seg.name, seg.offset, seg.length) == ("finger_1", 0, 192)

    def test_last_segment_is_right_iris(self):
        seg = segment_layout()[-1]
        # 10*192 + 512 + 512 = 2944
        assert (seg.name, seg.offset, seg.length) == ("iris_right", 2944, 512)

    def test_total_coverage_is_3456(self):
        segs = segment_layout()
        assert sum(s.length for s in segs) == 3456 == TEMPLATE_DIM

    def test_segments_partition_the_vector(self):
        segs = segment_layout()
        cursor = 0
        for s in segs:
            assert s.offset == cursor
            cursor += s.length
        assert cursor == TEMPLATE_DIM

    def test_canonical_order(self):
        names = [s.name for s in segment_layout()]
        assert names == [f"finger_{i}" for i in range(1, 11)] + [
            "face",
            "iris_left",
            "iris_right",
        ]


class TestNormalizeSegment:
    def test_three_four_vector(self):
        v = np.zeros(192)
        v[0], v[1] = 3.0, 4.0
        out = normalize_segment(v)
        assert out[0] == pytest.approx(0.6, abs=1e-6)
        assert out[1] == pytest.approx(0.8, abs=1e-6)
        assert np.all(out[2:] == 0)

    def test_unit_vector_unchanged(self):
        e1 = np.zeros(512)
        e1[0] = 1.0
        out = normalize_segment(e1)
        assert np.allclose(out, e1, atol=1e-7)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateSegmentError):
            normalize_segment(np.zeros(192))

    def test_output_norm_is_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.normal(size=512) * rng.uniform(1e-6, 1e6)
            assert abs(np.linalg.norm(normalize_segment(v)) - 1.0) < 1e-6


class TestAssembleTemplate:
    def test_full_packet_all_present(self):
        t = make_template(0)
        assert t.presence.all()
        t.validate()

    def test_face_only(self):
        t = make_template(1, present=["face"])
        assert t.presence.sum() == 1
        assert t.presence[10]
        assert np.all(t.vector[:1920] == 0)
        assert np.all(t.vector[2432:] == 0)
        t.validate()

    def test_wrong_length_rejected(self):
        with pytest.raises(DimensionError):
            assemble_template({"face": np.ones(511)})

    def test_no_segments_rejected(self):
        with pytest.raises(EmptyTemplateError):
            assemble_template({})

    def test_zero_segment_rejected(self):
        with pytest.raises(DegenerateSegmentError):
            assemble_template({"face": np.zeros(512)})

    def test_absent_quality_is_zero(self):
        t = make_template(2, present=["face", "finger_1"])
        for i, name in enumerate(SEGMENT_NAMES):
            if name not in ("face", "finger_1"):
                assert t.quality[i] == 0.0

    def test_present_segments_unit_norm(self):
        t = make_template(4)
        for seg in segment_layout():
            norm = np.linalg.norm(t.segment(seg.index).astype(np.float64))
            assert abs(norm - 1.0) <= 1e-5

    def test_quality_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            assemble_template({"face": np.ones(512)}, quality={"face": 1.5})

    def test_template_is_immutable(self):
        t = make_template(5)
        with pytest.raises(ValueError):
            t.vector[0] = 9.0


class TestSerialization:
    def test_record_size_matches_format(self):
        # header 26B (magic 4 + version 2 + reserved 2 + subject 8 + presence 2
        # + reserved 8) + 13*4 quality + 3456*4 vector
        assert RECORD_SIZE == 26 + 52 + 13824 == 13902
        t = make_template(7, subject_id=123)
        assert len(serialize_template(t)) == RECORD_SIZE

    def test_vector_payload_is_13824_bytes(self):
        t = make_template(8)
        assert t.vector.nbytes == 13824

    def test_roundtrip_bit_exact(self):
        for seed in range(5):
            present = None if seed % 2 == 0 else ["face", "finger_3", "iris_left"]
            t = make_template(
                seed,
                present=present,
                subject_id=seed + 1,
                quality={"face": 0.25} if present else None,
            )
            back = deserialize_template(serialize_template(t))
            assert np.array_equal(t.vector, back.vector)
            assert np.array_equal(t.presence, back.presence)
            assert np.array_equal(t.quality, back.quality)
            assert t.subject_id == back.subject_id

    def test_missing_subject_id_roundtrips_as_none(self):
        t = make_template(9)
        assert deserialize_template(serialize_template(t)).subject_id is None

    def test_truncated_buffer_rejected(self):
        data = serialize_template(make_template(10))
        with pytest.raises(FormatError):
            deserialize_template(data[:-1])

    def test_bad_magic_rejected(self):
        data = bytearray(serialize_template(make_template(11)))
        data[0] = ord("X")
        with pytest.raises(FormatError):
            deserialize_template(bytes(data))

    def test_bad_version_rejected(self):
        data = bytearray(serialize_template(make_template(12)))
        data[4] = 99
        with pytest.raises(FormatError):
            deserialize_template(bytes(data))
