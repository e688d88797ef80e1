import numpy as np
import pytest

from biodedup.errors import (
    CapacityError,
    ConsistencyError,
    FormatError,
    IdConflictError,
)
from biodedup.fusion import default_weights, probe_prescale
from biodedup.gallery import (
    Gallery,
    GalleryShard,
    capacity_estimate,
    expected_file_size,
    load_gallery,
    merge_topk,
    rescore_candidates,
    save_gallery,
    shard_search_topk,
)
from conftest import make_template
from oracles import naive_search, naive_search_fast


def build_gallery(n, shard_size=64, seed0=0):
    g = Gallery(shard_size=shard_size)
    for i in range(n):
        g.add(make_template(seed0 + i), gallery_id=i + 1)
    return g


class TestShardInsert:
    def test_first_insert_is_row_zero(self):
        shard = GalleryShard(capacity=4)
        assert shard.insert(make_template(0), gallery_id=1) == 0

    def test_insert_at_capacity_rejected(self):
        shard = GalleryShard(capacity=2)
        shard.insert(make_template(0), 1)
        shard.insert(make_template(1), 2)
        with pytest.raises(CapacityError):
            shard.insert(make_template(2), 3)

    def test_duplicate_id_rejected(self):
        shard = GalleryShard(capacity=4)
        shard.insert(make_template(0), 7)
        with pytest.raises(IdConflictError):
            shard.insert(make_template(1), 7)

    def test_inserted_row_is_searchable(self):
        shard = GalleryShard(capacity=8)
        t = make_template(3)
        shard.insert(t, 5)
        pre = probe_prescale(t, default_weights())
        lists = shard_search_topk(shard, pre[None, :], k=1)
        assert lists[0].entries[0].gallery_id == 5


class TestShardSearch:
    def test_self_retrieval_raw_dot(self):
        shard = GalleryShard(capacity=16)
        t = make_template(9)
        shard.insert(t, 1)
        for i in range(5):
            shard.insert(make_template(20 + i), i + 2)
        pre = probe_prescale(t, default_weights())
        top = shard_search_topk(shard, pre[None, :], k=1)[0].entries[0]
        assert top.gallery_id == 1
        assert top.raw_dot == pytest.approx(40.2, abs=1e-3)

    def test_matches_full_scan_oracle_on_1000_rows(self):
        from biodedup import synth

        cfg = synth.default_config()
        pop = synth.IdentityPopulation(cfg, seed=88)
        rng = np.random.default_rng(0)
        shard = GalleryShard(capacity=1000)
        vectors, presence, quality = pop.observe_indices(
            np.arange(1000, dtype=np.int64), rng
        )
        shard.insert_rows(vectors, np.arange(1, 1001, dtype=np.uint64), presence, quality)
        probe = make_template(5000)
        pre = probe_prescale(probe, default_weights())
        got = shard_search_topk(shard, pre[None, :], k=10)[0]
        dots = vectors @ pre
        order = np.lexsort((np.arange(1, 1001), -dots.astype(np.float64)))[:10]
        assert got.ids() == [int(i) + 1 for i in order]
        for c, row in zip(got.entries, order):
            assert c.raw_dot == dots[row]

    def test_empty_shard_returns_empty(self):
        shard = GalleryShard(capacity=4)
        pre = probe_prescale(make_template(0), default_weights())
        assert len(shard_search_topk(shard, pre[None, :], k=3)[0]) == 0

    def test_k_zero_rejected(self):
        shard = GalleryShard(capacity=4)
        shard.insert(make_template(0), 1)
        pre = probe_prescale(make_template(1), default_weights())
        with pytest.raises(ValueError):
            shard_search_topk(shard, pre[None, :], k=0)


class TestMergeTopk:
    def test_single_list_identity(self):
        g = build_gallery(6, shard_size=10)
        pre = probe_prescale(make_template(99), default_weights())
        lists = shard_search_topk(g.shards[0], pre[None, :], k=6)
        merged = merge_topk([lists[0]], k=6)
        assert merged.ids() == lists[0].ids()

    def test_merge_equals_sorted_union(self):
        g = build_gallery(40, shard_size=7)
        pre = probe_prescale(make_template(99), default_weights())
        per_shard = [shard_search_topk(s, pre[None, :], k=40)[0] for s in g.shards]
        merged = merge_topk(per_shard, k=10)
        every = [(c.gallery_id, c.raw_dot) for lst in per_shard for c in lst.entries]
        every.sort(key=lambda t: (-t[1], t[0]))
        assert merged.ids() == [gid for gid, _ in every[:10]]

    def test_k_larger_than_total(self):
        g = build_gallery(3, shard_size=2)
        pre = probe_prescale(make_template(42), default_weights())
        per_shard = [shard_search_topk(s, pre[None, :], k=5)[0] for s in g.shards]
        merged = merge_topk(per_shard, k=50)
        assert len(merged) == 3


class TestRescore:
    def test_full_presence_rescore_is_raw_over_mass(self):
        g = build_gallery(20, shard_size=20)
        probe = make_template(500)
        pre = probe_prescale(probe, default_weights())
        raw = shard_search_topk(g.shards[0], pre[None, :], k=20)[0]
        rescored = rescore_candidates(probe, raw, g, default_weights())
        # full presence on both sides: renormalization is a constant /40.2
        assert rescored.ids() == raw.ids()
        for c_raw, c_new in zip(raw.entries, rescored.entries):
            assert c_new.fused.value == pytest.approx(c_raw.raw_dot / 40.2, abs=1e-4)

    def test_missing_irides_candidate_can_outrank(self):
        from biodedup.template import SEGMENT_NAMES, assemble_template

        w = default_weights()
        probe = make_template(600)
        # candidate A: identical except irides absent -> renormalized to 1.0
        segs = {
            n: np.array(probe.segment(i))
            for i, n in enumerate(SEGMENT_NAMES)
            if not n.startswith("iris")
        }
        cand_a = assemble_template(segs)
        cand_b = make_template(601)  # full presence, unrelated
        g = Gallery(shard_size=10)
        g.add(cand_a, 1)
        g.add(cand_b, 2)
        res = g.search([probe], w, k=2, scan_k=10)[0]
        assert res.entries[0].gallery_id == 1
        assert res.entries[0].fused.value == pytest.approx(1.0, abs=1e-5)
        assert res.entries[0].fused.effective_weight_sum == pytest.approx(27.7)

    def test_unknown_id_is_consistency_error(self):
        g = build_gallery(3, shard_size=4)
        probe = make_template(0)
        pre = probe_prescale(probe, default_weights())
        raw = shard_search_topk(g.shards[0], pre[None, :], k=3)[0]
        raw.entries[0].gallery_id = 999
        with pytest.raises(ConsistencyError):
            rescore_candidates(probe, raw, g, default_weights())

    def test_empty_candidates(self):
        g = build_gallery(2, shard_size=4)
        from biodedup.gallery import CandidateList

        out = rescore_candidates(make_template(0), CandidateList(), g, default_weights())
        assert len(out) == 0

    def test_incomparable_candidates_dropped(self):
        probe = make_template(700, present=["face"])
        fingers_only = make_template(
            701, present=[f"finger_{i}" for i in range(1, 11)]
        )
        both = make_template(702)
        g = Gallery(shard_size=10)
        g.add(fingers_only, 1)
        g.add(both, 2)
        res = g.search([probe], default_weights(), k=5, scan_k=10)[0]
        assert res.ids() == [2]


class TestGallerySearch:
    def test_matches_oracle_small(self):
        g = build_gallery(50, shard_size=16)
        w = default_weights()
        probe = make_template(900, present=["face", "finger_1", "iris_left"])
        got = g.search([probe], w, k=10, scan_k=50)[0]
        want = naive_search(g, probe, w, 10)
        assert got.ids() == [gid for gid, _ in want]
        for c, (_, val) in zip(got.entries, want):
            assert c.fused.value == pytest.approx(val, abs=1e-4)

    def test_two_oracles_agree(self):
        g = build_gallery(30, shard_size=8)
        probe = make_template(901)
        w = default_weights()
        slow = naive_search(g, probe, w, 10)
        fast = naive_search_fast(g, probe, w, 10)
        assert [gid for gid, _ in slow] == [gid for gid, _ in fast]
        for (_, a), (_, b) in zip(slow, fast):
            assert a == pytest.approx(b, abs=1e-12)

    def test_shard_layout_independent(self):
        templates = [make_template(2000 + i) for i in range(30)]
        w = default_weights()
        probes = [make_template(3000), make_template(3001, present=["face", "iris_left"])]
        results = []
        for shard_size in (5, 12, 30):
            g = Gallery(shard_size=shard_size)
            for i, t in enumerate(templates):
                g.add(t, i + 1)
            res = g.search(probes, w, k=7, scan_k=30)
            results.append(
                [[(c.gallery_id, c.fused.value) for c in r.entries] for r in res]
            )
        assert results[0] == results[1] == results[2]

    def test_batch_equals_single(self):
        g = build_gallery(25, shard_size=9)
        w = default_weights()
        probes = [make_template(4000 + i) for i in range(4)]
        batch = g.search(probes, w, k=5, scan_k=25)
        for i, p in enumerate(probes):
            single = g.search([p], w, k=5, scan_k=25)[0]
            assert single.ids() == batch[i].ids()
            for a, b in zip(single.entries, batch[i].entries):
                assert a.fused.value == b.fused.value

    def test_scan_mode_self_retrieval(self):
        g = build_gallery(40, shard_size=40)
        t = g.template_of(17)
        res = g.search([t], default_weights(), k=3)[0]  # scan_k = 12
        assert res.entries[0].gallery_id == 17
        assert res.entries[0].fused.value == pytest.approx(1.0, abs=1e-4)

    def test_empty_gallery(self):
        g = Gallery(shard_size=4)
        assert g.search([make_template(0)], default_weights(), k=5) == [
            pytest.approx(r) for r in g.search([make_template(0)], default_weights(), k=5)
        ]
        assert len(g.search([make_template(0)], default_weights(), k=5)[0]) == 0


class TestCapacityEstimate:
    def test_eighty_gb_gpu(self):
        # 80e9 / (3456 * 4) = 5,787,037.03 -> consistent with 5M per device
        assert capacity_estimate(80 * 10**9, 3456, 4) == 5_787_037
        assert capacity_estimate(80 * 10**9, 3456, 4) >= 5 * 10**6

    def test_single_template(self):
        assert capacity_estimate(13824, 3456, 4) == 1

    def test_desk_scale_budget(self):
        assert capacity_estimate(8 * 10**9, 3456, 4) == 578_703

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            capacity_estimate(0, 3456, 4)


class TestGalleryFile:
    def test_roundtrip(self, tmp_path):
        g = build_gallery(37, shard_size=10)
        path = tmp_path / "g.bgal"
        save_gallery(g, path)
        assert path.stat().st_size == expected_file_size(37) == 24 + 37 * 13902
        loaded = load_gallery(path, shard_size=10)
        assert loaded.n_rows == 37
        m1, i1, p1, q1 = g.snapshot_arrays()
        m2, i2, p2, q2 = loaded.snapshot_arrays()
        assert np.array_equal(m1, m2)
        assert np.array_equal(i1, i2)
        assert np.array_equal(p1, p2)
        assert np.array_equal(q1, q2)

    def test_corrupted_checksum_rejected(self, tmp_path):
        g = build_gallery(5, shard_size=10)
        path = tmp_path / "g.bgal"
        save_gallery(g, path)
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_gallery(path)

    def test_bad_magic_rejected(self, tmp_path):
        g = build_gallery(2, shard_size=10)
        path = tmp_path / "g.bgal"
        save_gallery(g, path)
        data = bytearray(path.read_bytes())
        data[0] = ord("Z")
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_gallery(path)

    def test_truncated_rejected(self, tmp_path):
        g = build_gallery(3, shard_size=10)
        path = tmp_path / "g.bgal"
        save_gallery(g, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(FormatError):
            load_gallery(path)

    def test_gallery_capacity_enforced(self):
        g = Gallery(shard_size=4, max_rows=2)
        g.add(make_template(0))
        g.add(make_template(1))
        with pytest.raises(CapacityError):
            g.add(make_template(2))
