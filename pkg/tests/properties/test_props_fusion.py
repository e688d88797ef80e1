"""Property suites: fusion symmetry, scale invariance, bounds, consistency."""

import numpy as np
from hypothesis import assume, given, strategies as st

from biodedup.errors import IncomparableError
from biodedup.fusion import (
    default_weights,
    fused_score,
    pair_weight_mass,
    probe_prescale,
)
from biodedup.template import SEGMENT_NAMES, SEGMENT_SLICES, assemble_template

_POOL = {}


def pooled_template(seed: int, mask: int):
    """Template cache keyed by (seed, presence mask); mask bit i = segment i."""
    key = (seed % 64, mask)
    if key not in _POOL:
        names = [n for i, n in enumerate(SEGMENT_NAMES) if (mask >> i) & 1]
        if not names:
            names = ["face"]
        rng = np.random.default_rng(key[0] * 8192 + mask)
        segs = {
            n: rng.normal(size=192 if n.startswith("finger") else 512) for n in names
        }
        _POOL[key] = assemble_template(segs)
    return _POOL[key]


masks = st.integers(1, 2**13 - 1)
seeds = st.integers(0, 2**32 - 1)


@given(s1=seeds, m1=masks, s2=seeds, m2=masks)
def test_symmetry_exact(s1, m1, s2, m2):
    assume(m1 & m2)
    a, b = pooled_template(s1, m1), pooled_template(s2, m2)
    w = default_weights()
    assert fused_score(a, b, w).value == fused_score(b, a, w).value


@given(s1=seeds, m1=masks, s2=seeds, m2=masks, c=st.floats(1e-6, 1e6))
def test_weight_scale_invariance(s1, m1, s2, m2, c):
    assume(m1 & m2)
    a, b = pooled_template(s1, m1), pooled_template(s2, m2)
    w = default_weights()
    v1 = fused_score(a, b, w).value
    v2 = fused_score(a, b, w * c).value
    assert abs(v1 - v2) <= 1e-12


@given(s1=seeds, m1=masks, s2=seeds, m2=masks)
def test_value_bounded(s1, m1, s2, m2):
    assume(m1 & m2)
    a, b = pooled_template(s1, m1), pooled_template(s2, m2)
    s = fused_score(a, b, default_weights())
    assert -1.0 <= s.value <= 1.0


@given(s1=seeds, m1=masks, s2=seeds, m2=masks)
def test_two_pass_consistency(s1, m1, s2, m2):
    """Prescaled flat dot renormalized by pair mass == direct fused score."""
    assume(m1 & m2)
    q, g = pooled_template(s1, m1), pooled_template(s2, m2)
    w = default_weights()
    raw = float(
        probe_prescale(q, w).astype(np.float64) @ g.vector.astype(np.float64)
    )
    mass = pair_weight_mass(w, q.presence, g.presence)
    direct = fused_score(q, g, w)
    assert abs(raw / mass - direct.value) <= 1e-4
    assert mass == direct.effective_weight_sum


@given(s1=seeds, s2=seeds, all_bits=masks, selector=st.integers(0, 2**13 - 1))
def test_disjoint_presence_raises(s1, s2, all_bits, selector):
    m1 = all_bits & selector
    m2 = all_bits & ~selector & (2**13 - 1)
    assume(m1 and m2)
    a, b = pooled_template(s1, m1), pooled_template(s2, m2)
    try:
        fused_score(a, b, default_weights())
        assert False, "expected IncomparableError"
    except IncomparableError:
        pass


@given(
    thetas=st.lists(st.floats(0.0, np.pi), min_size=13, max_size=13),
    bump=st.integers(0, 12),
    delta=st.floats(0.01, 1.0),
)
def test_monotone_in_per_segment_cosine(thetas, bump, delta):
    """Raising one segment's inner product never lowers the fused value."""
    w = default_weights()

    def build(angles):
        segs = {}
        for i, name in enumerate(SEGMENT_NAMES):
            dim = SEGMENT_SLICES[i].stop - SEGMENT_SLICES[i].start
            v = np.zeros(dim)
            v[0], v[1] = np.cos(angles[i]), np.sin(angles[i])
            segs[name] = v
        return assemble_template(segs)

    base = np.zeros(13)
    ref_segs = {}
    for i, name in enumerate(SEGMENT_NAMES):
        dim = SEGMENT_SLICES[i].stop - SEGMENT_SLICES[i].start
        e1 = np.zeros(dim)
        e1[0] = 1.0
        ref_segs[name] = e1
    ref = assemble_template(ref_segs)

    lowered = list(thetas)
    lowered[bump] = max(0.0, thetas[bump] - delta)  # smaller angle = larger cosine
    v_before = fused_score(build(thetas), ref, w).value
    v_after = fused_score(build(lowered), ref, w).value
    assert v_after >= v_before - 1e-9
    assert base is not None
