"""Brute-force reference implementations the fast paths are checked against.

Everything here is written directly from the scoring definition: float64
per-segment dot products over every gallery row, renormalized by the
pair's present-weight mass, sorted by (score desc, id asc). No sharding,
no scanning, no top-k machinery.
"""

import numpy as np

from biodedup.template import SEGMENT_SLICES


def naive_fused(probe, row_vec, row_presence, weights):
    """(value, per_segment, mass) straight from the definition; None when
    the pair shares no positively weighted present segment."""
    per_segment = np.zeros(13)
    mass = 0.0
    acc = 0.0
    for i, sl in enumerate(SEGMENT_SLICES):
        if probe.presence[i] and row_presence[i]:
            d = float(
                np.dot(probe.vector[sl].astype(np.float64), row_vec[sl].astype(np.float64))
            )
            per_segment[i] = d
            mass += float(weights[i])
            acc += float(weights[i]) * d
    if mass <= 0.0:
        return None
    return float(np.clip(acc / mass, -1.0, 1.0)), per_segment, mass


def naive_search(gallery, probe, weights, k):
    """Exact top-k of the whole gallery, computed pairwise."""
    matrix, ids, presence, _ = gallery.snapshot_arrays()
    scored = []
    for r in range(matrix.shape[0]):
        out = naive_fused(probe, matrix[r], presence[r], weights)
        if out is None:
            continue
        scored.append((int(ids[r]), out[0]))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def naive_search_fast(gallery, probe, weights, k):
    """Same result as naive_search via dense float64 algebra (for larger
    galleries); still independent of the shard/scan/merge/rescore path."""
    matrix, ids, presence, _ = gallery.snapshot_arrays()
    m64 = matrix.astype(np.float64)
    p64 = probe.vector.astype(np.float64)
    acc = np.zeros(matrix.shape[0])
    mass = np.zeros(matrix.shape[0])
    for i, sl in enumerate(SEGMENT_SLICES):
        if not probe.presence[i]:
            continue
        dots = m64[:, sl] @ p64[sl]
        both = presence[:, i]
        acc += np.where(both, weights[i] * dots, 0.0)
        mass += np.where(both, weights[i], 0.0)
    ok = mass > 0
    values = np.clip(acc[ok] / mass[ok], -1.0, 1.0)
    kept_ids = ids[ok]
    order = np.lexsort((kept_ids, -values))[:k]
    return [(int(kept_ids[j]), float(values[j])) for j in order]
