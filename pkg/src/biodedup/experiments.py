"""Identification experiments: modality-combination studies and
gallery-size sweeps over synthetic galleries.

Both experiments need fused scores of every probe against every gallery
row. Per-segment inner products do not depend on the fusion weights, so
one blocked pass computes three per-group raw score matrices (fingers,
face, irides; contiguous column ranges) and every modality subset is then
a cheap weighted recombination, renormalized by the pair's present-weight
mass. From the full score rows we keep sufficient statistics per probe
(top score, mate score, mate rank, per-prefix variants), from which
FPIR/FNIR follow at any threshold.

This is the exact all-pairs computation, not an approximation; the
index-module search path must agree with it (and that agreement is
tested), it is just organized for throughput.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import fusion
from .gallery import Gallery
from .metrics import (
    DEFAULT_TOP_K,
    IdentificationResult,
    threshold_at_fmr,
    wilson_interval,
)
from .synth import ProbeSet
from .template import (
    FACE_INDEX,
    IRIS_LEFT_INDEX,
    MultiBiometricTemplate,
    N_SEGMENTS,
    TEMPLATE_DIM,
)

GROUP_SEGMENTS: dict[str, tuple[int, ...]] = {
    "fingers": tuple(range(10)),
    "face": (FACE_INDEX,),
    "irides": (IRIS_LEFT_INDEX, IRIS_LEFT_INDEX + 1),
}
GROUP_DIMS: dict[str, tuple[int, int]] = {
    "fingers": (0, 1920),
    "face": (1920, 2432),
    "irides": (2432, TEMPLATE_DIM),
}
ALL_GROUPS = ("fingers", "face", "irides")
DEFAULT_SUBSETS: tuple[tuple[str, ...], ...] = (
    ("fingers",),
    ("face",),
    ("irides",),
    ("fingers", "face"),
    ("fingers", "irides"),
    ("face", "irides"),
    ("fingers", "face", "irides"),
)

_BLOCK = 160


def subset_name(subset: Sequence[str]) -> str:
    return "+".join(subset)


def subset_weights(subset: Sequence[str], base: Optional[np.ndarray] = None) -> np.ndarray:
    """Base weights with everything outside the subset's groups zeroed."""
    if not subset:
        raise ValueError("modality subset must not be empty")
    unknown = set(subset) - set(GROUP_SEGMENTS)
    if unknown:
        raise ValueError(f"unknown modality groups: {sorted(unknown)}")
    w = fusion.default_weights() if base is None else fusion.validate_weights(base).copy()
    keep = np.zeros(N_SEGMENTS, dtype=bool)
    for g in subset:
        keep[list(GROUP_SEGMENTS[g])] = True
    w[~keep] = 0.0
    return w


@dataclass
class SubsetStats:
    """Per-probe sufficient statistics for one modality subset."""

    top_score: np.ndarray  # (n_probes,)
    mate_score: np.ndarray  # (n_probes,) nan where non-mated
    mate_rank: np.ndarray  # (n_probes,) 0 where non-mated
    prefix_top: Optional[np.ndarray] = None  # (n_probes, n_sizes)
    prefix_rank: Optional[np.ndarray] = None  # (n_probes, n_sizes)


def pairwise_subset_stats(
    gallery: Gallery,
    probes: Sequence[MultiBiometricTemplate],
    mate_ids: Sequence[Optional[int]],
    weights: Optional[np.ndarray] = None,
    subsets: Sequence[Sequence[str]] = DEFAULT_SUBSETS,
    prefix_sizes: Optional[Sequence[int]] = None,
    prefix_subset: Sequence[str] = ALL_GROUPS,
    block: int = _BLOCK,
) -> dict[str, SubsetStats]:
    """One blocked pass over all (probe, row) pairs.

    Returns stats per subset name. When `prefix_sizes` is given, the
    `prefix_subset` entry also carries per-prefix top scores and mate
    ranks against the first `size` enrolled rows (galleries are nested by
    enrollment order).
    """
    base_w = fusion.default_weights() if weights is None else fusion.validate_weights(weights)
    matrix, ids, presence, _quality = gallery.snapshot_arrays()
    n_rows = matrix.shape[0]
    n_probes = len(probes)
    if n_rows == 0 or n_probes == 0:
        raise ValueError("gallery and probe set must be non-empty")
    if prefix_sizes is not None:
        prefix_sizes = list(prefix_sizes)
        if any(s < 1 or s > n_rows for s in prefix_sizes):
            raise ValueError("prefix sizes must be within [1, n_rows]")

    row_of_id = {int(g): r for r, g in enumerate(ids)}
    mate_rows = np.full(n_probes, -1, dtype=np.int64)
    for p, mid in enumerate(mate_ids):
        if mid is not None:
            if int(mid) not in row_of_id:
                raise ValueError(f"mate id {mid} is not enrolled")
            mate_rows[p] = row_of_id[int(mid)]

    subset_names = [subset_name(s) for s in subsets]
    stats = {
        name: SubsetStats(
            top_score=np.full(n_probes, -np.inf),
            mate_score=np.full(n_probes, np.nan),
            mate_rank=np.zeros(n_probes, dtype=np.int64),
            prefix_top=(
                np.full((n_probes, len(prefix_sizes)), -np.inf)
                if prefix_sizes is not None and name == subset_name(prefix_subset)
                else None
            ),
            prefix_rank=(
                np.zeros((n_probes, len(prefix_sizes)), dtype=np.int64)
                if prefix_sizes is not None and name == subset_name(prefix_subset)
                else None
            ),
        )
        for name in subset_names
    }

    probe_matrix = np.stack([t.vector for t in probes])
    probe_presence = np.stack([t.presence for t in probes])
    w_dim = base_w[np.repeat(np.arange(N_SEGMENTS), [192] * 10 + [512, 512, 512])]
    prescaled = (probe_matrix * w_dim.astype(np.float32)).astype(np.float32)

    # constant presence in a group (the common case) makes the pair mass
    # a per-probe scalar instead of a (block, n_rows) matrix
    gal_const = {
        g: bool(np.all(presence[:, list(GROUP_SEGMENTS[g])]))
        for g in ALL_GROUPS
    }

    for start in range(0, n_probes, block):
        stop = min(start + block, n_probes)
        b = stop - start
        group_scores = {}
        group_mass = {}
        for g in ALL_GROUPS:
            lo, hi = GROUP_DIMS[g]
            group_scores[g] = prescaled[start:stop, lo:hi] @ matrix[:, lo:hi].T
            segs = list(GROUP_SEGMENTS[g])
            pw = probe_presence[start:stop, segs].astype(np.float64) * base_w[segs]
            if gal_const[g]:
                group_mass[g] = pw.sum(axis=1)[:, None]  # (b, 1) broadcastable
            else:
                group_mass[g] = pw.astype(np.float32) @ presence[:, segs].astype(np.float32).T

        for sub, name in zip(subsets, subset_names):
            st = stats[name]
            raw = np.zeros((b, n_rows), dtype=np.float32)
            for g in sub:
                raw += group_scores[g]
            mass = np.zeros((b, 1), dtype=np.float64)
            for g in sub:
                mass = mass + group_mass[g]
            fused = np.where(mass > 0, raw.astype(np.float64) / np.maximum(mass, 1e-300), -np.inf)

            st.top_score[start:stop] = fused.max(axis=1)
            for j in range(b):
                p = start + j
                mrow = mate_rows[p]
                if mrow < 0:
                    continue
                ms = fused[j, mrow]
                st.mate_score[p] = ms
                greater = int(np.count_nonzero(fused[j] > ms))
                ties = np.nonzero(fused[j] == ms)[0]
                tie_ahead = int(np.count_nonzero(ids[ties] < ids[mrow]))
                st.mate_rank[p] = 1 + greater + tie_ahead
                if st.prefix_rank is not None:
                    for si, size in enumerate(prefix_sizes):
                        row = fused[j, :size]
                        g2 = int(np.count_nonzero(row > ms))
                        t2 = np.nonzero(row == ms)[0]
                        st.prefix_rank[p, si] = 1 + g2 + int(
                            np.count_nonzero(ids[t2] < ids[mrow])
                        )
            if st.prefix_top is not None:
                for si, size in enumerate(prefix_sizes):
                    st.prefix_top[start:stop, si] = fused[:, :size].max(axis=1)
    return stats


def _split_stats(st: SubsetStats, mate_ids: Sequence[Optional[int]]):
    mated = np.array([m is not None for m in mate_ids])
    return mated, ~mated


def fnir_at_tau(st: SubsetStats, mated_mask: np.ndarray, tau: float, k: int) -> tuple[float, int]:
    miss = (st.mate_score[mated_mask] < tau) | (st.mate_rank[mated_mask] > k)
    return float(miss.mean()), int(miss.sum())


def combination_study(
    gallery: Gallery,
    mated: ProbeSet,
    nonmated: ProbeSet,
    weights: Optional[np.ndarray] = None,
    subsets: Sequence[Sequence[str]] = DEFAULT_SUBSETS,
    fpir_target: float = 0.001,
    k: int = DEFAULT_TOP_K,
) -> list[dict]:
    """FNIR at a fixed FPIR per modality subset (weights zeroed outside it).

    The operating threshold per subset is the smallest non-mated top score
    whose empirical FPIR does not exceed the target.
    """
    probes = list(mated.templates) + list(nonmated.templates)
    labels = list(mated.mate_ids) + [None] * len(nonmated.templates)
    stats = pairwise_subset_stats(gallery, probes, labels, weights, subsets)
    mated_mask = np.array([m is not None for m in labels])
    rows = []
    for sub in subsets:
        name = subset_name(sub)
        st = stats[name]
        nm_top = st.top_score[~mated_mask]
        tau = threshold_at_fmr(nm_top, fpir_target)
        n_fp = int(np.count_nonzero(nm_top >= tau))
        fpir = n_fp / nm_top.size
        fnir, n_fn = fnir_at_tau(st, mated_mask, tau, k)
        rank1 = (st.mate_score[mated_mask] < tau) | (st.mate_rank[mated_mask] > 1)
        ci_lo, ci_hi = wilson_interval(n_fn, int(mated_mask.sum()))
        rows.append(
            {
                "subset": name,
                "tau": tau,
                "fpir": fpir,
                "n_fp": n_fp,
                "n_nonmated": int(nm_top.size),
                "fnir": fnir,
                "n_fn": n_fn,
                "n_mated": int(mated_mask.sum()),
                "fnir_rank1": float(rank1.mean()),
                "fnir_ci_lo": ci_lo,
                "fnir_ci_hi": ci_hi,
            }
        )
    return rows


def gallery_size_sweep(
    gallery: Gallery,
    mated: ProbeSet,
    nonmated: ProbeSet,
    sizes: Sequence[int],
    tau: float,
    weights: Optional[np.ndarray] = None,
    k: int = DEFAULT_TOP_K,
) -> list[dict]:
    """FPIR and FNIR at a fixed threshold against nested gallery prefixes.

    Every mated probe's mate must be enrolled within the smallest prefix,
    otherwise the probe would change its mated/non-mated character across
    sizes and the comparison would be meaningless.
    """
    sizes = sorted(int(s) for s in sizes)
    if not sizes:
        raise ValueError("need at least one gallery size")
    probes = list(mated.templates) + list(nonmated.templates)
    labels = list(mated.mate_ids) + [None] * len(nonmated.templates)
    _, ids, _, _ = gallery.snapshot_arrays()
    row_of_id = {int(g): r for r, g in enumerate(ids)}
    for mid in mated.mate_ids:
        if row_of_id.get(int(mid), len(ids)) >= sizes[0]:
            raise ValueError(
                f"mate id {mid} is enrolled beyond the smallest prefix ({sizes[0]})"
            )
    stats = pairwise_subset_stats(
        gallery,
        probes,
        labels,
        weights,
        subsets=(ALL_GROUPS,),
        prefix_sizes=sizes,
        prefix_subset=ALL_GROUPS,
    )[subset_name(ALL_GROUPS)]
    mated_mask = np.array([m is not None for m in labels])
    n_mated = int(mated_mask.sum())
    n_nonmated = len(labels) - n_mated
    rows = []
    for si, size in enumerate(sizes):
        nm_top = stats.prefix_top[~mated_mask, si]
        n_fp = int(np.count_nonzero(nm_top >= tau))
        miss = (stats.mate_score[mated_mask] < tau) | (
            stats.prefix_rank[mated_mask, si] > k
        )
        n_fn = int(miss.sum())
        fp_lo, fp_hi = wilson_interval(n_fp, n_nonmated)
        fn_lo, fn_hi = wilson_interval(n_fn, n_mated)
        rows.append(
            {
                "gallery_size": size,
                "tau": tau,
                "fpir": n_fp / n_nonmated,
                "n_fp": n_fp,
                "n_nonmated": n_nonmated,
                "fnir": n_fn / n_mated,
                "n_fn": n_fn,
                "n_mated": n_mated,
                "fpir_ci_lo": fp_lo,
                "fpir_ci_hi": fp_hi,
                "fnir_ci_lo": fn_lo,
                "fnir_ci_hi": fn_hi,
            }
        )
    return rows


def run_identification(
    gallery: Gallery,
    probe_set: ProbeSet,
    weights: Optional[np.ndarray] = None,
    k: int = DEFAULT_TOP_K,
    scan_k: Optional[int] = None,
    n_workers: int = 1,
) -> list[IdentificationResult]:
    """Search-path identification for a labeled probe set."""
    w = fusion.default_weights() if weights is None else weights
    lists = gallery.search(probe_set.templates, w, k=k, scan_k=scan_k, n_workers=n_workers)
    return [
        IdentificationResult(probe_id=i, candidates=lists[i], mate_id=probe_set.mate_ids[i])
        for i in range(len(lists))
    ]
