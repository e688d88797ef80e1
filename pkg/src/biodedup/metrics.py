"""Identification (FPIR/FNIR) and verification (TMR/FMR) metrics.

Counts are exact integer arithmetic; rates are derived at the end. A
non-mated probe is a false positive when its top fused score clears the
threshold. A mated probe is a false negative when its true mate is not
among the top-k candidates with fused score >= threshold (k defaults to
50, mirroring a finite adjudication list); rank-1 FNIR is reported as an
extra summary statistic, not a DET column.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ResolutionError
from .gallery import CandidateList

DEFAULT_TOP_K = 50


@dataclass
class IdentificationResult:
    probe_id: int
    candidates: CandidateList
    mate_id: Optional[int] = None
    threshold: Optional[float] = None

    def top_score(self) -> float:
        if not self.candidates.entries:
            return -math.inf
        return self.candidates.entries[0].score

    def mate_hit(self, tau: float, k: int) -> bool:
        """True when the mate appears in the top-k with score >= tau."""
        if self.mate_id is None:
            raise ValueError("result has no mate label")
        for cand in self.candidates.entries[:k]:
            if cand.gallery_id == self.mate_id:
                return cand.score >= tau
        return False

    def mate_rank1_hit(self, tau: float) -> bool:
        return self.mate_hit(tau, k=1)


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    fpir: float
    fnir: float
    n_fp: int
    n_nonmated: int
    n_fn: int
    n_mated: int


def compute_fpir(
    nonmated: Sequence[IdentificationResult], tau: float
) -> tuple[float, int]:
    """FPIR = fraction of non-mated probes whose top score >= tau."""
    if not nonmated:
        raise ValueError("non-mated result set is empty")
    n_fp = sum(1 for r in nonmated if r.top_score() >= tau)
    return n_fp / len(nonmated), n_fp


def compute_fnir(
    mated: Sequence[IdentificationResult], tau: float, k: int = DEFAULT_TOP_K
) -> tuple[float, int]:
    """FNIR = fraction of mated probes missing their mate in the top-k at tau."""
    if not mated:
        raise ValueError("mated result set is empty")
    if any(r.mate_id is None for r in mated):
        raise ValueError("every mated result needs a mate label")
    n_fn = sum(1 for r in mated if not r.mate_hit(tau, k))
    return n_fn / len(mated), n_fn


def det_curve(
    mated: Sequence[IdentificationResult],
    nonmated: Sequence[IdentificationResult],
    thresholds: Sequence[float],
    k: int = DEFAULT_TOP_K,
) -> list[DetPoint]:
    if not mated or not nonmated:
        raise ValueError("both result sets must be non-empty")
    points = []
    for tau in thresholds:
        fpir, n_fp = compute_fpir(nonmated, tau)
        fnir, n_fn = compute_fnir(mated, tau, k)
        points.append(
            DetPoint(
                threshold=float(tau),
                fpir=fpir,
                fnir=fnir,
                n_fp=n_fp,
                n_nonmated=len(nonmated),
                n_fn=n_fn,
                n_mated=len(mated),
            )
        )
    return points


def threshold_at_fmr(nonmated_scores: np.ndarray, fmr_target: float) -> float:
    """Smallest observed score whose empirical FMR is <= the target.

    If even the maximum score has too many ties above it, a value just
    above the maximum is returned.
    """
    scores = np.sort(np.asarray(nonmated_scores, dtype=np.float64))
    n = scores.size
    allowed = int(math.floor(fmr_target * n))
    # count of scores >= scores[i] is n - i; need n - i <= allowed
    idx = n - allowed
    if idx <= 0:
        return float(scores[0])
    if idx >= n:
        return float(np.nextafter(scores[-1], np.inf))
    t = scores[idx]
    # ties below position idx would inflate the count; step past them
    first = np.searchsorted(scores, t, side="left")
    if n - first > allowed:
        above = scores[scores > t]
        if above.size == 0:
            return float(np.nextafter(scores[-1], np.inf))
        t = above[0]
    return float(t)


def tmr_at_fmr(
    mated_scores: np.ndarray,
    nonmated_scores: np.ndarray,
    fmr_target: float,
) -> tuple[float, float]:
    """(TMR, threshold) at the largest empirical FMR not exceeding the target."""
    mated_scores = np.asarray(mated_scores, dtype=np.float64)
    nonmated_scores = np.asarray(nonmated_scores, dtype=np.float64)
    if mated_scores.size == 0 or nonmated_scores.size == 0:
        raise ValueError("score sets must be non-empty")
    if not 0.0 < fmr_target < 1.0:
        raise ValueError("fmr_target must be in (0, 1)")
    if nonmated_scores.size < 10.0 / fmr_target:
        raise ResolutionError(
            f"{nonmated_scores.size} non-mated pairs cannot resolve FMR "
            f"{fmr_target:g}; need >= {int(10.0 / fmr_target)}"
        )
    t = threshold_at_fmr(nonmated_scores, fmr_target)
    tmr = float(np.mean(mated_scores >= t))
    return tmr, t


def wilson_interval(k: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


def det_to_rows(points: Sequence[DetPoint]) -> list[dict]:
    return [
        {
            "threshold": p.threshold,
            "fpir": p.fpir,
            "fnir": p.fnir,
            "n_fp": p.n_fp,
            "n_nonmated": p.n_nonmated,
            "n_fn": p.n_fn,
            "n_mated": p.n_mated,
        }
        for p in points
    ]


def emit_report(rows: Sequence[dict], path, format: str = "csv") -> None:
    """Write rows as CSV or JSON with a deterministic column order.

    Column order follows the first row's key order; re-runs with the same
    inputs produce byte-identical files.
    """
    path = Path(path)
    rows = list(rows)
    if format == "csv":
        buf = io.StringIO()
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        path.write_text(buf.getvalue())
    elif format == "json":
        path.write_text(json.dumps(rows, indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {format!r}")
