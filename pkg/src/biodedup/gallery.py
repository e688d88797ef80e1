"""Sharded exact inner-product 1:N search over template galleries.

A gallery is a list of shards; each shard owns a contiguous row-major
float32 matrix (n_rows x 3456) plus id / presence / quality sidecars.
Search is two-pass:

  1. scan: one batched matrix product of prescaled probes against every
     shard, exact top-scan_k selection per probe (scan_k defaults to 4x
     the requested k; pass scan_k >= n_rows for provably exact results
     under arbitrary presence patterns),
  2. rescore: presence-renormalized fused scores for the survivors,
     re-sorted and truncated to k.

Ordering is always (score descending, gallery id ascending), which makes
results deterministic and independent of shard boundaries.

Gallery file format (little-endian):

    magic "BGAL" (4B) | version u16 = 1 | reserved u16 | n_rows u64 |
    dim u32 = 3456 | crc32 of payload u32 | n_rows x template record

Shards are immutable during a search pass; insertion commits by bumping
the row count last, so concurrent readers only ever see whole rows.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fusion
from .errors import (
    CapacityError,
    ConsistencyError,
    FormatError,
    IdConflictError,
)
from .fusion import FusedScore
from .template import (
    MultiBiometricTemplate,
    N_SEGMENTS,
    RECORD_SIZE,
    SEGMENT_OF_DIM,
    SEGMENT_SLICES,
    TEMPLATE_DIM,
    serialize_template,
)

DEFAULT_SHARD_SIZE = 100_000
SCAN_OVERSAMPLE = 4  # scan_k = SCAN_OVERSAMPLE * k unless overridden
_PROBE_BLOCK = 128
_F64_SLAB = 2048  # rows cast to float64 at a time in exhaustive scoring
_TIE_BAND = 1e-9  # BLAS positional wobble is ~1e-13; real score gaps are >> this

_GALLERY_MAGIC = b"BGAL"
_GALLERY_VERSION = 1
_GALLERY_HEADER = struct.Struct("<4sHHQII")
_LOAD_CHUNK_ROWS = 4096

_RECORD_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u2"),
        ("reserved", "<u2"),
        ("subject_id", "<u8"),
        ("presence_mask", "<u2"),
        ("pad", "V8"),
        ("quality", "<f4", (N_SEGMENTS,)),
        ("vector", "<f4", (TEMPLATE_DIM,)),
    ]
)
assert _RECORD_DTYPE.itemsize == RECORD_SIZE


@dataclass
class Candidate:
    gallery_id: int
    raw_dot: float
    fused: Optional[FusedScore] = None

    @property
    def score(self) -> float:
        return self.fused.value if self.fused is not None else self.raw_dot


@dataclass
class CandidateList:
    entries: list[Candidate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[int]:
        return [c.gallery_id for c in self.entries]


def _topk_rows(scores: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top-k entries by (score desc, id asc), in that order.

    Exact under ties: boundary ties are resolved by ascending id, so the
    selection is identical no matter how the rows are partitioned.
    """
    n = scores.shape[0]
    if k >= n:
        return np.lexsort((ids, -scores))
    part = np.argpartition(scores, n - k)[n - k :]
    kth = scores[part].min()
    sure = np.nonzero(scores > kth)[0]
    need = k - sure.size
    ties = np.nonzero(scores == kth)[0]
    ties = ties[np.argsort(ids[ties], kind="stable")][:need]
    chosen = np.concatenate([sure, ties])
    return chosen[np.lexsort((ids[chosen], -scores[chosen]))]


class GalleryShard:
    """Append-only block of templates with contiguous float32 storage."""

    def __init__(self, capacity: int = DEFAULT_SHARD_SIZE, dim: int = TEMPLATE_DIM):
        if capacity < 1:
            raise ValueError("shard capacity must be >= 1")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.n_rows = 0
        size = min(self.capacity, 256)
        self._matrix = np.zeros((size, self.dim), dtype=np.float32)
        self._ids = np.zeros(size, dtype=np.uint64)
        self._presence = np.zeros((size, N_SEGMENTS), dtype=bool)
        self._quality = np.zeros((size, N_SEGMENTS), dtype=np.float32)
        self._id_set: set[int] = set()

    @property
    def full(self) -> bool:
        return self.n_rows >= self.capacity

    def _grow(self, need: int) -> None:
        cur = self._matrix.shape[0]
        if need <= cur:
            return
        new = min(self.capacity, max(need, cur * 2))
        for name in ("_matrix", "_ids", "_presence", "_quality"):
            old = getattr(self, name)
            shape = (new,) + old.shape[1:]
            buf = np.zeros(shape, dtype=old.dtype)
            buf[: self.n_rows] = old[: self.n_rows]
            setattr(self, name, buf)

    def insert(self, template: MultiBiometricTemplate, gallery_id: int) -> int:
        """Append one template; returns its row index."""
        if self.full:
            raise CapacityError(f"shard is full ({self.capacity} rows)")
        gallery_id = int(gallery_id)
        if gallery_id in self._id_set:
            raise IdConflictError(f"id {gallery_id} already present in shard")
        row = self.n_rows
        self._grow(row + 1)
        self._matrix[row] = template.vector
        self._ids[row] = gallery_id
        self._presence[row] = template.presence
        self._quality[row] = template.quality
        self._id_set.add(gallery_id)
        self.n_rows = row + 1  # commit point: readers never see a torn row
        return row

    def insert_rows(
        self,
        vectors: np.ndarray,
        ids: np.ndarray,
        presence: np.ndarray,
        quality: np.ndarray,
    ) -> None:
        """Bulk append of pre-validated rows (vectors already normalized/zeroed)."""
        m = vectors.shape[0]
        if self.n_rows + m > self.capacity:
            raise CapacityError(f"bulk insert of {m} rows exceeds capacity {self.capacity}")
        new_ids = [int(i) for i in ids]
        if len(set(new_ids)) != m or self._id_set.intersection(new_ids):
            raise IdConflictError("duplicate ids in bulk insert")
        row = self.n_rows
        self._grow(row + m)
        self._matrix[row : row + m] = vectors
        self._ids[row : row + m] = ids
        self._presence[row : row + m] = presence
        self._quality[row : row + m] = quality
        self._id_set.update(new_ids)
        self.n_rows = row + m

    def snapshot(self):
        """Consistent (n, matrix, ids, presence, quality) views for readers.

        Row count is read before the buffers, and insert swaps buffers
        before bumping the count, so the views always cover >= n rows.
        """
        n = self.n_rows
        return n, self._matrix[:n], self._ids[:n], self._presence[:n], self._quality[:n]

    def scan_topk_arrays(
        self, prescaled: np.ndarray, k: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """Raw top-k per probe: returns (ids, dots) arrays of shape (P, k').

        Exact full scan; k' = min(k, n_rows). Probes are processed in
        blocks so the score buffer stays bounded.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        n, matrix, ids, _, _ = self.snapshot()
        p = prescaled.shape[0]
        kk = min(k, n)
        out_ids = np.zeros((p, kk), dtype=np.uint64)
        out_dots = np.zeros((p, kk), dtype=np.float32)
        if n == 0:
            return out_ids, out_dots
        for start in range(0, p, _PROBE_BLOCK):
            stop = min(start + _PROBE_BLOCK, p)
            scores = prescaled[start:stop] @ matrix.T  # (b, n) float32
            for j in range(stop - start):
                sel = _topk_rows(scores[j], ids, kk)
                out_ids[start + j] = ids[sel]
                out_dots[start + j] = scores[j][sel]
        return out_ids, out_dots


def shard_search_topk(
    shard: GalleryShard, prescaled: np.ndarray, k: int
) -> list[CandidateList]:
    """Raw (unrenormalized) top-k scan of one shard for a batch of probes."""
    prescaled = np.atleast_2d(np.asarray(prescaled, dtype=np.float32))
    ids, dots = shard.scan_topk_arrays(prescaled, k)
    return [
        CandidateList(
            [Candidate(int(i), float(d)) for i, d in zip(ids[p], dots[p])]
        )
        for p in range(prescaled.shape[0])
    ]


def merge_topk(lists: Sequence[CandidateList], k: int) -> CandidateList:
    """Global top-k of several per-shard lists; equals top-k of their union."""
    if k < 1:
        raise ValueError("k must be >= 1")
    entries = [c for lst in lists for c in lst.entries]
    if not entries:
        return CandidateList()
    ids = np.array([c.gallery_id for c in entries], dtype=np.uint64)
    scores = np.array([c.score for c in entries], dtype=np.float64)
    sel = _topk_rows(scores, ids, k)
    return CandidateList([entries[i] for i in sel])


class Gallery:
    """A set of shards searched as one unit; ids are unique across shards."""

    def __init__(
        self,
        shard_size: int = DEFAULT_SHARD_SIZE,
        max_rows: Optional[int] = None,
        shards: Optional[list[GalleryShard]] = None,
    ):
        if shard_size < 1:
            raise ValueError("shard_size must be >= 1")
        self.shard_size = int(shard_size)
        self.max_rows = max_rows
        self.shards: list[GalleryShard] = shards if shards is not None else []
        self._index: dict[int, tuple[int, int]] = {}
        self._next_id = 1
        for si, shard in enumerate(self.shards):
            n, _, ids, _, _ = shard.snapshot()
            for row in range(n):
                gid = int(ids[row])
                if gid in self._index:
                    raise IdConflictError(f"id {gid} appears in more than one shard")
                self._index[gid] = (si, row)
                self._next_id = max(self._next_id, gid + 1)

    @property
    def n_rows(self) -> int:
        return sum(s.n_rows for s in self.shards)

    def __contains__(self, gallery_id: int) -> bool:
        return int(gallery_id) in self._index

    def ids(self) -> list[int]:
        return sorted(self._index)

    def add(
        self, template: MultiBiometricTemplate, gallery_id: Optional[int] = None
    ) -> int:
        """Insert a template; returns its gallery id (auto-assigned if None)."""
        if self.max_rows is not None and self.n_rows >= self.max_rows:
            raise CapacityError(f"gallery is at configured capacity {self.max_rows}")
        if gallery_id is None:
            gallery_id = self._next_id
        gallery_id = int(gallery_id)
        if gallery_id in self._index:
            raise IdConflictError(f"id {gallery_id} already enrolled")
        if not self.shards or self.shards[-1].full:
            self.shards.append(GalleryShard(self.shard_size))
        shard = self.shards[-1]
        row = shard.insert(template, gallery_id)
        self._index[gallery_id] = (len(self.shards) - 1, row)
        self._next_id = max(self._next_id, gallery_id + 1)
        return gallery_id

    def add_rows(
        self,
        vectors: np.ndarray,
        ids: np.ndarray,
        presence: np.ndarray,
        quality: np.ndarray,
    ) -> None:
        """Bulk insert of pre-validated rows, splitting across shards as needed."""
        m = vectors.shape[0]
        if self.max_rows is not None and self.n_rows + m > self.max_rows:
            raise CapacityError(f"bulk insert exceeds gallery capacity {self.max_rows}")
        dup = [int(i) for i in ids if int(i) in self._index]
        if dup:
            raise IdConflictError(f"ids already enrolled: {dup[:5]}")
        start = 0
        while start < m:
            if not self.shards or self.shards[-1].full:
                self.shards.append(GalleryShard(self.shard_size))
            shard = self.shards[-1]
            take = min(m - start, shard.capacity - shard.n_rows)
            row0 = shard.n_rows
            shard.insert_rows(
                vectors[start : start + take],
                ids[start : start + take],
                presence[start : start + take],
                quality[start : start + take],
            )
            si = len(self.shards) - 1
            for off in range(take):
                gid = int(ids[start + off])
                self._index[gid] = (si, row0 + off)
                self._next_id = max(self._next_id, gid + 1)
            start += take

    def row_of(self, gallery_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(vector, presence, quality) views for one enrolled id."""
        try:
            si, row = self._index[int(gallery_id)]
        except KeyError:
            raise ConsistencyError(f"id {gallery_id} not in gallery") from None
        shard = self.shards[si]
        return shard._matrix[row], shard._presence[row], shard._quality[row]

    def template_of(self, gallery_id: int) -> MultiBiometricTemplate:
        vector, presence, quality = self.row_of(gallery_id)
        return MultiBiometricTemplate(
            vector=vector.copy(),
            presence=presence.copy(),
            quality=quality.copy(),
            subject_id=int(gallery_id),
        )

    def _locate(self, ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """(shard index, row) arrays for a sequence of gallery ids."""
        m = len(ids)
        si_arr = np.empty(m, dtype=np.int64)
        row_arr = np.empty(m, dtype=np.int64)
        index = self._index
        try:
            for j, gid in enumerate(ids):
                si_arr[j], row_arr[j] = index[int(gid)]
        except KeyError:
            raise ConsistencyError(f"id {int(gid)} not in gallery") from None
        return si_arr, row_arr

    def gather(self, ids: Sequence[int]):
        """(vectors, presence, quality) row copies in the order of `ids`."""
        m = len(ids)
        vectors = np.empty((m, TEMPLATE_DIM), dtype=np.float32)
        presence = np.empty((m, N_SEGMENTS), dtype=bool)
        quality = np.empty((m, N_SEGMENTS), dtype=np.float32)
        si_arr, row_arr = self._locate(ids)
        for si in np.unique(si_arr):
            mask = si_arr == si
            shard = self.shards[si]
            rows = row_arr[mask]
            vectors[mask] = shard._matrix[rows]
            presence[mask] = shard._presence[rows]
            quality[mask] = shard._quality[rows]
        return vectors, presence, quality

    def snapshot_arrays(self):
        """(matrix, ids, presence, quality) for all rows, concatenated.

        Zero-copy when the gallery occupies a single shard.
        """
        snaps = [s.snapshot() for s in self.shards]
        if len(snaps) == 1:
            _, m, i, p, q = snaps[0]
            return m, i, p, q
        if not snaps:
            empty = np.zeros((0, TEMPLATE_DIM), dtype=np.float32)
            return (
                empty,
                np.zeros(0, dtype=np.uint64),
                np.zeros((0, N_SEGMENTS), dtype=bool),
                np.zeros((0, N_SEGMENTS), dtype=np.float32),
            )
        return (
            np.concatenate([s[1] for s in snaps]),
            np.concatenate([s[2] for s in snaps]),
            np.concatenate([s[3] for s in snaps]),
            np.concatenate([s[4] for s in snaps]),
        )

    def search(
        self,
        probes: Sequence[MultiBiometricTemplate],
        weights: np.ndarray,
        k: int,
        scan_k: Optional[int] = None,
        n_workers: int = 1,
        quality_adaptive: bool = False,
    ) -> list[CandidateList]:
        """Full two-pass 1:N search for a batch of probe templates.

        With scan_k >= n_rows the scan stage is skipped and every row is
        scored exactly (float64 accumulation), which is the provably exact
        mode the acceptance oracle compares against.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        weights = fusion.validate_weights(weights)
        if scan_k is None:
            scan_k = SCAN_OVERSAMPLE * k
        scan_k = max(scan_k, k)
        n_probes = len(probes)
        if n_probes == 0 or self.n_rows == 0:
            return [CandidateList() for _ in range(n_probes)]
        if scan_k >= self.n_rows and not quality_adaptive:
            return self._search_exhaustive(probes, weights, k, n_workers)

        prescaled = np.stack([fusion.probe_prescale(t, weights) for t in probes])

        def scan(shard: GalleryShard):
            return shard.scan_topk_arrays(prescaled, scan_k)

        live = [s for s in self.shards if s.n_rows > 0]
        if n_workers > 1 and len(live) > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                per_shard = list(pool.map(scan, live))
        else:
            per_shard = [scan(s) for s in live]

        results = []
        for p in range(n_probes):
            cand_ids = np.concatenate([ids[p] for ids, _ in per_shard])
            cand_raws = np.concatenate([dots[p] for _, dots in per_shard])
            sel = _topk_rows(cand_raws.astype(np.float64), cand_ids, scan_k)
            cand_ids, cand_raws = cand_ids[sel], cand_raws[sel]
            rescored = _rescore_arrays(
                self, probes[p], cand_ids, cand_raws, weights, quality_adaptive
            )
            rescored.entries = rescored.entries[:k]
            results.append(rescored)
        return results

    def _search_exhaustive(
        self,
        probes: Sequence[MultiBiometricTemplate],
        weights: np.ndarray,
        k: int,
        n_workers: int = 1,
    ) -> list[CandidateList]:
        """Score every row for every probe with float64 accumulation.

        The weighted sum sum_i w_i <q_i, g_i> collapses to one inner
        product of the float64-prescaled probe against each row. Rows are
        scored per probe over fixed slabs of the concatenated row space,
        so results are bit-identical no matter how the gallery is sharded
        and no matter how probes are batched. Per-segment breakdowns are
        only materialized for the survivors.
        """
        n_probes = len(probes)
        matrix, all_ids, presence, _quality = self.snapshot_arrays()
        n = matrix.shape[0]
        pre64 = np.stack(
            [t.vector.astype(np.float64) * weights[SEGMENT_OF_DIM] for t in probes]
        )
        probe_presence = np.stack([t.presence for t in probes])
        pw = probe_presence.astype(np.float64) * weights
        wsum = np.empty((n_probes, n), dtype=np.float64)
        for s0 in range(0, n, _F64_SLAB):
            s1 = min(s0 + _F64_SLAB, n)
            slab = matrix[s0:s1].astype(np.float64)
            for p in range(n_probes):
                wsum[p, s0:s1] = slab @ pre64[p]
        pres64 = presence.astype(np.float64)
        mass = np.empty((n_probes, n), dtype=np.float64)
        for p in range(n_probes):
            mass[p] = pres64 @ pw[p]
        comparable = mass > 0
        values = np.full((n_probes, n), -np.inf)
        np.divide(wsum, mass, out=values, where=comparable)
        np.clip(values, -1.0, 1.0, out=values)

        # BLAS gives each row's value with a position-dependent last-ulp
        # wobble, which would corrupt tie-breaking between identical rows.
        # The matrix pass therefore only prefilters: everything within a
        # safety band of the k-th value is rescored by the position-stable
        # gathered path, which also fills in the per-segment breakdown.
        results = []
        for p in range(n_probes):
            vals = np.where(comparable[p], values[p], -np.inf)
            kk = min(k, int(comparable[p].sum()))
            if kk == 0:
                results.append(CandidateList())
                continue
            kth = np.partition(vals, n - kk)[n - kk]
            band = np.nonzero(vals >= kth - _TIE_BAND)[0]
            rescored = _rescore_arrays(
                self, probes[p], all_ids[band], wsum[p][band], weights, False
            )
            rescored.entries = rescored.entries[:kk]
            results.append(rescored)
        return results


def _rescore_arrays(
    gallery: Gallery,
    probe: MultiBiometricTemplate,
    cand_ids: np.ndarray,
    cand_raws: np.ndarray,
    weights: np.ndarray,
    quality_adaptive: bool = False,
) -> CandidateList:
    """Vectorized presence-renormalized rescoring of candidate rows.

    Per-segment dots accumulate in float64 so rankings agree bit-for-bit
    with the per-pair reference scoring.
    """
    m = cand_ids.shape[0]
    if m == 0:
        return CandidateList()
    rows, presence, quality = gallery.gather([int(i) for i in cand_ids])
    dots = np.zeros((m, N_SEGMENTS), dtype=np.float64)
    for i, sl in enumerate(SEGMENT_SLICES):
        # zero segments (absent on either side) contribute exact zeros
        dots[:, i] = np.einsum(
            "md,d->m", rows[:, sl], probe.vector[sl], dtype=np.float64
        )
    both = presence & probe.presence
    if quality_adaptive:
        w_eff = weights * np.minimum(quality, probe.quality).astype(np.float64)
    else:
        w_eff = np.broadcast_to(weights, (m, N_SEGMENTS))
    w_masked = np.where(both, w_eff, 0.0)
    mass = w_masked.sum(axis=1)
    comparable = mass > 0.0
    values = np.full(m, -np.inf)
    np.divide(
        (dots * w_masked).sum(axis=1), mass, out=values, where=comparable
    )
    np.clip(values, -1.0, 1.0, out=values)

    keep = np.nonzero(comparable)[0]
    if keep.size == 0:
        return CandidateList()
    order = keep[np.lexsort((cand_ids[keep], -values[keep]))]
    entries = [
        Candidate(
            gallery_id=int(cand_ids[j]),
            raw_dot=float(cand_raws[j]),
            fused=FusedScore(
                value=float(values[j]),
                per_segment=np.where(both[j], dots[j], 0.0),
                effective_weight_sum=float(mass[j]),
            ),
        )
        for j in order
    ]
    return CandidateList(entries)


def rescore_candidates(
    probe: MultiBiometricTemplate,
    candidates: CandidateList,
    gallery: Gallery,
    weights: np.ndarray,
    quality_adaptive: bool = False,
) -> CandidateList:
    """Replace raw dots with fused scores; re-sort; drop incomparable pairs."""
    weights = fusion.validate_weights(weights)
    if not candidates.entries:
        return CandidateList()
    cand_ids = np.array([c.gallery_id for c in candidates.entries], dtype=np.uint64)
    cand_raws = np.array([c.raw_dot for c in candidates.entries], dtype=np.float64)
    return _rescore_arrays(gallery, probe, cand_ids, cand_raws, weights, quality_adaptive)


def capacity_estimate(memory_bytes: int, dim: int, bytes_per_element: int) -> int:
    """How many templates fit in a memory budget: floor(bytes / (dim * elem))."""
    if memory_bytes <= 0 or dim <= 0 or bytes_per_element <= 0:
        raise ValueError("all arguments must be positive")
    return int(memory_bytes // (dim * bytes_per_element))


def save_gallery(gallery: Gallery, path) -> None:
    """Write the gallery file; the payload checksum is patched in afterwards."""
    path = Path(path)
    n = gallery.n_rows
    crc = 0
    with open(path, "wb") as f:
        f.write(_GALLERY_HEADER.pack(_GALLERY_MAGIC, _GALLERY_VERSION, 0, n, TEMPLATE_DIM, 0))
        for shard in gallery.shards:
            rows, matrix, ids, presence, quality = shard.snapshot()
            for row in range(rows):
                t = MultiBiometricTemplate(
                    vector=matrix[row].copy(),
                    presence=presence[row].copy(),
                    quality=quality[row].copy(),
                    subject_id=int(ids[row]),
                )
                rec = serialize_template(t)
                crc = zlib.crc32(rec, crc)
                f.write(rec)
        f.seek(0)
        f.write(
            _GALLERY_HEADER.pack(
                _GALLERY_MAGIC, _GALLERY_VERSION, 0, n, TEMPLATE_DIM, crc & 0xFFFFFFFF
            )
        )


def load_gallery(path, shard_size: int = DEFAULT_SHARD_SIZE) -> Gallery:
    """Read a gallery file, verifying magic, version, dimension and checksum."""
    path = Path(path)
    with open(path, "rb") as f:
        header = f.read(_GALLERY_HEADER.size)
        if len(header) != _GALLERY_HEADER.size:
            raise FormatError("truncated gallery header")
        magic, version, _reserved, n_rows, dim, crc_expected = _GALLERY_HEADER.unpack(header)
        if magic != _GALLERY_MAGIC:
            raise FormatError(f"bad gallery magic {magic!r}")
        if version != _GALLERY_VERSION:
            raise FormatError(f"unsupported gallery version {version}")
        if dim != TEMPLATE_DIM:
            raise FormatError(f"gallery dimension {dim} != {TEMPLATE_DIM}")
        gallery = Gallery(shard_size=shard_size)
        crc = 0
        remaining = n_rows
        while remaining > 0:
            take = min(remaining, _LOAD_CHUNK_ROWS)
            payload = f.read(take * RECORD_SIZE)
            if len(payload) != take * RECORD_SIZE:
                raise FormatError("truncated gallery payload")
            crc = zlib.crc32(payload, crc)
            recs = np.frombuffer(payload, dtype=_RECORD_DTYPE)
            if not np.all(recs["magic"] == _RECORD_MAGIC_ARR):
                raise FormatError("bad record magic inside gallery payload")
            if not np.all(recs["version"] == 1):
                raise FormatError("unsupported record version inside gallery payload")
            masks = recs["presence_mask"].astype(np.uint16)
            presence = ((masks[:, None] >> np.arange(N_SEGMENTS, dtype=np.uint16)) & 1).astype(bool)
            if np.any(masks >> N_SEGMENTS):
                raise FormatError("record presence mask has reserved bits set")
            gallery.add_rows(
                recs["vector"].astype(np.float32),
                recs["subject_id"].astype(np.uint64),
                presence,
                recs["quality"].astype(np.float32),
            )
            remaining -= take
        if f.read(1):
            raise FormatError("trailing bytes after gallery payload")
        if crc & 0xFFFFFFFF != crc_expected:
            raise FormatError(
                f"gallery checksum mismatch: {crc & 0xFFFFFFFF:#010x} != {crc_expected:#010x}"
            )
    return gallery


_RECORD_MAGIC_ARR = np.bytes_(b"BTPL")


def expected_file_size(n_rows: int) -> int:
    return _GALLERY_HEADER.size + n_rows * RECORD_SIZE
