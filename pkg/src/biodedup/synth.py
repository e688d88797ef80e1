"""Calibrated synthetic identities and observations.

Each identity owns one latent unit direction per segment plus a base
quality per segment. An observation perturbs each present latent with a
spherical Gaussian in the tangent space and renormalizes; the effective
concentration is kappa_modality * base_quality * quality_draw, so low
quality means more angular noise. Non-mated scores then follow the
near-orthogonal law of random unit directions, while mated scores
concentrate according to kappa.

Quality has two regimes per modality group: a tight continuum around a
high mean (with a shared per-identity factor so finger qualities are
strongly correlated) and a rare degraded branch shared across the group,
standing in for severely worn hands, bilateral eye conditions or occluded
faces. The degraded branches are what give multi-modal fusion its bite:
one modality group can fail together while the others, independent of it,
still separate the match.

kappa per modality is calibrated by Monte Carlo bisection against a
verification operating point (TMR at fixed FMR): the non-mated score law
does not depend on kappa (an observation of a uniformly random latent is
itself uniform), so the decision threshold is estimated once and the
bisection only regenerates mated pairs, reusing the same random draws at
every step so the TMR is monotone in kappa.

Determinism: every stream is derived from the master seed and a fixed
(domain, chunk) spawn key, so generation can be parallelized across
chunks without changing output, and identical seeds give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import CalibrationError
from .gallery import Gallery
from .metrics import threshold_at_fmr
from .template import (
    FACE_INDEX,
    FINGER_DIM,
    FACE_DIM,
    IRIS_DIM,
    IRIS_LEFT_INDEX,
    IRIS_RIGHT_INDEX,
    MultiBiometricTemplate,
    N_SEGMENTS,
    SEGMENT_SLICES,
    TEMPLATE_DIM,
)

CHUNK = 1024  # identities per generation chunk; fixed so output is layout-stable

# spawn-key domains for deterministic independent streams
_D_IDENTITY = 0
_D_ENROLL = 1
_D_MATED_PROBE = 2
_D_NONMATED_PROBE = 3

_MIN_KAPPA = 1e-12
_QUALITY_ESTIMATE_NOISE = 0.05


@dataclass(frozen=True)
class QualityModel:
    """Per-identity base-quality law for one modality group.

    Quality is a tight continuum around a high mean (with a shared
    per-identity factor correlating the group's segments) plus a rare
    degraded branch whose level is shared across the group. A hard-subject
    mask can force the degraded branch externally with a level drawn from
    the bottom of the degraded range.
    """

    mean: float = 0.92
    sigma: float = 0.05
    rho: float = 0.7  # shared-factor correlation between segments of the group
    clip_lo: float = 0.35
    clip_hi: float = 1.0
    p_degraded: float = 0.0  # probability the whole group is degraded
    degraded_lo: float = 0.08
    degraded_hi: float = 0.25
    degraded_jitter: float = 0.02
    hard_depth: float = 0.4  # hard subjects draw from the bottom fraction of the range

    def sample(
        self,
        rng: np.random.Generator,
        n: int,
        k: int,
        hard_mask: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """(n, k) base qualities with intra-group correlation.

        The rng draw count is independent of the data so parallel chunked
        generation stays reproducible.
        """
        shared = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, k))
        rho = min(max(self.rho, 0.0), 1.0)
        z = np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * own
        q = np.clip(self.mean + self.sigma * z, self.clip_lo, self.clip_hi)
        degraded = rng.random(n) < self.p_degraded
        level = rng.uniform(self.degraded_lo, self.degraded_hi, size=(n, 1))
        hard_hi = self.degraded_lo + self.hard_depth * (self.degraded_hi - self.degraded_lo)
        hard_level = rng.uniform(self.degraded_lo, hard_hi, size=(n, 1))
        jitter = rng.uniform(-self.degraded_jitter, self.degraded_jitter, size=(n, k))
        if hard_mask is not None:
            level = np.where(hard_mask[:, None], hard_level, level)
            degraded = degraded | hard_mask
        q_deg = np.clip(level + jitter, 0.02, 1.0)
        return np.where(degraded[:, None], q_deg, q)


@dataclass(frozen=True)
class ModalityConfig:
    kappa: float
    target_tmr: float
    target_fmr: float = 1e-4
    quality: QualityModel = field(default_factory=QualityModel)


@dataclass(frozen=True)
class SynthConfig:
    finger: ModalityConfig
    face: ModalityConfig
    iris: ModalityConfig
    finger_missing_rate: float = 0.0
    iris_missing_rate: float = 0.0  # both irides go missing together
    face_missing_rate: float = 0.0
    # fraction of subjects whose hands AND eyes are jointly, deeply degraded
    # (worn fingerprints and bilateral eye conditions co-occur in the field);
    # face degradation stays independent, which is what lets three-modality
    # fusion keep rescuing these subjects
    hard_subject_rate: float = 0.0015

    def segment_kappas(self) -> np.ndarray:
        k = np.empty(N_SEGMENTS, dtype=np.float64)
        k[:10] = self.finger.kappa
        k[FACE_INDEX] = self.face.kappa
        k[IRIS_LEFT_INDEX] = self.iris.kappa
        k[IRIS_RIGHT_INDEX] = self.iris.kappa
        return k


# Default calibration constants, produced by scripts/calibrate_defaults.py
# with the quality models below (bisection against the per-modality
# verification targets, then re-verified on fresh samples). Regenerate
# after changing any quality parameter.
DEFAULT_FINGER_QUALITY = QualityModel(
    mean=0.93, sigma=0.05, rho=0.7, clip_lo=0.4, p_degraded=0.03,
    degraded_lo=0.03, degraded_hi=0.35,
)
DEFAULT_FACE_QUALITY = QualityModel(
    mean=0.92, sigma=0.07, rho=0.0, clip_lo=0.45, p_degraded=0.004,
    degraded_lo=0.08, degraded_hi=0.45,
)
DEFAULT_IRIS_QUALITY = QualityModel(
    mean=0.93, sigma=0.05, rho=0.8, clip_lo=0.45, p_degraded=0.05,
    degraded_lo=0.05, degraded_hi=0.65,
)

DEFAULT_KAPPA_FINGER = 171.54981687293375
DEFAULT_KAPPA_FACE = 209.5874899146207
DEFAULT_KAPPA_IRIS = 250.89404675596705


def default_config() -> SynthConfig:
    return SynthConfig(
        finger=ModalityConfig(
            kappa=DEFAULT_KAPPA_FINGER, target_tmr=0.97, quality=DEFAULT_FINGER_QUALITY
        ),
        face=ModalityConfig(
            kappa=DEFAULT_KAPPA_FACE, target_tmr=0.995, quality=DEFAULT_FACE_QUALITY
        ),
        iris=ModalityConfig(
            kappa=DEFAULT_KAPPA_IRIS, target_tmr=0.9685, quality=DEFAULT_IRIS_QUALITY
        ),
    )


@dataclass(frozen=True)
class SyntheticIdentityModel:
    """Latent directions (unit per segment), base qualities, presence."""

    latent: np.ndarray  # (3456,) float32, every segment unit-norm
    base_quality: np.ndarray  # (13,) float64
    presence: np.ndarray  # (13,) bool


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    x /= norms
    return x


def _stream(seed: int, domain: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(domain, index)))


def _sample_latents(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3456) float32 with each segment an independent uniform unit direction."""
    lat = rng.standard_normal((n, TEMPLATE_DIM), dtype=np.float32)
    for sl in SEGMENT_SLICES:
        _unit_rows(lat[:, sl])
    return lat


def _sample_qualities(rng: np.random.Generator, config: SynthConfig, n: int) -> np.ndarray:
    hard = rng.random(n) < config.hard_subject_rate
    q = np.empty((n, N_SEGMENTS), dtype=np.float64)
    q[:, :10] = config.finger.quality.sample(rng, n, 10, hard_mask=hard)
    q[:, FACE_INDEX : FACE_INDEX + 1] = config.face.quality.sample(rng, n, 1)
    q[:, IRIS_LEFT_INDEX:] = config.iris.quality.sample(rng, n, 2, hard_mask=hard)
    return q


def _sample_presence(rng: np.random.Generator, config: SynthConfig, n: int) -> np.ndarray:
    presence = np.ones((n, N_SEGMENTS), dtype=bool)
    if config.finger_missing_rate > 0:
        presence[:, :10] = rng.random((n, 10)) >= config.finger_missing_rate
    if config.face_missing_rate > 0:
        presence[:, FACE_INDEX] = rng.random(n) >= config.face_missing_rate
    if config.iris_missing_rate > 0:
        both = rng.random(n) >= config.iris_missing_rate
        presence[:, IRIS_LEFT_INDEX] = both
        presence[:, IRIS_RIGHT_INDEX] = both
    # an empty template is not enrollable; keep face as the fallback
    empty = ~presence.any(axis=1)
    presence[empty, FACE_INDEX] = True
    return presence


def sample_identity(rng: np.random.Generator, config: SynthConfig) -> SyntheticIdentityModel:
    """Draw one identity: uniform latent directions, correlated qualities, presence."""
    latent = _sample_latents(rng, 1)[0]
    quality = _sample_qualities(rng, config, 1)[0]
    presence = _sample_presence(rng, config, 1)[0]
    return SyntheticIdentityModel(latent=latent, base_quality=quality, presence=presence)


def _observe_segments(
    latents: np.ndarray,
    kappa_eff: np.ndarray,
    presence: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Perturb each present segment of each row; absent segments are zeroed.

    latents: (n, 3456) unit-per-segment; kappa_eff: (n, 13); presence: (n, 13).
    """
    out = np.empty_like(latents)
    sigma = 1.0 / np.sqrt(np.maximum(kappa_eff, _MIN_KAPPA))
    for i, sl in enumerate(SEGMENT_SLICES):
        mu = latents[:, sl]
        xi = rng.standard_normal(mu.shape, dtype=np.float32)
        proj = np.einsum("nd,nd->n", xi, mu)
        xi -= proj[:, None] * mu
        v = mu + sigma[:, i, None].astype(np.float32) * xi
        out[:, sl] = _unit_rows(v)
        out[~presence[:, i], sl.start : sl.stop] = 0.0
    return out


def sample_observation(
    identity: SyntheticIdentityModel,
    rng: np.random.Generator,
    config: SynthConfig,
    quality_draw: float = 1.0,
) -> MultiBiometricTemplate:
    """One noisy observation of an identity as an assembled template."""
    kappa_eff = config.segment_kappas() * identity.base_quality * float(quality_draw)
    vec = _observe_segments(
        identity.latent[None, :], kappa_eff[None, :], identity.presence[None, :], rng
    )[0]
    est = np.clip(
        identity.base_quality
        + rng.uniform(-_QUALITY_ESTIMATE_NOISE, _QUALITY_ESTIMATE_NOISE, N_SEGMENTS),
        0.0,
        1.0,
    )
    quality = np.where(identity.presence, est, 0.0).astype(np.float32)
    return MultiBiometricTemplate(
        vector=vec.astype(np.float32),
        presence=identity.presence.copy(),
        quality=quality,
    )


@dataclass
class _IdentityChunk:
    latents: np.ndarray  # (c, 3456) float32
    base_quality: np.ndarray  # (c, 13)
    presence: np.ndarray  # (c, 13) bool


class IdentityPopulation:
    """Deterministic, indexable family of synthetic identities.

    Identity i lives in chunk i // CHUNK; each chunk is generated from its
    own (seed, domain, chunk) stream, so any slice of the population can
    be regenerated independently and in parallel.
    """

    def __init__(self, config: SynthConfig, seed: int, cache_chunks: int = 8):
        self.config = config
        self.seed = int(seed)
        self._cache: dict[int, _IdentityChunk] = {}
        self._cache_order: list[int] = []
        self._cache_chunks = cache_chunks

    def chunk(self, j: int) -> _IdentityChunk:
        if j in self._cache:
            return self._cache[j]
        rng = _stream(self.seed, _D_IDENTITY, j)
        chunk = _IdentityChunk(
            latents=_sample_latents(rng, CHUNK),
            base_quality=_sample_qualities(rng, self.config, CHUNK),
            presence=_sample_presence(rng, self.config, CHUNK),
        )
        self._cache[j] = chunk
        self._cache_order.append(j)
        if len(self._cache_order) > self._cache_chunks:
            evict = self._cache_order.pop(0)
            del self._cache[evict]
        return chunk

    def identity(self, index: int) -> SyntheticIdentityModel:
        c = self.chunk(index // CHUNK)
        off = index % CHUNK
        return SyntheticIdentityModel(
            latent=c.latents[off].copy(),
            base_quality=c.base_quality[off].copy(),
            presence=c.presence[off].copy(),
        )

    def observe_indices(
        self, indices: np.ndarray, rng: np.random.Generator, quality_draw: float = 1.0
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(vectors, presence, quality) for fresh observations of the given identities.

        Noise comes from `rng`; identity latents/qualities come from the
        population streams.
        """
        n = indices.shape[0]
        vectors = np.empty((n, TEMPLATE_DIM), dtype=np.float32)
        presence = np.empty((n, N_SEGMENTS), dtype=bool)
        quality = np.empty((n, N_SEGMENTS), dtype=np.float32)
        kappas = self.config.segment_kappas()
        order = np.argsort(indices, kind="stable")
        pos = 0
        while pos < n:
            j = int(indices[order[pos]]) // CHUNK
            end = pos
            while end < n and int(indices[order[end]]) // CHUNK == j:
                end += 1
            sel = order[pos:end]
            offs = indices[sel] % CHUNK
            c = self.chunk(j)
            lat = c.latents[offs]
            qual = c.base_quality[offs]
            pres = c.presence[offs]
            kappa_eff = kappas[None, :] * qual * float(quality_draw)
            vectors[sel] = _observe_segments(lat, kappa_eff, pres, rng)
            est = np.clip(
                qual + rng.uniform(-_QUALITY_ESTIMATE_NOISE, _QUALITY_ESTIMATE_NOISE, qual.shape),
                0.0,
                1.0,
            )
            presence[sel] = pres
            quality[sel] = np.where(pres, est, 0.0).astype(np.float32)
            pos = end
        return vectors, presence, quality


def generate_gallery(
    n: int,
    config: SynthConfig,
    seed: int,
    shard_size: int = 100_000,
) -> tuple[Gallery, dict[int, int]]:
    """Enroll one observation of each of n identities.

    Gallery id i+1 holds identity index i; the registry maps id -> index.
    Deterministic in (n, config, seed) and independent of chunk parallelism.
    """
    if n < 1:
        raise ValueError("gallery size must be >= 1")
    population = IdentityPopulation(config, seed, cache_chunks=2)
    gallery = Gallery(shard_size=shard_size)
    registry: dict[int, int] = {}
    for start in range(0, n, CHUNK):
        stop = min(start + CHUNK, n)
        idx = np.arange(start, stop, dtype=np.int64)
        rng = _stream(seed, _D_ENROLL, start // CHUNK)
        vectors, presence, quality = population.observe_indices(idx, rng)
        ids = (idx + 1).astype(np.uint64)
        gallery.add_rows(vectors, ids, presence, quality)
        for i in idx:
            registry[int(i) + 1] = int(i)
    return gallery, registry


@dataclass
class ProbeSet:
    """Probe templates plus ground-truth mate labels (None = non-mated)."""

    templates: list[MultiBiometricTemplate]
    mate_ids: list[Optional[int]]


def generate_probe_sets(
    config: SynthConfig,
    seed: int,
    gallery_size: int,
    n_mated: int,
    n_nonmated: int,
    mate_pool_size: Optional[int] = None,
) -> tuple[ProbeSet, ProbeSet]:
    """Fresh observations: mated probes of enrolled identities, non-mated
    probes of identities beyond the gallery.

    `seed` must match the gallery's seed so identities line up. Mated
    probes draw their identities from the first `mate_pool_size` enrolled
    (all of them by default), with replacement when the pool is smaller
    than the request.
    """
    pool = gallery_size if mate_pool_size is None else int(mate_pool_size)
    if pool < 1 or pool > gallery_size:
        raise ValueError("mate_pool_size must be in [1, gallery_size]")
    if n_mated < 0 or n_nonmated < 0:
        raise ValueError("probe counts must be >= 0")
    population = IdentityPopulation(config, seed, cache_chunks=4)

    sel_rng = _stream(seed, _D_MATED_PROBE, 0)
    if n_mated <= pool:
        mated_idx = np.sort(sel_rng.choice(pool, size=n_mated, replace=False))
    else:
        mated_idx = np.sort(sel_rng.choice(pool, size=n_mated, replace=True))
    noise_rng = _stream(seed, _D_MATED_PROBE, 1)
    mv, mp, mq = population.observe_indices(mated_idx.astype(np.int64), noise_rng)
    mated = ProbeSet(
        templates=[
            MultiBiometricTemplate(vector=mv[i], presence=mp[i], quality=mq[i])
            for i in range(n_mated)
        ],
        mate_ids=[int(ix) + 1 for ix in mated_idx],
    )

    nonmated_idx = np.arange(gallery_size, gallery_size + n_nonmated, dtype=np.int64)
    noise_rng = _stream(seed, _D_NONMATED_PROBE, 0)
    nv, np_, nq = population.observe_indices(nonmated_idx, noise_rng)
    nonmated = ProbeSet(
        templates=[
            MultiBiometricTemplate(vector=nv[i], presence=np_[i], quality=nq[i])
            for i in range(n_nonmated)
        ],
        mate_ids=[None] * n_nonmated,
    )
    return mated, nonmated


# --- file interchange ---------------------------------------------------

def save_probe_set(probe_set: ProbeSet, path) -> None:
    """Probe templates in the gallery file format; subject_id = probe seq (1-based)."""
    from .gallery import save_gallery

    g = Gallery(shard_size=max(1, len(probe_set.templates)))
    for i, t in enumerate(probe_set.templates):
        g.add(
            MultiBiometricTemplate(
                vector=t.vector, presence=t.presence, quality=t.quality, subject_id=i + 1
            ),
            gallery_id=i + 1,
        )
    save_gallery(g, path)


def load_probe_set(path, mate_ids: dict[int, Optional[int]]) -> ProbeSet:
    """Rebuild a ProbeSet from a probe file plus a {probe_id: mate_id} map."""
    from .gallery import load_gallery

    g = load_gallery(path, shard_size=max(1, 1 << 20))
    templates = []
    mates: list[Optional[int]] = []
    for pid in range(1, g.n_rows + 1):
        templates.append(g.template_of(pid))
        mates.append(mate_ids.get(pid))
    return ProbeSet(templates=templates, mate_ids=mates)


def write_truth_registry(
    path,
    gallery_registry: dict[int, int],
    mated: Optional[ProbeSet] = None,
    nonmated: Optional[ProbeSet] = None,
) -> None:
    """JSON-lines ground truth: gallery id -> identity plus probe labels."""
    import json

    with open(path, "w") as f:
        for gid in sorted(gallery_registry):
            f.write(
                json.dumps(
                    {"kind": "gallery", "gallery_id": gid, "identity_index": gallery_registry[gid]}
                )
                + "\n"
            )
        for setname, ps in (("mated", mated), ("nonmated", nonmated)):
            if ps is None:
                continue
            for i, mate in enumerate(ps.mate_ids):
                f.write(
                    json.dumps(
                        {"kind": "probe", "set": setname, "probe_id": i + 1, "mate_id": mate}
                    )
                    + "\n"
                )


def read_truth_registry(path):
    """(gallery_registry, mated mate-map, non-mated probe-id set)."""
    import json

    gallery_registry: dict[int, int] = {}
    mated: dict[int, Optional[int]] = {}
    nonmated: dict[int, Optional[int]] = {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["kind"] == "gallery":
                gallery_registry[int(rec["gallery_id"])] = int(rec["identity_index"])
            elif rec["kind"] == "probe":
                target = mated if rec["set"] == "mated" else nonmated
                target[int(rec["probe_id"])] = rec["mate_id"]
    return gallery_registry, mated, nonmated


# --- kappa calibration ------------------------------------------------------

_CAL_CHUNK = 25_000


def _nonmated_scores(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inner products of two independent uniform unit directions.

    This is exactly the non-mated observation law for any kappa: an
    isotropic perturbation of a uniform latent is itself uniform.
    """
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CAL_CHUNK):
        stop = min(start + _CAL_CHUNK, n)
        a = _unit_rows(rng.standard_normal((stop - start, dim), dtype=np.float32))
        b = _unit_rows(rng.standard_normal((stop - start, dim), dtype=np.float32))
        scores[start:stop] = np.einsum("nd,nd->n", a, b, dtype=np.float64)
    return scores


def _observe_single(
    latents: np.ndarray, kappa_eff: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Single-segment observation used by calibration (one modality at a time)."""
    xi = rng.standard_normal(latents.shape, dtype=np.float32)
    proj = np.einsum("nd,nd->n", xi, latents)
    xi -= proj[:, None] * latents
    sigma = (1.0 / np.sqrt(np.maximum(kappa_eff, _MIN_KAPPA))).astype(np.float32)
    return _unit_rows(latents + sigma[:, None] * xi)


def _mated_scores(
    dim: int,
    n: int,
    kappa: float,
    seed: int,
    quality_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]],
) -> np.ndarray:
    """Mated pair scores. Driven by a fixed seed so repeated calls with
    different kappa reuse the same underlying draws (common random numbers)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CAL_CHUNK):
        m = min(start + _CAL_CHUNK, n) - start
        lat = _unit_rows(rng.standard_normal((m, dim), dtype=np.float32))
        q = quality_sampler(rng, m) if quality_sampler is not None else np.ones(m)
        kappa_eff = kappa * q
        v1 = _observe_single(lat, kappa_eff, rng)
        v2 = _observe_single(lat, kappa_eff, rng)
        scores[start : start + m] = np.einsum("nd,nd->n", v1, v2, dtype=np.float64)
    return scores


def quality_sampler_for(
    model: QualityModel, hard_subject_rate: float = 0.0
) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Marginal base-quality sampler (one segment), shared by a mated pair.

    Includes the coupled hard-subject trigger so the calibration marginal
    matches what generation produces.
    """

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        hard = rng.random(n) < hard_subject_rate if hard_subject_rate > 0 else None
        return model.sample(rng, n, 1, hard_mask=hard)[:, 0]

    return sampler


def calibrate_noise(
    dim: int,
    target: tuple[float, float],
    rng: np.random.Generator,
    quality_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
    n_mated: int = 100_000,
    n_nonmated: int = 1_000_000,
    kappa_lo: float = 1e-2,
    kappa_hi: float = 1e8,
    iterations: int = 18,
) -> float:
    """Bisect kappa until Monte Carlo TMR at the target FMR hits the target.

    The search is the oracle: at each step the TMR at the empirical FMR
    threshold is estimated from scratch (with common random numbers so the
    curve is monotone in kappa). Deterministic for a given `rng` state.
    """
    tmr_target, fmr_target = target
    if not 0.0 < fmr_target < tmr_target <= 1.0:
        raise ValueError("need 0 < fmr < tmr <= 1")
    seed_nm, seed_mated = (int(s) for s in rng.integers(0, 2**63, size=2))
    threshold = threshold_at_fmr(
        _nonmated_scores(dim, n_nonmated, np.random.default_rng(seed_nm)), fmr_target
    )

    def tmr_at(kappa: float) -> float:
        s = _mated_scores(dim, n_mated, kappa, seed_mated, quality_sampler)
        return float(np.mean(s >= threshold))

    tmr_hi = tmr_at(kappa_hi)
    if tmr_hi < tmr_target:
        raise CalibrationError(
            f"target TMR {tmr_target} unreachable at FMR {fmr_target}: "
            f"best {tmr_hi:.5f} at kappa {kappa_hi:g}",
            best_kappa=kappa_hi,
            best_tmr=tmr_hi,
        )
    lo, hi = np.log(kappa_lo), np.log(kappa_hi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if tmr_at(float(np.exp(mid))) >= tmr_target:
            hi = mid
        else:
            lo = mid
    return float(np.exp(hi))


def verify_operating_point(
    dim: int,
    kappa: float,
    fmr_target: float,
    rng: np.random.Generator,
    quality_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
    n_mated: int = 100_000,
    n_nonmated: int = 1_000_000,
) -> tuple[float, float]:
    """Fresh-sample (TMR, threshold) at the target FMR for a given kappa.

    Non-mated pairs are honest observations of two distinct identities.
    """
    nm = np.empty(n_nonmated, dtype=np.float64)
    for start in range(0, n_nonmated, _CAL_CHUNK):
        m = min(start + _CAL_CHUNK, n_nonmated) - start
        lat1 = _unit_rows(rng.standard_normal((m, dim), dtype=np.float32))
        lat2 = _unit_rows(rng.standard_normal((m, dim), dtype=np.float32))
        q1 = quality_sampler(rng, m) if quality_sampler is not None else np.ones(m)
        q2 = quality_sampler(rng, m) if quality_sampler is not None else np.ones(m)
        v1 = _observe_single(lat1, kappa * q1, rng)
        v2 = _observe_single(lat2, kappa * q2, rng)
        nm[start : start + m] = np.einsum("nd,nd->n", v1, v2, dtype=np.float64)
    seed_mated = int(rng.integers(0, 2**63))
    mated = _mated_scores(dim, n_mated, kappa, seed_mated, quality_sampler)
    from .metrics import tmr_at_fmr

    return tmr_at_fmr(mated, nm, fmr_target)


def calibrate_config(config: SynthConfig, seed: int, **kwargs) -> SynthConfig:
    """Recalibrate all three modality kappas under their quality models."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9, 0)))
    finger = calibrate_noise(
        FINGER_DIM,
        (config.finger.target_tmr, config.finger.target_fmr),
        rng,
        quality_sampler_for(config.finger.quality, config.hard_subject_rate),
        **kwargs,
    )
    face = calibrate_noise(
        FACE_DIM,
        (config.face.target_tmr, config.face.target_fmr),
        rng,
        quality_sampler_for(config.face.quality),
        **kwargs,
    )
    iris = calibrate_noise(
        IRIS_DIM,
        (config.iris.target_tmr, config.iris.target_fmr),
        rng,
        quality_sampler_for(config.iris.quality, config.hard_subject_rate),
        **kwargs,
    )
    return replace(
        config,
        finger=replace(config.finger, kappa=finger),
        face=replace(config.face, kappa=face),
        iris=replace(config.iris, kappa=iris),
    )
