"""Enrollment / verification / search service with a human adjudication loop.

The core logic lives in DedupService, a plain object driven by the HTTP
layer (FastAPI) but fully usable without it. Enrollment runs the packet
pipeline, searches the gallery, and either auto-enrolls (top fused score
below the adjudication threshold) or opens a Pending adjudication case
holding the probe template. A human decision of Unique enrolls the held
probe; Duplicate links it to the matched candidate and drops it. Every
decision lands in an append-only audit log.

Concurrency: enrollment and adjudication side effects are serialized
through a single writer lock per service (two concurrent enrollments of
the same person must never both auto-enroll; the second must see the
first). Verification, search and queue reads take no lock; they observe
the last committed row counts of the shard store.

Persistence is deliberately plain: JSON-lines event logs for cases and
audit records, plus on-demand gallery snapshots; re-reading the case log
restores adjudication state after a restart.

Note: no postponed annotations here; FastAPI needs the request models'
annotations resolvable at runtime.
"""

import base64
import enum
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fusion, pipeline
from .errors import (
    CapacityError,
    EmptyTemplateError,
    NotFoundError,
    StageError,
    StateConflictError,
)
from .gallery import Gallery, CandidateList, load_gallery
from .gallery import save_gallery as write_gallery_file
from .template import (
    MultiBiometricTemplate,
    SEGMENT_NAMES,
    deserialize_template,
    serialize_template,
)


class CaseState(enum.Enum):
    PENDING = "Pending"
    DUPLICATE = "Duplicate"
    UNIQUE = "Unique"


@dataclass
class AdjudicationCase:
    case_id: str
    seq: int
    probe_template: MultiBiometricTemplate
    candidates: CandidateList
    state: CaseState = CaseState.PENDING
    adjudicator: str = ""
    created_at: float = 0.0
    decided_at: Optional[float] = None
    linked_candidate_id: Optional[int] = None
    enrolled_id: Optional[int] = None
    packet_id: str = ""


class EnrollStatus(enum.Enum):
    ENROLLED = "enrolled"
    FLAGGED = "flagged_for_adjudication"
    REJECTED = "rejected"


@dataclass
class EnrollOutcome:
    status: EnrollStatus
    gallery_id: Optional[int] = None
    case_id: Optional[str] = None
    reason: Optional[str] = None
    top_score: Optional[float] = None
    exceptions: list = field(default_factory=list)


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    gallery_path: Optional[str] = None
    state_dir: Optional[str] = None
    weight_profile: str = "adult"
    shard_size: int = 100_000
    max_gallery_rows: Optional[int] = None
    search_k: int = 50
    n_workers: int = 4
    # flag-rate interpretation: tau calibrated so ~0.1% of non-mated probes
    # are sent to adjudication on the default synthetic gallery
    adjudication_tau: float = 0.11
    verification_tau: float = 0.2
    snapshot_every: int = 0  # gallery snapshot after this many writes; 0 = off
    pipeline_seed: int = 0


class DedupService:
    def __init__(
        self,
        config: ServiceConfig,
        gallery: Optional[Gallery] = None,
        stages: Optional[pipeline.PipelineStages] = None,
        weights=None,
    ):
        self.config = config
        if gallery is not None:
            self.gallery = gallery
        elif config.gallery_path and Path(config.gallery_path).exists():
            self.gallery = load_gallery(config.gallery_path, shard_size=config.shard_size)
        else:
            self.gallery = Gallery(
                shard_size=config.shard_size, max_rows=config.max_gallery_rows
            )
        self.weights = fusion.default_weights() if weights is None else fusion.validate_weights(weights)
        self.stages = stages or pipeline.default_stages(config.pipeline_seed)
        self._writer = threading.Lock()
        self._cases: dict[str, AdjudicationCase] = {}
        self._case_seq = 0
        self._writes_since_snapshot = 0
        self.counters = {
            "enroll_requests": 0,
            "enrolled": 0,
            "flagged": 0,
            "rejected": 0,
            "verifications": 0,
            "searches": 0,
            "probes_searched": 0,
            "decisions": 0,
        }
        self._state_dir = Path(config.state_dir) if config.state_dir else None
        if self._state_dir:
            self._state_dir.mkdir(parents=True, exist_ok=True)
            self._replay_case_log()

    # --- persistence ---------------------------------------------------

    def _case_log_path(self) -> Optional[Path]:
        return self._state_dir / "cases.jsonl" if self._state_dir else None

    def _audit_log_path(self) -> Optional[Path]:
        return self._state_dir / "audit.jsonl" if self._state_dir else None

    def _append_event(self, path: Optional[Path], event: dict) -> None:
        if path is None:
            return
        with open(path, "a") as f:
            f.write(json.dumps(event) + "\n")

    def _replay_case_log(self) -> None:
        path = self._case_log_path()
        if path is None or not path.exists():
            return
        with open(path) as f:
            for line in f:
                event = json.loads(line)
                if event["event"] == "created":
                    template = deserialize_template(base64.b64decode(event["template_b64"]))
                    case = AdjudicationCase(
                        case_id=event["case_id"],
                        seq=int(event["seq"]),
                        probe_template=template,
                        candidates=CandidateList(),
                        created_at=event["created_at"],
                        packet_id=event.get("packet_id", ""),
                    )
                    case._candidate_rows = event.get("candidates", [])  # type: ignore[attr-defined]
                    self._cases[case.case_id] = case
                    self._case_seq = max(self._case_seq, case.seq)
                elif event["event"] == "decided":
                    case = self._cases.get(event["case_id"])
                    if case:
                        case.state = CaseState(event["decision"])
                        case.adjudicator = event["adjudicator"]
                        case.decided_at = event["decided_at"]
                        case.linked_candidate_id = event.get("linked_candidate_id")
                        case.enrolled_id = event.get("enrolled_id")

    def _maybe_snapshot(self) -> None:
        if not self.config.gallery_path or self.config.snapshot_every <= 0:
            return
        self._writes_since_snapshot += 1
        if self._writes_since_snapshot >= self.config.snapshot_every:
            write_gallery_file(self.gallery, self.config.gallery_path)
            self._writes_since_snapshot = 0

    def save_snapshot(self) -> None:
        if self.config.gallery_path:
            write_gallery_file(self.gallery, self.config.gallery_path)
            self._writes_since_snapshot = 0

    # --- core operations -------------------------------------------------

    def enroll(self, packet: pipeline.EnrollmentPacket) -> EnrollOutcome:
        """Pipeline -> template -> 1:N search -> decide -> insert or flag."""
        self.counters["enroll_requests"] += 1
        try:
            template, exceptions = pipeline.process_enrollment_packet(packet, self.stages)
        except (EmptyTemplateError, StageError) as exc:
            self.counters["rejected"] += 1
            return EnrollOutcome(status=EnrollStatus.REJECTED, reason=str(exc))
        exc_records = [e.__dict__ for e in exceptions]
        with self._writer:
            top_score = None
            if self.gallery.n_rows > 0:
                result = self.gallery.search(
                    [template], self.weights, k=self.config.search_k,
                    n_workers=self.config.n_workers,
                )[0]
            else:
                result = CandidateList()
            if result.entries:
                top_score = result.entries[0].fused.value
            if top_score is not None and top_score >= self.config.adjudication_tau:
                case = self._open_case(template, result, packet.packet_id)
                self.counters["flagged"] += 1
                return EnrollOutcome(
                    status=EnrollStatus.FLAGGED,
                    case_id=case.case_id,
                    top_score=top_score,
                    exceptions=exc_records,
                )
            try:
                gallery_id = self.gallery.add(template)
            except CapacityError as exc:
                self.counters["rejected"] += 1
                return EnrollOutcome(status=EnrollStatus.REJECTED, reason=str(exc))
            self._maybe_snapshot()
        self.counters["enrolled"] += 1
        return EnrollOutcome(
            status=EnrollStatus.ENROLLED,
            gallery_id=gallery_id,
            top_score=top_score,
            exceptions=exc_records,
        )

    def _open_case(
        self, template: MultiBiometricTemplate, candidates: CandidateList, packet_id: str
    ) -> AdjudicationCase:
        self._case_seq += 1
        case = AdjudicationCase(
            case_id=f"case-{self._case_seq:06d}",
            seq=self._case_seq,
            probe_template=template,
            candidates=candidates,
            created_at=time.time(),
            packet_id=packet_id,
        )
        self._cases[case.case_id] = case
        self._append_event(
            self._case_log_path(),
            {
                "event": "created",
                "case_id": case.case_id,
                "seq": case.seq,
                "created_at": case.created_at,
                "packet_id": packet_id,
                "template_b64": base64.b64encode(serialize_template(template)).decode(),
                "candidates": [
                    {"gallery_id": c.gallery_id, "score": c.fused.value}
                    for c in candidates.entries
                ],
            },
        )
        return case

    def verify(
        self, gallery_id: int, template: MultiBiometricTemplate
    ) -> tuple[fusion.FusedScore, fusion.Decision]:
        """1:1 comparison against one enrolled identity; never searches."""
        if gallery_id not in self.gallery:
            raise NotFoundError(f"gallery id {gallery_id} not enrolled")
        enrolled = self.gallery.template_of(gallery_id)
        score = fusion.fused_score(template, enrolled, self.weights)
        decision = fusion.decide(
            score, fusion.DecisionThreshold(self.config.verification_tau)
        )
        self.counters["verifications"] += 1
        return score, decision

    def search(self, template: MultiBiometricTemplate, k: int) -> CandidateList:
        result = self.gallery.search(
            [template], self.weights, k=k, n_workers=self.config.n_workers
        )[0]
        self.counters["searches"] += 1
        self.counters["probes_searched"] += 1
        return result

    def adjudicate(
        self, case_id: str, decision: CaseState, adjudicator: str
    ) -> AdjudicationCase:
        """Resolve a Pending case; Unique enrolls the held probe."""
        if decision not in (CaseState.DUPLICATE, CaseState.UNIQUE):
            raise ValueError("decision must be Duplicate or Unique")
        with self._writer:
            case = self._cases.get(case_id)
            if case is None:
                raise NotFoundError(f"unknown case {case_id}")
            if case.state is not CaseState.PENDING:
                raise StateConflictError(
                    f"case {case_id} already decided: {case.state.value}"
                )
            case.state = decision
            case.adjudicator = adjudicator
            case.decided_at = time.time()
            if decision is CaseState.UNIQUE:
                case.enrolled_id = self.gallery.add(case.probe_template)
                self._maybe_snapshot()
            else:
                if case.candidates.entries:
                    case.linked_candidate_id = case.candidates.entries[0].gallery_id
            self.counters["decisions"] += 1
            self._append_event(
                self._case_log_path(),
                {
                    "event": "decided",
                    "case_id": case.case_id,
                    "decision": decision.value,
                    "adjudicator": adjudicator,
                    "decided_at": case.decided_at,
                    "linked_candidate_id": case.linked_candidate_id,
                    "enrolled_id": case.enrolled_id,
                },
            )
            self._append_event(
                self._audit_log_path(),
                {
                    "ts": case.decided_at,
                    "case_id": case.case_id,
                    "decision": decision.value,
                    "adjudicator": adjudicator,
                    "linked_candidate_id": case.linked_candidate_id,
                    "enrolled_id": case.enrolled_id,
                },
            )
            return case

    def get_case(self, case_id: str) -> AdjudicationCase:
        case = self._cases.get(case_id)
        if case is None:
            raise NotFoundError(f"unknown case {case_id}")
        return case

    def list_cases(
        self,
        state: Optional[CaseState] = None,
        cursor: Optional[str] = None,
        page_size: int = 20,
    ) -> tuple[list[AdjudicationCase], Optional[str]]:
        """Creation-ordered page; the cursor is the last seen sequence number."""
        if page_size < 1:
            raise ValueError("page_size must be >= 1")
        after = 0
        if cursor:
            try:
                after = int(cursor)
            except ValueError:
                raise ValueError(f"bad cursor {cursor!r}") from None
        cases = sorted(self._cases.values(), key=lambda c: c.seq)
        cases = [c for c in cases if c.seq > after and (state is None or c.state is state)]
        page = cases[:page_size]
        next_cursor = str(page[-1].seq) if len(cases) > page_size else None
        return page, next_cursor

    def stats(self) -> dict:
        return {
            "gallery_size": self.gallery.n_rows,
            "shard_count": len(self.gallery.shards),
            "pending_cases": sum(
                1 for c in self._cases.values() if c.state is CaseState.PENDING
            ),
            "total_cases": len(self._cases),
            **self.counters,
        }


# --- HTTP layer --------------------------------------------------------------


def case_view(case: AdjudicationCase, detail: bool = False) -> dict:
    """JSON projection of a case; carries scores and ids, never vectors."""
    t = case.probe_template
    probe = {
        "presence": {
            name: bool(t.presence[i]) for i, name in enumerate(SEGMENT_NAMES)
        },
        "quality": {
            name: round(float(t.quality[i]), 4) for i, name in enumerate(SEGMENT_NAMES)
        },
    }
    candidates = []
    for c in case.candidates.entries:
        row = {
            "gallery_id": c.gallery_id,
            "score": c.fused.value if c.fused else c.raw_dot,
        }
        if detail and c.fused is not None:
            row["per_segment"] = {
                name: float(c.fused.per_segment[i])
                for i, name in enumerate(SEGMENT_NAMES)
            }
            row["effective_weight_sum"] = c.fused.effective_weight_sum
            row["raw_dot"] = c.raw_dot
        candidates.append(row)
    view = {
        "case_id": case.case_id,
        "state": case.state.value,
        "created_at": case.created_at,
        "decided_at": case.decided_at,
        "adjudicator": case.adjudicator or None,
        "packet_id": case.packet_id,
        "top_score": candidates[0]["score"] if candidates else None,
        "probe": probe,
        "candidates": candidates if detail else candidates[:3],
        "linked_candidate_id": case.linked_candidate_id,
        "enrolled_id": case.enrolled_id,
    }
    return view


def _template_from_b64(data: str) -> MultiBiometricTemplate:
    return deserialize_template(base64.b64decode(data))


def build_app(service: DedupService, ui_dir: Optional[str] = None):
    from fastapi import FastAPI, HTTPException, Query
    from fastapi.staticfiles import StaticFiles
    from pydantic import BaseModel, Field

    from . import __version__
    from .errors import FormatError

    class SegmentPayloadIn(BaseModel):
        features: list[float]
        latent_quality: float = 1.0
        live: bool = True

    class EnrollRequest(BaseModel):
        packet_id: str = ""
        operator: str = ""
        segments: dict[str, SegmentPayloadIn] = Field(default_factory=dict)
        failure_to_acquire: list[str] = Field(default_factory=list)

    class VerifyRequest(BaseModel):
        gallery_id: int
        template_b64: str

    class SearchRequest(BaseModel):
        template_b64: str
        k: int = 10

    class DecisionRequest(BaseModel):
        decision: str
        adjudicator: str

    app = FastAPI(title="biodedup", version=__version__)

    @app.post("/v1/enroll")
    def enroll(req: EnrollRequest):
        try:
            packet = pipeline.EnrollmentPacket(
                packet_id=req.packet_id or f"pkt-{int(time.time()*1000)}",
                segments={
                    name: pipeline.SegmentPayload(
                        features=np.asarray(p.features, dtype=np.float32),
                        latent_quality=p.latent_quality,
                        live=p.live,
                    )
                    for name, p in req.segments.items()
                },
                failure_to_acquire=set(req.failure_to_acquire),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        outcome = service.enroll(packet)
        return {
            "outcome": outcome.status.value,
            "gallery_id": outcome.gallery_id,
            "case_id": outcome.case_id,
            "reason": outcome.reason,
            "top_score": outcome.top_score,
            "exceptions": outcome.exceptions,
        }

    @app.post("/v1/verify")
    def verify(req: VerifyRequest):
        try:
            template = _template_from_b64(req.template_b64)
            score, decision = service.verify(req.gallery_id, template)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (FormatError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "gallery_id": req.gallery_id,
            "score": score.value,
            "per_segment": {
                name: float(score.per_segment[i]) for i, name in enumerate(SEGMENT_NAMES)
            },
            "effective_weight_sum": score.effective_weight_sum,
            "decision": "match" if decision is fusion.Decision.DUPLICATE else "no_match",
        }

    @app.post("/v1/search")
    def search(req: SearchRequest):
        if req.k < 1:
            raise HTTPException(status_code=400, detail="k must be >= 1")
        try:
            template = _template_from_b64(req.template_b64)
        except (FormatError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        result = service.search(template, req.k)
        return {
            "candidates": [
                {
                    "gallery_id": c.gallery_id,
                    "score": c.fused.value,
                    "raw_dot": c.raw_dot,
                    "per_segment": {
                        name: float(c.fused.per_segment[i])
                        for i, name in enumerate(SEGMENT_NAMES)
                    },
                    "effective_weight_sum": c.fused.effective_weight_sum,
                }
                for c in result.entries
            ]
        }

    @app.get("/v1/adjudication/cases")
    def list_cases(
        state: Optional[str] = Query(default=None),
        cursor: Optional[str] = Query(default=None),
        page_size: int = Query(default=20, ge=1, le=200),
    ):
        case_state = None
        if state:
            try:
                case_state = CaseState(state)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown state {state!r}")
        try:
            cases, next_cursor = service.list_cases(case_state, cursor, page_size)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"cases": [case_view(c) for c in cases], "next_cursor": next_cursor}

    @app.get("/v1/adjudication/cases/{case_id}")
    def get_case(case_id: str):
        try:
            case = service.get_case(case_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return case_view(case, detail=True)

    @app.post("/v1/adjudication/cases/{case_id}/decision")
    def decide_case(case_id: str, req: DecisionRequest):
        try:
            decision = CaseState(req.decision)
        except ValueError:
            raise HTTPException(
                status_code=400, detail=f"decision must be Duplicate or Unique"
            )
        if not req.adjudicator:
            raise HTTPException(status_code=400, detail="adjudicator is required")
        try:
            case = service.adjudicate(case_id, decision, req.adjudicator)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except StateConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except CapacityError as exc:
            raise HTTPException(status_code=507, detail=str(exc))
        return case_view(case, detail=True)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/v1/stats")
    def stats():
        return service.stats()

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
