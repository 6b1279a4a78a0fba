"""Session state machine tying stage 1 and stage 2 together.

The manager policy handles three exceptional situations: provider refusals
and technical failures are retried with backoff, and severe harmful content
detected during extraction escalates the session immediately, bypassing
stage 2 with a template warning report.

Per session: four agent threads for stage 1 (shared state updated through a
single serialized event applier), then stage 2 on the driving thread.
Distinct sessions are independent.
"""

from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .agents import AgentRuntime, run_agent
from .clocks import Clock, RealClock
from .domain import (
    ASPECT_ORDER,
    Aspect,
    AspectReport,
    DrawingSubmission,
    FeatureObservation,
    FinalReport,
    RiskLevel,
    Severity,
    format_timestamp,
    parse_timestamp,
)
from .gateway import AttemptRecord, ModelGateway, SamplingParams
from .prompts import DEFAULT_LOCALE
from .storage import NotFound, Store
from .synthesis import (
    ClassificationRule,
    assemble_final_report,
    classify_risk,
    escalation_notice_text,
    label_tendencies,
    synthesize_summary,
)
from .taxonomy import Taxonomy, judge_observation

log = logging.getLogger(__name__)


class Phase(str, Enum):
    QUEUED = "queued"
    STAGE1_RUNNING = "stage1_running"
    STAGE1_COMPLETE = "stage1_complete"
    STAGE2_RUNNING = "stage2_running"
    COMPLETED = "completed"
    ESCALATED_HARM = "escalated_harm"
    FAILED = "failed"


TERMINAL_PHASES = (Phase.COMPLETED, Phase.ESCALATED_HARM, Phase.FAILED)

# Failed is additionally reachable from the two intermediate phases so a
# failure can always terminate the session instead of wedging it.
_ALLOWED_TRANSITIONS = {
    Phase.QUEUED: {Phase.STAGE1_RUNNING, Phase.FAILED},
    Phase.STAGE1_RUNNING: {Phase.STAGE1_COMPLETE, Phase.ESCALATED_HARM, Phase.FAILED},
    Phase.STAGE1_COMPLETE: {Phase.STAGE2_RUNNING, Phase.FAILED},
    Phase.STAGE2_RUNNING: {Phase.COMPLETED, Phase.FAILED},
}


class EventKind(str, Enum):
    AGENT_STARTED = "agent_started"
    AGENT_FINISHED = "agent_finished"
    RETRY_SCHEDULED = "retry_scheduled"
    REFUSAL_DETECTED = "refusal_detected"
    HARM_DETECTED = "harm_detected"
    NETWORK_ERROR = "network_error"
    STAGE_ADVANCED = "stage_advanced"
    ESCALATED = "escalated"
    FAILED = "failed"


class Action(str, Enum):
    SCHEDULE_RETRY = "schedule_retry"
    ESCALATE_HARM = "escalate_harm"
    FAIL_SESSION = "fail_session"


class OrchestratorError(Exception):
    pass


class UnknownSubmission(OrchestratorError):
    def __init__(self, submission_id: str):
        super().__init__(f"submission {submission_id!r} is not persisted")


class IllegalTransition(OrchestratorError):
    pass


class AgentFailure(OrchestratorError):
    def __init__(self, aspect: Aspect, cause: Exception):
        super().__init__(f"{aspect.value} agent failed: {cause}")
        self.aspect = aspect
        self.cause = cause


class HarmSignal(Exception):
    """Control-flow signal: severe content found during extraction."""

    def __init__(self, aspect: Aspect, observations: list[FeatureObservation]):
        super().__init__(f"severe indicator in {aspect.value} observations")
        self.aspect = aspect
        self.observations = observations


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    at: object  # datetime
    kind: EventKind
    detail: str
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "at": format_timestamp(self.at),
            "kind": self.kind.value,
            "detail": self.detail,
            "data": self.data,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionEvent":
        return cls(
            seq=raw["seq"],
            at=parse_timestamp(raw["at"]),
            kind=EventKind(raw["kind"]),
            detail=raw["detail"],
            data=raw.get("data", {}),
        )


class SessionState:
    """Mutable per-session state; all mutation goes through the event applier."""

    def __init__(self, session_id: str, submission_id: str):
        self.session_id = session_id
        self.submission_id = submission_id
        self.phase = Phase.QUEUED
        self.aspect_status = {aspect: "pending" for aspect in ASPECT_ORDER}
        self.report_id: Optional[str] = None
        self.failure_reason: Optional[str] = None
        self.events: list[SessionEvent] = []

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def to_dict(self) -> dict:
        out = {
            "session_id": self.session_id,
            "submission_id": self.submission_id,
            "phase": self.phase.value,
            "aspect_status": {a.value: s for a, s in self.aspect_status.items()},
            "events": [e.to_dict() for e in self.events],
        }
        if self.report_id is not None:
            out["report_id"] = self.report_id
        if self.failure_reason is not None:
            out["failure_reason"] = self.failure_reason
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionState":
        state = cls(raw["session_id"], raw["submission_id"])
        state.phase = Phase(raw["phase"])
        state.aspect_status = {Aspect(a): s for a, s in raw["aspect_status"].items()}
        state.report_id = raw.get("report_id")
        state.failure_reason = raw.get("failure_reason")
        state.events = [SessionEvent.from_dict(e) for e in raw.get("events", [])]
        return state


def handle_exception(session: SessionState, event: SessionEvent) -> Action:
    """The manager policy: what to do about one exceptional event.

    Harm always escalates immediately; refusals and technical errors retry
    while attempts remain, then fail the session.
    """
    if event.kind is EventKind.HARM_DETECTED:
        return Action.ESCALATE_HARM
    if event.kind in (EventKind.REFUSAL_DETECTED, EventKind.NETWORK_ERROR):
        remaining = int(event.data.get("attempts_remaining", 0))
        return Action.SCHEDULE_RETRY if remaining > 0 else Action.FAIL_SESSION
    raise ValueError(f"{event.kind.value} is not an exceptional event")


def harm_scan(observations: list[FeatureObservation], taxonomy: Taxonomy) -> bool:
    """True iff any observation maps to severe severity in the catalog."""
    for obs in observations:
        if judge_observation(taxonomy, obs).severity is Severity.SEVERE:
            return True
    return False


def replay_phase(events: list[SessionEvent]) -> Phase:
    """Fold the event log back into the session phase (event-sourcing check)."""
    phase = Phase.QUEUED
    for event in events:
        if event.kind is EventKind.STAGE_ADVANCED:
            phase = Phase(event.data["to"])
        elif event.kind is EventKind.ESCALATED:
            phase = Phase.ESCALATED_HARM
        elif event.kind is EventKind.FAILED:
            phase = Phase.FAILED
    return phase


HALTED_INTERPRETATION = {
    "zh-CN": "该部分的解读因画面出现严重风险指标而中止，仅保留特征提取结果。",
    "en": (
        "Interpretation of this aspect was halted because a severe risk indicator "
        "appeared in the drawing; extracted observations are retained."
    ),
}

HARM_SUMMARY = {
    "zh-CN": (
        "特征提取阶段发现严重风险指标，分析流程已提前终止并直接生成预警。"
        "请尽快安排专业人员对该学生进行当面评估。"
    ),
    "en": (
        "A severe risk indicator was found during feature extraction; the analysis "
        "was halted early and this warning was issued directly. Please arrange an "
        "in-person professional assessment promptly."
    ),
}


class Orchestrator:
    """Drives sessions end to end against one store, taxonomy, and gateway."""

    def __init__(
        self,
        store: Store,
        taxonomy: Taxonomy,
        gateway: ModelGateway,
        rule: ClassificationRule = ClassificationRule(),
        clock: Optional[Clock] = None,
        rng: Optional[random.Random] = None,
        prompts_dir: Optional[Path] = None,
        locale: str = DEFAULT_LOCALE,
        interpretation_cap: int = 2000,
        sampling: Optional[SamplingParams] = None,
    ):
        self.store = store
        self.taxonomy = taxonomy
        self.gateway = gateway
        self.rule = rule
        self.clock = clock or gateway.clock
        self.rng = rng or random.Random()
        self.prompts_dir = prompts_dir
        self.locale = locale
        self.interpretation_cap = interpretation_cap
        self.sampling = sampling or SamplingParams()
        self._rng_lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- event applier --------------------------------------------------

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def _persist(self, session: SessionState) -> None:
        self.store.put("session", session.session_id, session.to_dict())

    def _append_event(
        self, session: SessionState, kind: EventKind, detail: str, data: Optional[dict] = None
    ) -> Optional[SessionEvent]:
        with self._lock_for(session.session_id):
            if session.terminal:
                log.debug("dropping %s event on terminal session %s", kind.value, session.session_id)
                return None
            event = SessionEvent(
                seq=len(session.events) + 1,
                at=self.clock.utcnow(),
                kind=kind,
                detail=detail,
                data=data or {},
            )
            session.events.append(event)
            self._persist(session)
            return event

    def _advance(self, session: SessionState, to: Phase, detail: str = "") -> None:
        with self._lock_for(session.session_id):
            allowed = _ALLOWED_TRANSITIONS.get(session.phase, set())
            if to not in allowed:
                raise IllegalTransition(f"{session.phase.value} -> {to.value}")
            event_kind = EventKind.STAGE_ADVANCED
            if to is Phase.ESCALATED_HARM:
                event_kind = EventKind.ESCALATED
            elif to is Phase.FAILED:
                event_kind = EventKind.FAILED
            session.events.append(
                SessionEvent(
                    seq=len(session.events) + 1,
                    at=self.clock.utcnow(),
                    kind=event_kind,
                    detail=detail or f"phase {to.value}",
                    data={"to": to.value},
                )
            )
            session.phase = to
            self._persist(session)

    def _set_aspect_status(self, session: SessionState, aspect: Aspect, status: str) -> None:
        with self._lock_for(session.session_id):
            session.aspect_status[aspect] = status
            self._persist(session)

    # -- public operations ------------------------------------------------

    def start_session(self, submission_id: str) -> str:
        """Create (or return the existing active) session for a submission."""
        if not self.store.exists("submission", submission_id):
            raise UnknownSubmission(submission_id)
        for key, body in self.store.list("session"):
            if body.get("submission_id") == submission_id and Phase(body["phase"]) not in TERMINAL_PHASES:
                return key
        with self._rng_lock:
            suffix = "".join(self.rng.choice("0123456789abcdef") for _ in range(16))
        session = SessionState("ses-" + suffix, submission_id)
        self._persist(session)
        self.store.append_audit(
            "session_started", {"session_id": session.session_id, "submission_id": submission_id}
        )
        return session.session_id

    def load_session(self, session_id: str) -> SessionState:
        body, _ = self.store.get("session", session_id)
        return SessionState.from_dict(body)

    def run_session(self, session_id: str) -> SessionState:
        """Drive one session to a terminal phase; exceptions become Failed."""
        session = self.load_session(session_id)
        if session.terminal:
            return session
        submission = self.store.get_submission(session.submission_id)
        try:
            outcome = self.run_stage1(session, submission)
            if isinstance(outcome, _HarmOutcome):
                self._escalate(session, submission, outcome)
            else:
                self.run_stage2(session, submission, outcome)
        except OrchestratorError as exc:
            self._fail(session, str(exc))
        except Exception as exc:  # a bug or gateway failure must still end the session
            log.exception("session %s failed", session_id)
            self._fail(session, f"{type(exc).__name__}: {exc}")
        return session

    # -- stage 1 ----------------------------------------------------------

    def _attempt_sink(self, session: SessionState, step: str):
        policy = self.gateway.policy

        def sink(record: AttemptRecord) -> None:
            if record.outcome_kind == "ok":
                return
            kind = (
                EventKind.REFUSAL_DETECTED
                if record.outcome_kind == "refusal"
                else EventKind.NETWORK_ERROR
            )
            remaining = max(policy.max_attempts - record.attempt, 0)
            event = self._append_event(
                session,
                kind,
                f"{step}: {record.detail}",
                {
                    "attempts_remaining": remaining,
                    "error_kind": record.outcome_kind,
                    "attempt": record.attempt,
                },
            )
            if event is None:
                return
            action = handle_exception(session, event)
            if action is Action.SCHEDULE_RETRY and record.delay_before_next is not None:
                self._append_event(
                    session,
                    EventKind.RETRY_SCHEDULED,
                    f"{step}: retry in {record.delay_before_next:g}s",
                    {"delay_s": record.delay_before_next, "attempt": record.attempt},
                )

        return sink

    def _runtime(self, session: SessionState) -> AgentRuntime:
        return AgentRuntime(
            taxonomy=self.taxonomy,
            gateway=self.gateway,
            prompts_dir=self.prompts_dir,
            locale=self.locale,
            interpretation_cap=self.interpretation_cap,
            sampling=self.sampling,
            attempt_sink=lambda step, record: self._attempt_sink(session, step)(record),
        )

    def run_stage1(self, session: SessionState, submission: Optional[DrawingSubmission] = None):
        """Run the four agents in parallel.

        Returns the four AspectReports, or a harm outcome that the caller must
        escalate. Any agent's terminal failure fails the whole session: the
        report contract needs all four aspects, and a partial reading risks
        misinterpretation.
        """
        if session.phase is not Phase.QUEUED:
            raise IllegalTransition(f"stage 1 requires queued phase, session is {session.phase.value}")
        if submission is None:
            submission = self.store.get_submission(session.submission_id)
        self._advance(session, Phase.STAGE1_RUNNING)

        runtime = self._runtime(session)
        extracted: dict[Aspect, list[FeatureObservation]] = {}
        extracted_lock = threading.Lock()
        results: dict[Aspect, object] = {}

        def on_extracted(aspect: Aspect, observations: list[FeatureObservation]) -> None:
            with extracted_lock:
                extracted[aspect] = observations
            if harm_scan(observations, self.taxonomy):
                severe_ids = sorted(
                    obs.feature_id
                    for obs in observations
                    if judge_observation(self.taxonomy, obs).severity is Severity.SEVERE
                )
                event = self._append_event(
                    session,
                    EventKind.HARM_DETECTED,
                    f"{aspect.value}: severe indicators {', '.join(severe_ids)}",
                    {"aspect": aspect.value, "feature_ids": severe_ids},
                )
                if event is not None:
                    assert handle_exception(session, event) is Action.ESCALATE_HARM
                raise HarmSignal(aspect, observations)

        def agent_job(aspect: Aspect) -> None:
            with self.clock.worker():
                self._append_event(
                    session, EventKind.AGENT_STARTED, aspect.value, {"aspect": aspect.value}
                )
                self._set_aspect_status(session, aspect, "running")
                trace_id = f"{session.session_id}.{aspect.value}"
                try:
                    report = run_agent(aspect, submission, runtime, trace_id, on_extracted)
                except HarmSignal as signal:
                    results[aspect] = signal
                    self._set_aspect_status(session, aspect, "done")
                    self._append_event(
                        session,
                        EventKind.AGENT_FINISHED,
                        f"{aspect.value}: halted on severe indicator",
                        {"aspect": aspect.value, "harm": True},
                    )
                except Exception as exc:
                    results[aspect] = exc
                    self._set_aspect_status(session, aspect, "failed")
                    self._append_event(
                        session,
                        EventKind.AGENT_FINISHED,
                        f"{aspect.value}: failed: {exc}",
                        {"aspect": aspect.value, "failed": True},
                    )
                else:
                    results[aspect] = report
                    self._set_aspect_status(session, aspect, "done")
                    self._append_event(
                        session,
                        EventKind.AGENT_FINISHED,
                        f"{aspect.value}: ok ({len(report.observations)} observations)",
                        {"aspect": aspect.value},
                    )

        threads = [
            threading.Thread(target=agent_job, args=(aspect,), name=f"agent-{aspect.value}")
            for aspect in ASPECT_ORDER
        ]
        self.clock.expect_workers(len(threads))
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        harms = [r for r in results.values() if isinstance(r, HarmSignal)]
        if harms:
            return _HarmOutcome(extracted=dict(extracted))
        failures = [(a, r) for a, r in results.items() if isinstance(r, Exception)]
        if failures:
            aspect, cause = min(failures, key=lambda item: ASPECT_ORDER.index(item[0]))
            kept = [a.value for a, r in results.items() if isinstance(r, AspectReport)]
            log.warning(
                "session %s: discarding partial stage-1 results from %s",
                session.session_id, kept,
            )
            raise AgentFailure(aspect, cause)
        reports = [results[aspect] for aspect in ASPECT_ORDER]
        self._advance(session, Phase.STAGE1_COMPLETE)
        return reports

    # -- stage 2 and terminal paths ----------------------------------------

    def _report_id(self, session: SessionState) -> str:
        return "rep-" + session.session_id.removeprefix("ses-")

    def _persist_report(self, session: SessionState, report: FinalReport, escalated: bool) -> str:
        report_id = self._report_id(session)
        self.store.put(
            "report",
            report_id,
            {
                "report": report.to_dict(),
                "escalated": escalated,
                "rule": self.rule.to_dict(),
                "session_id": session.session_id,
            },
        )
        self.store.append_audit(
            "report_persisted",
            {"report_id": report_id, "risk": report.risk.value, "escalated": escalated},
        )
        return report_id

    def run_stage2(
        self,
        session: SessionState,
        submission: DrawingSubmission,
        aspect_reports: list[AspectReport],
    ) -> FinalReport:
        if session.phase is not Phase.STAGE1_COMPLETE:
            raise IllegalTransition(
                f"stage 2 requires stage1_complete, session is {session.phase.value}"
            )
        if len(aspect_reports) != 4:
            raise OrchestratorError("stage 2 must see exactly four aspect reports")
        self._advance(session, Phase.STAGE2_RUNNING)
        runtime = self._runtime(session)
        trace = f"{session.session_id}.stage2"
        factors = label_tendencies(aspect_reports, runtime, f"{trace}.label")
        summary, escalation, suggestion = synthesize_summary(
            factors, aspect_reports, runtime, f"{trace}.synthesize"
        )
        risk = classify_risk(factors, suggestion, self.rule)
        if escalation is not None and risk is not RiskLevel.WARNING:
            # only possible with severe_short_circuit disabled; the report
            # invariant (escalation implies warning) wins over the notice
            log.warning("session %s: dropping escalation notice on observation result", session.session_id)
            escalation = None
        report = assemble_final_report(
            submission_id=session.submission_id,
            risk=risk,
            summary=summary,
            factors=factors,
            aspect_reports=aspect_reports,
            escalation_notice=escalation,
            created_at=self.clock.utcnow(),
        )
        report_id = self._persist_report(session, report, escalated=False)
        with self._lock_for(session.session_id):
            session.report_id = report_id
        self._advance(session, Phase.COMPLETED, f"report {report_id}")
        return report

    def _escalate(
        self, session: SessionState, submission: DrawingSubmission, outcome: "_HarmOutcome"
    ) -> FinalReport:
        """Produce the immediate template warning report, bypassing stage 2."""
        halted = HALTED_INTERPRETATION.get(self.locale, HALTED_INTERPRETATION["en"])
        reports = []
        for aspect in ASPECT_ORDER:
            observations = tuple(outcome.extracted.get(aspect, []))
            reports.append(
                AspectReport(
                    aspect=aspect,
                    observations=observations,
                    interpretation=halted,
                    produced_at=self.clock.utcnow(),
                    model_trace_id=f"{session.session_id}.{aspect.value}",
                )
            )
        factors = [
            judge_observation(self.taxonomy, obs)
            for report in reports
            for obs in report.observations
        ]
        report = assemble_final_report(
            submission_id=session.submission_id,
            risk=RiskLevel.WARNING,
            summary=HARM_SUMMARY.get(self.locale, HARM_SUMMARY["en"]),
            factors=factors,
            aspect_reports=reports,
            escalation_notice=escalation_notice_text(self.locale),
            created_at=self.clock.utcnow(),
        )
        report_id = self._persist_report(session, report, escalated=True)
        with self._lock_for(session.session_id):
            session.report_id = report_id
        self._advance(session, Phase.ESCALATED_HARM, f"report {report_id}")
        return report

    def _fail(self, session: SessionState, reason: str) -> None:
        if session.terminal:
            return
        with self._lock_for(session.session_id):
            session.failure_reason = reason
        self._advance(session, Phase.FAILED, reason)


@dataclass
class _HarmOutcome:
    extracted: dict[Aspect, list[FeatureObservation]]
