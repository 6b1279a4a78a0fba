"""Stage 1: the four aspect agents, each running extract -> interpret.

Agents share only read-only inputs (submission, taxonomy, gateway) so the
orchestrator can run all four concurrently. Invalid observations are dropped
with a warning rather than failing the run; an extraction that yields zero
valid observations is retried once and then fails the agent.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .domain import Aspect, AspectReport, DrawingSubmission, FeatureObservation
from .gateway import AttemptRecord, ModelGateway, ModelRequest, ModelRole, SamplingParams
from .prompts import DEFAULT_LOCALE, load_template, render
from .taxonomy import FeatureDefinition, Taxonomy, EnumDomain, features_for, validate_observation

log = logging.getLogger(__name__)

INTERPRETATION_CAP = 2000
FENCED_BLOCK_RE = re.compile(r"```(?:json)?[ \t]*\n(.*?)```", re.DOTALL)

AttemptSink = Callable[[str, AttemptRecord], None]


class AgentError(Exception):
    def __init__(self, aspect: Aspect, message: str):
        super().__init__(f"{aspect.value} agent: {message}")
        self.aspect = aspect


class EmptyExtraction(AgentError):
    def __init__(self, aspect: Aspect):
        super().__init__(aspect, "no valid observations after retry")


@dataclass(frozen=True)
class AgentStepOutput:
    raw_text: str
    parsed: Optional[object] = None
    parse_errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.parsed is None) == (not self.parse_errors):
            raise ValueError("exactly one of parsed / parse_errors must be set")


@dataclass
class AgentRuntime:
    """Read-only wiring shared by every agent invocation."""

    taxonomy: Taxonomy
    gateway: ModelGateway
    prompts_dir: Optional[Path] = None
    locale: str = DEFAULT_LOCALE
    interpretation_cap: int = INTERPRETATION_CAP
    sampling: SamplingParams = field(default_factory=SamplingParams)
    attempt_sink: Optional[AttemptSink] = None

    def emit(self, step: str, record: AttemptRecord) -> None:
        if self.attempt_sink is not None:
            self.attempt_sink(step, record)


def parse_structured_block(raw_text: str) -> AgentStepOutput:
    """Pull the fenced JSON block out of model output.

    Prose around the block is fine. With several blocks the last one wins
    (models tend to restate examples first) and a warning is recorded.
    """
    blocks = FENCED_BLOCK_RE.findall(raw_text)
    warnings: tuple[str, ...] = ()
    if not blocks:
        return AgentStepOutput(raw_text, parse_errors=("no structured block",))
    if len(blocks) > 1:
        warnings = (f"{len(blocks)} fenced blocks found, using the last one",)
    try:
        payload = json.loads(blocks[-1])
    except json.JSONDecodeError as exc:
        return AgentStepOutput(
            raw_text, parse_errors=(f"structured block is not valid JSON: {exc.msg}",),
            warnings=warnings,
        )
    return AgentStepOutput(raw_text, parsed=payload, warnings=warnings)


def format_feature_catalog(features: list[FeatureDefinition]) -> str:
    lines = []
    for f in features:
        if isinstance(f.value_domain, EnumDomain):
            domain = "values: " + " / ".join(f.value_domain.values)
        else:
            domain = f"free text up to {f.value_domain.max_length} chars"
        lines.append(f"- {f.feature_id} | {f.name} | {domain} | {f.description}")
    return "\n".join(lines)


def format_observations(observations: list[FeatureObservation]) -> str:
    lines = []
    for obs in observations:
        evidence = f" ({obs.evidence})" if obs.evidence else ""
        lines.append(f"- {obs.feature_id} = {obs.value}{evidence}")
    return "\n".join(lines)


def cohort_binding(submission: DrawingSubmission) -> str:
    return submission.grade_tag if submission.grade_tag else "n/a"


def _coerce_observations(
    payload: object, aspect: Aspect, taxonomy: Taxonomy
) -> tuple[list[FeatureObservation], list[str]]:
    """Turn the parsed extract payload into validated observations.

    Returns (kept, dropped-reasons); anything that fails taxonomy validation
    is dropped, not fatal.
    """
    if not isinstance(payload, list):
        return [], ["extract payload is not a list"]
    kept: list[FeatureObservation] = []
    dropped: list[str] = []
    for i, item in enumerate(payload):
        if not isinstance(item, dict) or "feature_id" not in item or "value" not in item:
            dropped.append(f"item {i}: not an object with feature_id and value")
            continue
        confidence = item.get("confidence")
        if confidence is not None:
            try:
                confidence = float(confidence)
            except (TypeError, ValueError):
                dropped.append(f"item {i}: confidence not numeric")
                continue
        obs = FeatureObservation(
            feature_id=str(item["feature_id"]),
            aspect=aspect,
            value=str(item["value"]),
            evidence=str(item.get("evidence", "")),
            confidence=confidence,
        )
        problem = validate_observation(taxonomy, obs)
        if problem is not None:
            dropped.append(f"item {i}: {problem}")
            continue
        kept.append(obs)
    return kept, dropped


def _step_request(
    runtime: AgentRuntime,
    template_id: str,
    bindings: dict[str, str],
    trace_id: str,
    image=None,
) -> ModelRequest:
    template = load_template(template_id, runtime.prompts_dir, runtime.locale)
    prompt = render(template, bindings)
    return ModelRequest(
        role=ModelRole.MULTIMODAL_ANALYST,
        prompt=prompt,
        trace_id=trace_id,
        image=image,
        params=runtime.sampling,
    )


def extract_features(
    aspect: Aspect,
    submission: DrawingSubmission,
    runtime: AgentRuntime,
    trace_id: str,
) -> list[FeatureObservation]:
    """Run the extract step; every returned observation validates against the taxonomy."""
    template_id = f"stage1.{aspect.value}.extract"
    bindings = {
        "feature_catalog": format_feature_catalog(features_for(runtime.taxonomy, aspect)),
        "cohort_context": cohort_binding(submission),
    }
    step_name = f"{aspect.value}.extract"
    last_problem = "unknown"
    for round_no in range(2):  # a malformed or empty round is retried once
        round_trace = trace_id if round_no == 0 else f"{trace_id}#r{round_no}"
        request = _step_request(runtime, template_id, bindings, round_trace, submission.image)
        text, _ = runtime.gateway.call(
            request, on_attempt=lambda rec: runtime.emit(step_name, rec)
        )
        step = parse_structured_block(text)
        for warning in step.warnings:
            log.warning("%s: %s", step_name, warning)
        if step.parsed is None:
            last_problem = "; ".join(step.parse_errors)
            log.warning("%s: structured block unusable (%s), retrying once", step_name, last_problem)
            continue
        kept, dropped = _coerce_observations(step.parsed, aspect, runtime.taxonomy)
        for reason in dropped:
            log.warning("%s: dropped observation: %s", step_name, reason)
        if kept:
            return kept
        last_problem = "zero valid observations"
        log.warning("%s: zero valid observations, retrying once", step_name)
    if last_problem == "zero valid observations":
        raise EmptyExtraction(aspect)
    raise AgentError(aspect, f"extract output unusable: {last_problem}")


def interpret_features(
    aspect: Aspect,
    observations: list[FeatureObservation],
    submission: DrawingSubmission,
    runtime: AgentRuntime,
    trace_id: str,
) -> str:
    """Run the interpret step; returns nonempty text within the configured cap."""
    if not observations:
        raise ValueError("interpret_features requires at least one observation")
    template_id = f"stage1.{aspect.value}.interpret"
    bindings = {
        "observations": format_observations(observations),
        "cohort_context": cohort_binding(submission),
    }
    step_name = f"{aspect.value}.interpret"
    last_problem = "unknown"
    for round_no in range(2):
        round_trace = trace_id if round_no == 0 else f"{trace_id}#r{round_no}"
        request = _step_request(runtime, template_id, bindings, round_trace, submission.image)
        text, _ = runtime.gateway.call(
            request, on_attempt=lambda rec: runtime.emit(step_name, rec)
        )
        step = parse_structured_block(text)
        for warning in step.warnings:
            log.warning("%s: %s", step_name, warning)
        interpretation = None
        if isinstance(step.parsed, dict):
            value = step.parsed.get("interpretation")
            if isinstance(value, str) and value.strip():
                interpretation = value.strip()
        if interpretation is None:
            last_problem = (
                "; ".join(step.parse_errors) if step.parse_errors else "no usable interpretation"
            )
            log.warning("%s: %s, retrying once", step_name, last_problem)
            continue
        if len(interpretation) > runtime.interpretation_cap:
            log.warning(
                "%s: interpretation over cap (%d > %d), truncating",
                step_name, len(interpretation), runtime.interpretation_cap,
            )
            interpretation = interpretation[: runtime.interpretation_cap - 1] + "…"
        return interpretation
    raise AgentError(aspect, f"interpret output unusable: {last_problem}")


def run_agent(
    aspect: Aspect,
    submission: DrawingSubmission,
    runtime: AgentRuntime,
    trace_id: str,
    on_extracted: Optional[Callable[[Aspect, list[FeatureObservation]], None]] = None,
) -> AspectReport:
    """The agent's two-step composition: extract, then interpret.

    ``on_extracted`` is the orchestrator's hook between the steps (event
    recording, harm policy); exceptions it raises abort the interpret step.
    """
    observations = extract_features(aspect, submission, runtime, f"{trace_id}.extract")
    if on_extracted is not None:
        on_extracted(aspect, observations)
    interpretation = interpret_features(
        aspect, observations, submission, runtime, f"{trace_id}.interpret"
    )
    return AspectReport(
        aspect=aspect,
        observations=tuple(observations),
        interpretation=interpretation,
        produced_at=runtime.gateway.clock.utcnow(),
        model_trace_id=trace_id,
    )
