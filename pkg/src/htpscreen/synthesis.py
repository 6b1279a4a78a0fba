"""Stage 2: consolidate aspect reports, label tendencies, classify, assemble.

The risk classifier is deterministic code over the labeled factors; the text
model can only contribute a suggestion that raises, never lowers, the alarm.
The escalation notice is fixed template text, never model output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .agents import AgentRuntime, parse_structured_block
from .domain import (
    ASPECT_ORDER,
    AspectReport,
    FinalReport,
    LabeledFactor,
    RiskLevel,
    Severity,
    Tendency,
    partition_factors,
    validate_final_report,
)
from .gateway import ModelRequest, ModelRole
from .prompts import load_template, render
from .taxonomy import FreeTextDomain, judge_observation

log = logging.getLogger(__name__)

ESCALATION_NOTICE = {
    "zh-CN": (
        "画面中出现严重风险指标。建议立即安排专业人员介入：请尽快联系学校心理老师"
        "或专业心理工作者，对该学生进行当面评估与必要的干预。"
    ),
    "en": (
        "A severe risk indicator appears in this drawing. Immediate professional "
        "assistance is recommended: arrange an in-person assessment by a qualified "
        "mental-health professional as soon as possible."
    ),
}


class SuggestionMode(str, Enum):
    CONSERVATIVE_OR = "conservative_or"
    IGNORE = "ignore"


@dataclass(frozen=True)
class ClassificationRule:
    severe_short_circuit: bool = True
    negative_factor_threshold: int = 4
    model_suggestion_mode: SuggestionMode = SuggestionMode.CONSERVATIVE_OR

    def __post_init__(self):
        if self.negative_factor_threshold < 1:
            raise ValueError("negative_factor_threshold must be >= 1")

    def to_dict(self) -> dict:
        return {
            "severe_short_circuit": self.severe_short_circuit,
            "negative_factor_threshold": self.negative_factor_threshold,
            "model_suggestion_mode": self.model_suggestion_mode.value,
        }


class SynthesisError(Exception):
    pass


class AssemblyError(SynthesisError):
    def __init__(self, violations: tuple[str, ...]):
        super().__init__("refusing to assemble invalid report: " + "; ".join(violations))
        self.violations = violations


def escalation_notice_text(locale: str) -> str:
    return ESCALATION_NOTICE.get(locale, ESCALATION_NOTICE["en"])


def _format_unlabeled(reports: list[AspectReport], free_text_ids: set[str]) -> str:
    lines = []
    for report in reports:
        for obs in report.observations:
            if obs.feature_id in free_text_ids:
                evidence = f" ({obs.evidence})" if obs.evidence else ""
                lines.append(f"- {obs.feature_id} = {obs.value}{evidence}")
    return "\n".join(lines)


def _call_text_expert(runtime: AgentRuntime, template_id: str, bindings: dict, trace_id: str):
    template = load_template(template_id, runtime.prompts_dir, runtime.locale)
    prompt = render(template, bindings)
    request = ModelRequest(
        role=ModelRole.TEXT_EXPERT, prompt=prompt, trace_id=trace_id, params=runtime.sampling
    )
    step_name = template_id.split(".", 1)[1] if "." in template_id else template_id
    text, _ = runtime.gateway.call(request, on_attempt=lambda rec: runtime.emit(step_name, rec))
    return parse_structured_block(text)


def label_tendencies(
    aspect_reports: list[AspectReport], runtime: AgentRuntime, trace_id: str
) -> list[LabeledFactor]:
    """One LabeledFactor per observation across all four aspect reports.

    Enum-domain features are labeled from the taxonomy alone. Free-text
    features are labeled by the text model in a single batched call; a
    taxonomy-assigned severe rating can never be lowered by model output.
    """
    if len(aspect_reports) != 4:
        raise ValueError(f"label_tendencies requires exactly four aspect reports, got {len(aspect_reports)}")

    free_text_ids = {
        f.feature_id
        for f in runtime.taxonomy.features
        if isinstance(f.value_domain, FreeTextDomain)
    }
    model_labels: dict[str, tuple[Tendency, str]] = {}
    unlabeled = _format_unlabeled(aspect_reports, free_text_ids)
    if unlabeled:
        payload = None
        for round_no in range(2):
            round_trace = trace_id if round_no == 0 else f"{trace_id}#r{round_no}"
            step = _call_text_expert(
                runtime, "stage2.label_tendencies", {"factors": unlabeled}, round_trace
            )
            if isinstance(step.parsed, list):
                payload = step.parsed
                break
            log.warning("label_tendencies: unusable model output, retrying once")
        if payload is None:
            raise SynthesisError("tendency labeling output unusable after retry")
        for item in payload:
            if not isinstance(item, dict):
                continue
            try:
                tendency = Tendency(str(item.get("tendency", "")).lower())
            except ValueError:
                log.warning("label_tendencies: invalid tendency %r ignored", item.get("tendency"))
                continue
            model_labels[str(item.get("feature_id"))] = (
                tendency,
                str(item.get("rationale", "")),
            )

    factors: list[LabeledFactor] = []
    for report in aspect_reports:
        for obs in report.observations:
            base = judge_observation(runtime.taxonomy, obs)
            if base.severity is Severity.SEVERE:
                factors.append(base)  # never downgraded, model consulted or not
                continue
            if obs.feature_id in free_text_ids and obs.feature_id in model_labels:
                tendency, rationale = model_labels[obs.feature_id]
                factors.append(
                    LabeledFactor(
                        observation=obs,
                        tendency=tendency,
                        severity=Severity.NONE,
                        rationale=rationale or base.rationale,
                    )
                )
                continue
            factors.append(base)
    return factors


def _format_aspect_summaries(aspect_reports: list[AspectReport]) -> str:
    ordered = sorted(aspect_reports, key=lambda r: ASPECT_ORDER.index(r.aspect))
    parts = [f"[{r.aspect.value}]\n{r.interpretation}" for r in ordered]
    return "\n\n".join(parts)


def _format_factor_digest(factors: list[LabeledFactor]) -> str:
    lines = []
    for f in factors:
        severity = f"/{f.severity.value}" if f.severity is not Severity.NONE else ""
        lines.append(
            f"- [{f.tendency.value}{severity}] {f.observation.feature_id} = "
            f"{f.observation.value} — {f.rationale}"
        )
    return "\n".join(lines) if lines else "-"


def synthesize_summary(
    labeled_factors: list[LabeledFactor],
    aspect_reports: list[AspectReport],
    runtime: AgentRuntime,
    trace_id: str,
) -> tuple[str, Optional[str], Optional[RiskLevel]]:
    """Produce (summary, escalation notice or None, model risk suggestion).

    The summary comes from the text model; an empty result is retried once and
    then fails the session. The escalation notice is template text emitted
    whenever a severe factor is present.
    """
    bindings = {
        "aspect_summaries": _format_aspect_summaries(aspect_reports),
        "factor_digest": _format_factor_digest(labeled_factors),
    }
    summary = None
    suggestion: Optional[RiskLevel] = None
    for round_no in range(2):
        round_trace = trace_id if round_no == 0 else f"{trace_id}#r{round_no}"
        step = _call_text_expert(runtime, "stage2.synthesize", bindings, round_trace)
        if isinstance(step.parsed, dict):
            text = step.parsed.get("summary")
            if isinstance(text, str) and text.strip():
                summary = text.strip()
                raw_suggestion = str(step.parsed.get("risk_suggestion", "")).lower()
                if raw_suggestion in (RiskLevel.WARNING.value, RiskLevel.OBSERVATION.value):
                    suggestion = RiskLevel(raw_suggestion)
                elif raw_suggestion:
                    log.warning("synthesize: risk suggestion %r ignored", raw_suggestion)
                break
        log.warning("synthesize: empty or unusable summary, retrying once")
    if summary is None:
        raise SynthesisError("synthesis produced no usable summary after retry")

    escalation = None
    if any(f.severity is Severity.SEVERE for f in labeled_factors):
        escalation = escalation_notice_text(runtime.locale)
    return summary, escalation, suggestion


def classify_risk(
    labeled_factors: list[LabeledFactor],
    model_suggestion: Optional[RiskLevel],
    rule: ClassificationRule,
) -> RiskLevel:
    """Deterministic conservative classifier; no model call.

    Warning iff a severe factor short-circuits, the negative count reaches the
    threshold, or (in conservative-or mode) the model suggested Warning.
    """
    has_severe = any(f.severity is Severity.SEVERE for f in labeled_factors)
    negatives = sum(1 for f in labeled_factors if f.tendency is Tendency.NEGATIVE)
    if rule.severe_short_circuit and has_severe:
        return RiskLevel.WARNING
    if negatives >= rule.negative_factor_threshold:
        return RiskLevel.WARNING
    if (
        rule.model_suggestion_mode is SuggestionMode.CONSERVATIVE_OR
        and model_suggestion is RiskLevel.WARNING
    ):
        return RiskLevel.WARNING
    return RiskLevel.OBSERVATION


def assemble_final_report(
    submission_id: str,
    risk: RiskLevel,
    summary: str,
    factors: list[LabeledFactor],
    aspect_reports: list[AspectReport],
    escalation_notice: Optional[str],
    created_at,
) -> FinalReport:
    """Build and validate the report; an invalid assembly is an internal bug."""
    positive, negative, neutral = partition_factors(factors)
    ordered = tuple(sorted(aspect_reports, key=lambda r: ASPECT_ORDER.index(r.aspect)))
    report = FinalReport(
        submission_id=submission_id,
        risk=risk,
        summary=summary,
        positive_factors=tuple(positive),
        negative_factors=tuple(negative),
        neutral_factors=tuple(neutral),
        aspect_reports=ordered,
        created_at=created_at,
        escalation_notice=escalation_notice,
    )
    result = validate_final_report(report)
    if not result.ok:
        raise AssemblyError(result.violations)
    return report
