"""Core domain types for HTP drawing screening.

All types are immutable values with a canonical JSON encoding: snake_case
field names, lowercase enum strings, UTC timestamps at second precision.
Optional fields that are None are omitted from the encoding.
"""

from __future__ import annotations

import json
import base64
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional


class Aspect(str, Enum):
    OVERALL = "overall"
    HOUSE = "house"
    TREE = "tree"
    PERSON = "person"


class Tendency(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class Severity(str, Enum):
    NONE = "none"
    MILD = "mild"
    SEVERE = "severe"


class RiskLevel(str, Enum):
    WARNING = "warning"
    OBSERVATION = "observation"


class ConsistencyLevel(str, Enum):
    HIGH = "high"
    MODERATE = "moderate"
    LOW = "low"


class SubmissionSource(str, Enum):
    API = "api"
    CLI = "cli"
    FIXTURE = "fixture"


ASPECT_ORDER = (Aspect.OVERALL, Aspect.HOUSE, Aspect.TREE, Aspect.PERSON)


def utc_second(dt: datetime) -> datetime:
    """Normalize a datetime to UTC at second precision."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return utc_second(dt).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(raw: str) -> datetime:
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    return utc_second(datetime.fromisoformat(raw))


def canonical_json(payload: Any) -> str:
    """Serialize to the canonical wire form: sorted keys, no extra whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ImagePayload:
    media_type: str
    data: bytes

    def to_dict(self) -> dict:
        return {
            "media_type": self.media_type,
            "data_b64": base64.b64encode(self.data).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ImagePayload":
        return cls(media_type=raw["media_type"], data=base64.b64decode(raw["data_b64"]))


@dataclass(frozen=True)
class DrawingSubmission:
    """An anonymized drawing plus submission metadata.

    Carries no personal-identifier fields by construction: there are no
    name / birthdate / roster-id fields to populate.
    """

    id: str
    image: ImagePayload
    received_at: datetime
    source: SubmissionSource
    grade_tag: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "received_at", utc_second(self.received_at))

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "image": self.image.to_dict(),
            "received_at": format_timestamp(self.received_at),
            "source": self.source.value,
        }
        if self.grade_tag is not None:
            out["grade_tag"] = self.grade_tag
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "DrawingSubmission":
        return cls(
            id=raw["id"],
            image=ImagePayload.from_dict(raw["image"]),
            received_at=parse_timestamp(raw["received_at"]),
            source=SubmissionSource(raw["source"]),
            grade_tag=raw.get("grade_tag"),
        )


@dataclass(frozen=True)
class FeatureObservation:
    """One extracted drawing indicator, validated against the taxonomy."""

    feature_id: str
    aspect: Aspect
    value: str
    evidence: str = ""
    confidence: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "feature_id": self.feature_id,
            "aspect": self.aspect.value,
            "value": self.value,
            "evidence": self.evidence,
        }
        if self.confidence is not None:
            out["confidence"] = self.confidence
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "FeatureObservation":
        return cls(
            feature_id=raw["feature_id"],
            aspect=Aspect(raw["aspect"]),
            value=raw["value"],
            evidence=raw.get("evidence", ""),
            confidence=raw.get("confidence"),
        )


@dataclass(frozen=True)
class LabeledFactor:
    observation: FeatureObservation
    tendency: Tendency
    severity: Severity = Severity.NONE
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "observation": self.observation.to_dict(),
            "tendency": self.tendency.value,
            "severity": self.severity.value,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LabeledFactor":
        return cls(
            observation=FeatureObservation.from_dict(raw["observation"]),
            tendency=Tendency(raw["tendency"]),
            severity=Severity(raw["severity"]),
            rationale=raw.get("rationale", ""),
        )


@dataclass(frozen=True)
class AspectReport:
    """One stage-1 agent's preliminary analysis for a single aspect."""

    aspect: Aspect
    observations: tuple[FeatureObservation, ...]
    interpretation: str
    produced_at: datetime
    model_trace_id: str

    def __post_init__(self):
        object.__setattr__(self, "produced_at", utc_second(self.produced_at))

    def to_dict(self) -> dict:
        return {
            "aspect": self.aspect.value,
            "observations": [o.to_dict() for o in self.observations],
            "interpretation": self.interpretation,
            "produced_at": format_timestamp(self.produced_at),
            "model_trace_id": self.model_trace_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AspectReport":
        return cls(
            aspect=Aspect(raw["aspect"]),
            observations=tuple(FeatureObservation.from_dict(o) for o in raw["observations"]),
            interpretation=raw["interpretation"],
            produced_at=parse_timestamp(raw["produced_at"]),
            model_trace_id=raw["model_trace_id"],
        )


@dataclass(frozen=True)
class FinalReport:
    """The synthesized screening report: risk level, summary, labeled factors."""

    submission_id: str
    risk: RiskLevel
    summary: str
    positive_factors: tuple[LabeledFactor, ...]
    negative_factors: tuple[LabeledFactor, ...]
    neutral_factors: tuple[LabeledFactor, ...]
    aspect_reports: tuple[AspectReport, ...]
    created_at: datetime
    escalation_notice: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "created_at", utc_second(self.created_at))

    def to_dict(self) -> dict:
        out = {
            "submission_id": self.submission_id,
            "risk": self.risk.value,
            "summary": self.summary,
            "positive_factors": [f.to_dict() for f in self.positive_factors],
            "negative_factors": [f.to_dict() for f in self.negative_factors],
            "neutral_factors": [f.to_dict() for f in self.neutral_factors],
            "aspect_reports": [r.to_dict() for r in self.aspect_reports],
            "created_at": format_timestamp(self.created_at),
        }
        if self.escalation_notice is not None:
            out["escalation_notice"] = self.escalation_notice
        return out

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, raw: dict) -> "FinalReport":
        return cls(
            submission_id=raw["submission_id"],
            risk=RiskLevel(raw["risk"]),
            summary=raw["summary"],
            positive_factors=tuple(LabeledFactor.from_dict(f) for f in raw["positive_factors"]),
            negative_factors=tuple(LabeledFactor.from_dict(f) for f in raw["negative_factors"]),
            neutral_factors=tuple(LabeledFactor.from_dict(f) for f in raw["neutral_factors"]),
            aspect_reports=tuple(AspectReport.from_dict(r) for r in raw["aspect_reports"]),
            created_at=parse_timestamp(raw["created_at"]),
            escalation_notice=raw.get("escalation_notice"),
        )

    @classmethod
    def from_json(cls, raw: str) -> "FinalReport":
        return cls.from_dict(json.loads(raw))


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def partition_factors(
    factors: list[LabeledFactor],
) -> tuple[list[LabeledFactor], list[LabeledFactor], list[LabeledFactor]]:
    """Split factors into (positive, negative, neutral) lists, preserving order."""
    positive = [f for f in factors if f.tendency is Tendency.POSITIVE]
    negative = [f for f in factors if f.tendency is Tendency.NEGATIVE]
    neutral = [f for f in factors if f.tendency is Tendency.NEUTRAL]
    return positive, negative, neutral


def _check_factor(factor: LabeledFactor, where: str, violations: list[str]) -> None:
    if factor.severity is Severity.SEVERE and factor.tendency is not Tendency.NEGATIVE:
        violations.append(f"{where}: severe factor must have negative tendency")
    elif factor.severity is not Severity.NONE and factor.tendency is not Tendency.NEGATIVE:
        violations.append(f"{where}: factor with severity must have negative tendency")
    conf = factor.observation.confidence
    if conf is not None and not (0.0 <= conf <= 1.0):
        violations.append(f"{where}: confidence {conf} outside [0, 1]")


def validate_final_report(report: FinalReport) -> ValidationResult:
    """Check every structural invariant of a FinalReport and nested values.

    Violations are returned as data; this never raises on well-typed input.
    """
    violations: list[str] = []

    expected = {
        "positive_factors": Tendency.POSITIVE,
        "negative_factors": Tendency.NEGATIVE,
        "neutral_factors": Tendency.NEUTRAL,
    }
    for list_name, tendency in expected.items():
        factors = getattr(report, list_name)
        for i, factor in enumerate(factors):
            where = f"{list_name}[{i}]"
            if factor.tendency is not tendency:
                violations.append(
                    f"{where}: tendency {factor.tendency.value} does not belong in {list_name}"
                )
            _check_factor(factor, where, violations)

    seen = [r.aspect for r in report.aspect_reports]
    for aspect in ASPECT_ORDER:
        if aspect not in seen:
            violations.append(f"missing aspect {aspect.name.capitalize()}")
    counted: dict[Aspect, int] = {}
    for aspect in seen:
        counted[aspect] = counted.get(aspect, 0) + 1
    for aspect, n in counted.items():
        if n > 1:
            violations.append(f"duplicate aspect {aspect.name.capitalize()} ({n} reports)")

    for r in report.aspect_reports:
        if not r.interpretation:
            violations.append(f"aspect report {r.aspect.value}: empty interpretation")
        for i, obs in enumerate(r.observations):
            if obs.aspect is not r.aspect:
                violations.append(
                    f"aspect report {r.aspect.value}: observation {i} has aspect {obs.aspect.value}"
                )

    if report.escalation_notice is not None and report.risk is not RiskLevel.WARNING:
        violations.append("escalation requires Warning")

    return ValidationResult(tuple(violations))
