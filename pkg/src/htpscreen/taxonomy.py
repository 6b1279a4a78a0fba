"""Catalog of HTP drawing indicators: value domains, tendency rules, severity flags.

The default catalog ships as a versioned JSON data file so mental-health
professionals can review and edit it without code changes. Tendency and
severity are deterministic per observed value; model output may add rationale
text but never changes the mapping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .domain import Aspect, FeatureObservation, LabeledFactor, Severity, Tendency

FREE_TEXT_MAX_LENGTH = 200


class TaxonomyError(Exception):
    """Base class for taxonomy load and lookup failures."""


class TaxonomyParseError(TaxonomyError):
    def __init__(self, message: str, line: Optional[int] = None, where: str = ""):
        loc = f" at line {line}" if line is not None else ""
        loc += f" in {where}" if where else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.where = where


class TaxonomyValidationError(TaxonomyError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid taxonomy: " + "; ".join(violations))
        self.violations = violations


class UnknownFeature(TaxonomyError):
    def __init__(self, feature_id: str):
        super().__init__(f"unknown feature {feature_id!r}")
        self.feature_id = feature_id


class ValueOutOfDomain(TaxonomyError):
    def __init__(self, feature_id: str, value: str, reason: str):
        super().__init__(f"value {value!r} out of domain for {feature_id!r}: {reason}")
        self.feature_id = feature_id
        self.value = value


@dataclass(frozen=True)
class EnumDomain:
    values: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"kind": "enum", "values": list(self.values)}


@dataclass(frozen=True)
class FreeTextDomain:
    max_length: int = FREE_TEXT_MAX_LENGTH

    def to_dict(self) -> dict:
        return {"kind": "free_text", "max_length": self.max_length}


ValueDomain = Union[EnumDomain, FreeTextDomain]


@dataclass(frozen=True)
class TendencyRule:
    tendency: Tendency
    severity: Severity = Severity.NONE

    def to_dict(self) -> dict:
        return {"tendency": self.tendency.value, "severity": self.severity.value}


@dataclass(frozen=True)
class FeatureDefinition:
    feature_id: str
    aspect: Aspect
    name: str
    description: str
    value_domain: ValueDomain
    tendency_rules: dict[str, TendencyRule] = field(default_factory=dict)
    is_severe_indicator: bool = False

    def to_dict(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "aspect": self.aspect.value,
            "name": self.name,
            "description": self.description,
            "value_domain": self.value_domain.to_dict(),
            "tendency_rules": {v: r.to_dict() for v, r in self.tendency_rules.items()},
            "is_severe_indicator": self.is_severe_indicator,
        }


@dataclass(frozen=True)
class Taxonomy:
    version: str
    features: tuple[FeatureDefinition, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "_by_id", {f.feature_id: f for f in self.features}
        )

    def get(self, feature_id: str) -> FeatureDefinition:
        try:
            return self._by_id[feature_id]
        except KeyError:
            raise UnknownFeature(feature_id) from None

    def __contains__(self, feature_id: str) -> bool:
        return feature_id in self._by_id

    def severe_feature_ids(self) -> tuple[str, ...]:
        return tuple(f.feature_id for f in self.features if f.is_severe_indicator)

    def to_dict(self) -> dict:
        return {"version": self.version, "features": [f.to_dict() for f in self.features]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def _parse_domain(raw: dict, where: str) -> ValueDomain:
    kind = raw.get("kind")
    if kind == "enum":
        values = raw.get("values", [])
        return EnumDomain(tuple(values))
    if kind == "free_text":
        return FreeTextDomain(int(raw.get("max_length", FREE_TEXT_MAX_LENGTH)))
    raise TaxonomyParseError(f"unknown value_domain kind {kind!r}", where=where)


def _parse_feature(raw: dict, index: int) -> FeatureDefinition:
    where = f"features[{index}]"
    try:
        return FeatureDefinition(
            feature_id=raw["feature_id"],
            aspect=Aspect(raw["aspect"]),
            name=raw["name"],
            description=raw.get("description", ""),
            value_domain=_parse_domain(raw["value_domain"], where),
            tendency_rules={
                value: TendencyRule(Tendency(r["tendency"]), Severity(r["severity"]))
                for value, r in raw.get("tendency_rules", {}).items()
            },
            is_severe_indicator=bool(raw.get("is_severe_indicator", False)),
        )
    except KeyError as exc:
        raise TaxonomyParseError(f"missing field {exc}", where=where) from exc
    except ValueError as exc:
        raise TaxonomyParseError(str(exc), where=where) from exc


def validate_taxonomy(taxonomy: Taxonomy) -> list[str]:
    """Return every invariant violation of the catalog (empty means valid)."""
    violations: list[str] = []
    if not taxonomy.features:
        violations.append("no features")
    seen: set[str] = set()
    for f in taxonomy.features:
        if f.feature_id in seen:
            violations.append(f"duplicate feature_id {f.feature_id!r}")
        seen.add(f.feature_id)
        if isinstance(f.value_domain, EnumDomain):
            for value in f.value_domain.values:
                if value not in f.tendency_rules:
                    violations.append(f"{f.feature_id}: value {value!r} has no tendency rule")
            for value in f.tendency_rules:
                if value not in f.value_domain.values:
                    violations.append(
                        f"{f.feature_id}: tendency rule for {value!r} outside value domain"
                    )
        has_severe = any(r.severity is Severity.SEVERE for r in f.tendency_rules.values())
        if has_severe != f.is_severe_indicator:
            violations.append(
                f"{f.feature_id}: is_severe_indicator={f.is_severe_indicator} "
                f"inconsistent with tendency rules"
            )
        for value, rule in f.tendency_rules.items():
            if rule.severity is not Severity.NONE and rule.tendency is not Tendency.NEGATIVE:
                violations.append(
                    f"{f.feature_id}: value {value!r} has severity without negative tendency"
                )
    return violations


def load_taxonomy(source: Union[str, Path, dict]) -> Taxonomy:
    """Load and validate a taxonomy document from a JSON file or parsed dict."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TaxonomyParseError(exc.msg, line=exc.lineno, where=str(source)) from exc
    else:
        raw = source
    if not isinstance(raw, dict) or "features" not in raw:
        raise TaxonomyParseError("document must be an object with a 'features' list")
    features = tuple(_parse_feature(f, i) for i, f in enumerate(raw["features"]))
    taxonomy = Taxonomy(version=str(raw.get("version", "0")), features=features)
    violations = validate_taxonomy(taxonomy)
    if violations:
        raise TaxonomyValidationError(violations)
    return taxonomy


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("htpscreen").joinpath("data/taxonomy.json")))


def load_default_taxonomy() -> Taxonomy:
    return load_taxonomy(default_taxonomy_path())


def features_for(taxonomy: Taxonomy, aspect: Aspect) -> list[FeatureDefinition]:
    """Features of one aspect, in document order."""
    return [f for f in taxonomy.features if f.aspect is aspect]


def check_value(feature: FeatureDefinition, value: str) -> Optional[str]:
    """Return a violation description if the value falls outside the feature's domain."""
    if isinstance(feature.value_domain, EnumDomain):
        if value not in feature.value_domain.values:
            return f"not one of {list(feature.value_domain.values)}"
        return None
    if len(value) > feature.value_domain.max_length:
        return f"free text longer than {feature.value_domain.max_length} chars"
    return None


def judge_observation(taxonomy: Taxonomy, obs: FeatureObservation) -> LabeledFactor:
    """Deterministically label one observation from the catalog's tendency rules.

    Free-text features default to neutral; stage-2 synthesis may relabel those
    (and only those) using the text model.
    """
    feature = taxonomy.get(obs.feature_id)
    problem = check_value(feature, obs.value)
    if problem is not None:
        raise ValueOutOfDomain(obs.feature_id, obs.value, problem)
    if isinstance(feature.value_domain, EnumDomain):
        rule = feature.tendency_rules[obs.value]
        return LabeledFactor(
            observation=obs,
            tendency=rule.tendency,
            severity=rule.severity,
            rationale=f"{feature.name}: {obs.value}",
        )
    return LabeledFactor(
        observation=obs,
        tendency=Tendency.NEUTRAL,
        severity=Severity.NONE,
        rationale=f"{feature.name}: free-text observation",
    )


def validate_observation(taxonomy: Taxonomy, obs: FeatureObservation) -> Optional[str]:
    """Why an observation is invalid against the catalog, or None if it is fine."""
    if obs.feature_id not in taxonomy:
        return f"unknown feature {obs.feature_id!r}"
    feature = taxonomy.get(obs.feature_id)
    if feature.aspect is not obs.aspect:
        return (
            f"feature {obs.feature_id!r} belongs to aspect {feature.aspect.value}, "
            f"observation says {obs.aspect.value}"
        )
    problem = check_value(feature, obs.value)
    if problem is not None:
        return f"value {obs.value!r} out of domain: {problem}"
    if obs.confidence is not None and not (0.0 <= obs.confidence <= 1.0):
        return f"confidence {obs.confidence} outside [0, 1]"
    return None
