"""Two-stage multi-agent screening pipeline for House-Tree-Person drawings."""

from .domain import (
    Aspect,
    AspectReport,
    ConsistencyLevel,
    DrawingSubmission,
    FeatureObservation,
    FinalReport,
    LabeledFactor,
    RiskLevel,
    Severity,
    Tendency,
    partition_factors,
    validate_final_report,
)
from .taxonomy import Taxonomy, features_for, judge_observation, load_default_taxonomy, load_taxonomy

__version__ = "0.1.0"

__all__ = [
    "Aspect",
    "AspectReport",
    "ConsistencyLevel",
    "DrawingSubmission",
    "FeatureObservation",
    "FinalReport",
    "LabeledFactor",
    "RiskLevel",
    "Severity",
    "Taxonomy",
    "Tendency",
    "features_for",
    "judge_observation",
    "load_default_taxonomy",
    "load_taxonomy",
    "partition_factors",
    "validate_final_report",
    "__version__",
]
