"""Professional consistency annotations and the screening statistics built on them.

Counts are the stored ground truth; percentages are presentation, computed as
count/group_size*100 and rendered to two decimals with round-half-up, so the
published tables are internally consistent by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Optional

from .clocks import Clock, RealClock
from .domain import ConsistencyLevel, RiskLevel, format_timestamp, parse_timestamp, utc_second
from .storage import NotFound, Store

CSV_HEADER = ["report_id", "consistency", "annotator_id", "noted_at", "comment"]

REDUCTION_LATEST = "latest_annotation_wins"


class EvaluationError(Exception):
    pass


class UnknownReport(EvaluationError):
    def __init__(self, report_id: str):
        super().__init__(f"report {report_id!r} does not exist")
        self.report_id = report_id


class ReportNotTerminal(EvaluationError):
    def __init__(self, report_id: str):
        super().__init__(f"report {report_id!r} belongs to a session that is still running")
        self.report_id = report_id


class DanglingAnnotation(EvaluationError):
    def __init__(self, report_id: str):
        super().__init__(f"annotation references unknown report {report_id!r}")


class CsvFormatError(EvaluationError):
    pass


@dataclass(frozen=True)
class Annotation:
    report_id: str
    consistency: ConsistencyLevel
    annotator_id: str
    noted_at: datetime
    comment: str = ""

    def __post_init__(self):
        object.__setattr__(self, "noted_at", utc_second(self.noted_at))

    def to_dict(self) -> dict:
        out = {
            "report_id": self.report_id,
            "consistency": self.consistency.value,
            "annotator_id": self.annotator_id,
            "noted_at": format_timestamp(self.noted_at),
        }
        if self.comment:
            out["comment"] = self.comment
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Annotation":
        return cls(
            report_id=raw["report_id"],
            consistency=ConsistencyLevel(raw["consistency"]),
            annotator_id=raw["annotator_id"],
            noted_at=parse_timestamp(raw["noted_at"]),
            comment=raw.get("comment", ""),
        )


def percentage(count: int, total: int) -> str:
    """count/total as a percentage string with exactly two decimals, round-half-up."""
    if total == 0:
        return "0.00"
    value = Decimal(count * 100) / Decimal(total)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def record_annotation(store: Store, annotation: Annotation) -> Annotation:
    """Upsert one annotation per (report, annotator); the audit trail keeps both."""
    if not store.exists("report", annotation.report_id):
        session_id = "ses-" + annotation.report_id.removeprefix("rep-")
        try:
            body, _ = store.get("session", session_id)
        except NotFound:
            raise UnknownReport(annotation.report_id) from None
        if body.get("phase") in ("completed", "escalated_harm", "failed"):
            # failed sessions never persist a report, so their id is unknown
            raise UnknownReport(annotation.report_id)
        raise ReportNotTerminal(annotation.report_id)
    key = f"{annotation.report_id}:{annotation.annotator_id}"
    store.put("annotation", key, annotation.to_dict())
    store.append_audit("annotation_recorded", annotation.to_dict())
    return annotation


def load_annotations(store: Store) -> list[Annotation]:
    return [Annotation.from_dict(body) for _, body in store.list("annotation")]


def annotated_report_ids(store: Store) -> set[str]:
    return {a.report_id for a in load_annotations(store)}


def classification_distribution(risks: Iterable[RiskLevel]) -> dict:
    """Counts and two-decimal percentages per risk level."""
    risks = list(risks)
    total = len(risks)
    counts = {level: 0 for level in RiskLevel}
    for risk in risks:
        counts[risk] += 1
    return {
        "total": total,
        **{
            level.value: {
                "count": counts[level],
                "percentage": percentage(counts[level], total),
            }
            for level in RiskLevel
        },
    }


def reduce_annotations(annotations: list[Annotation]) -> dict[str, Annotation]:
    """One annotation per report: the latest wins (annotator id breaks ties)."""
    chosen: dict[str, Annotation] = {}
    for annotation in annotations:
        current = chosen.get(annotation.report_id)
        if current is None or (annotation.noted_at, annotation.annotator_id) >= (
            current.noted_at,
            current.annotator_id,
        ):
            chosen[annotation.report_id] = annotation
    return chosen


def matching_rates(
    report_risks: dict[str, RiskLevel], annotations: list[Annotation]
) -> dict:
    """Consistency-level counts and percentages per group (total/warning/observation).

    Reports without an annotation are excluded from every group; an annotation
    whose report id is unknown raises DanglingAnnotation.
    """
    for annotation in annotations:
        if annotation.report_id not in report_risks:
            raise DanglingAnnotation(annotation.report_id)
    reduced = reduce_annotations(annotations)

    groups: dict[str, dict[ConsistencyLevel, int]] = {
        "total": {level: 0 for level in ConsistencyLevel},
        RiskLevel.WARNING.value: {level: 0 for level in ConsistencyLevel},
        RiskLevel.OBSERVATION.value: {level: 0 for level in ConsistencyLevel},
    }
    for report_id, annotation in reduced.items():
        groups["total"][annotation.consistency] += 1
        groups[report_risks[report_id].value][annotation.consistency] += 1

    table: dict = {"reduction_mode": REDUCTION_LATEST}
    for group, counts in groups.items():
        size = sum(counts.values())
        table[group] = {
            "size": size,
            **{
                level.value: {
                    "count": counts[level],
                    "percentage": percentage(counts[level], size),
                }
                for level in ConsistencyLevel
            },
        }
    return table


# -- store-level statistics: the single computation path shared by CLI and API


def report_risks_from_store(store: Store) -> dict[str, RiskLevel]:
    return {
        key: RiskLevel(body["report"]["risk"]) for key, body in store.list("report")
    }


def stats_classification(store: Store) -> dict:
    return classification_distribution(report_risks_from_store(store).values())


def stats_matching_rates(store: Store, clock: Optional[Clock] = None) -> dict:
    clock = clock or RealClock()
    table = matching_rates(report_risks_from_store(store), load_annotations(store))
    table["generated_at"] = format_timestamp(clock.utcnow())
    return table


# -- CSV import/export ------------------------------------------------------


def import_annotations_csv(store: Store, path: Path) -> tuple[int, list[tuple[int, str]]]:
    """Bulk upsert from CSV; returns (accepted count, [(row number, reason)]).

    A malformed header is a format error (the caller exits nonzero); malformed
    or unknown rows are rejected individually.
    """
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty CSV file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise CsvFormatError(f"bad header {header!r}, expected {CSV_HEADER}")
        accepted = 0
        rejected: list[tuple[int, str]] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 4:
                rejected.append((row_no, f"expected at least 4 fields, got {len(row)}"))
                continue
            report_id, consistency_raw, annotator_id, noted_raw = (c.strip() for c in row[:4])
            comment = row[4].strip() if len(row) > 4 else ""
            try:
                consistency = ConsistencyLevel(consistency_raw.lower())
            except ValueError:
                rejected.append((row_no, f"invalid consistency {consistency_raw!r}"))
                continue
            try:
                noted_at = parse_timestamp(noted_raw)
            except ValueError:
                rejected.append((row_no, f"invalid timestamp {noted_raw!r}"))
                continue
            annotation = Annotation(report_id, consistency, annotator_id, noted_at, comment)
            try:
                record_annotation(store, annotation)
            except EvaluationError as exc:
                rejected.append((row_no, str(exc)))
                continue
            accepted += 1
    return accepted, rejected


def export_annotations_csv(store: Store, path: Path) -> int:
    annotations = load_annotations(store)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for a in annotations:
            writer.writerow(
                [a.report_id, a.consistency.value, a.annotator_id,
                 format_timestamp(a.noted_at), a.comment]
            )
    return len(annotations)
