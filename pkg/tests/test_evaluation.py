from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone
from fractions import Fraction

import pytest

from htpscreen.domain import ConsistencyLevel, RiskLevel
from htpscreen.evaluation import (
    Annotation,
    CsvFormatError,
    DanglingAnnotation,
    ReportNotTerminal,
    UnknownReport,
    classification_distribution,
    export_annotations_csv,
    import_annotations_csv,
    matching_rates,
    percentage,
    record_annotation,
    reduce_annotations,
    stats_classification,
)
from htpscreen.storage import Store

T0 = datetime(2025, 4, 1, tzinfo=timezone.utc)


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path / "store.db")
    yield s
    s.close()


def seed_report(store: Store, report_id: str, risk: str = "warning", phase: str = "completed"):
    session_id = "ses-" + report_id.removeprefix("rep-")
    store.put("session", session_id, {
        "session_id": session_id, "submission_id": "sub-x", "phase": phase,
        "aspect_status": {}, "events": [],
    })
    if phase in ("completed", "escalated_harm"):
        store.put("report", report_id, {"report": {"risk": risk, "submission_id": "sub-x",
                                                   "created_at": "2025-04-01T00:00:00Z"},
                                        "escalated": phase == "escalated_harm"})


def annotation(report_id, level=ConsistencyLevel.HIGH, annotator="t1", at=T0, comment=""):
    return Annotation(report_id, level, annotator, at, comment)


class TestPercentage:
    def test_exact_two_decimal_round_half_up(self):
        assert percentage(1, 3) == "33.33"
        assert percentage(2, 3) == "66.67"
        assert percentage(1, 8) == "12.50"
        assert percentage(0, 5) == "0.00"
        assert percentage(5, 5) == "100.00"

    def test_half_up_not_bankers(self):
        assert percentage(1, 800) == "0.13"  # 0.125 rounds up
        assert percentage(3, 800) == "0.38"  # 0.375 rounds up, not to even

    def test_zero_total(self):
        assert percentage(0, 0) == "0.00"

    def test_unrounded_percentages_sum_to_100(self):
        # oracle: exact rational arithmetic
        rng = random.Random(3)
        for _ in range(50):
            counts = [rng.randrange(0, 40) for _ in range(3)]
            total = sum(counts)
            if total == 0:
                continue
            assert sum(Fraction(c * 100, total) for c in counts) == 100


class TestClassificationDistribution:
    def test_paper_scale_split(self):
        risks = [RiskLevel.WARNING] * 90 + [RiskLevel.OBSERVATION] * 200
        dist = classification_distribution(risks)
        assert dist["total"] == 290
        assert dist["warning"] == {"count": 90, "percentage": "31.03"}
        assert dist["observation"] == {"count": 200, "percentage": "68.97"}

    def test_empty(self):
        dist = classification_distribution([])
        assert dist["warning"] == {"count": 0, "percentage": "0.00"}
        assert dist["observation"] == {"count": 0, "percentage": "0.00"}

    def test_one_of_three(self):
        dist = classification_distribution(
            [RiskLevel.WARNING, RiskLevel.OBSERVATION, RiskLevel.OBSERVATION]
        )
        assert dist["warning"]["percentage"] == "33.33"

    def test_agrees_with_naive_tally(self):
        rng = random.Random(8)
        risks = [rng.choice(list(RiskLevel)) for _ in range(50)]
        dist = classification_distribution(risks)
        assert dist["warning"]["count"] == sum(1 for r in risks if r is RiskLevel.WARNING)
        assert dist["observation"]["count"] == sum(1 for r in risks if r is RiskLevel.OBSERVATION)


def build_group_fixture():
    """The derived evaluation fixture: counts that reproduce the published
    per-group percentages exactly (warning 53/33/4 of 90, observation
    153/44/3 of 200)."""
    report_risks: dict[str, RiskLevel] = {}
    annotations: list[Annotation] = []
    spec = [
        (RiskLevel.WARNING, [(ConsistencyLevel.HIGH, 53), (ConsistencyLevel.MODERATE, 33),
                             (ConsistencyLevel.LOW, 4)]),
        (RiskLevel.OBSERVATION, [(ConsistencyLevel.HIGH, 153), (ConsistencyLevel.MODERATE, 44),
                                 (ConsistencyLevel.LOW, 3)]),
    ]
    i = 0
    for risk, cells in spec:
        for level, count in cells:
            for _ in range(count):
                report_id = f"rep-{i:04d}"
                report_risks[report_id] = risk
                annotations.append(annotation(report_id, level, at=T0))
                i += 1
    return report_risks, annotations


class TestMatchingRates:
    def test_reproduces_published_group_percentages(self):
        report_risks, annotations = build_group_fixture()
        table = matching_rates(report_risks, annotations)
        warning = table["warning"]
        assert (warning["high"]["percentage"], warning["moderate"]["percentage"],
                warning["low"]["percentage"]) == ("58.89", "36.67", "4.44")
        observation = table["observation"]
        assert (observation["high"]["percentage"], observation["moderate"]["percentage"],
                observation["low"]["percentage"]) == ("76.50", "22.00", "1.50")

    def test_total_column_consistent_with_counts(self):
        # the total column follows our canonical counts: 206/77/7 of 290
        report_risks, annotations = build_group_fixture()
        table = matching_rates(report_risks, annotations)
        total = table["total"]
        assert total["size"] == 290
        assert total["high"] == {"count": 206, "percentage": "71.03"}
        assert total["moderate"] == {"count": 77, "percentage": "26.55"}
        assert total["low"] == {"count": 7, "percentage": "2.41"}

    def test_counts_sum_to_group_size(self):
        report_risks, annotations = build_group_fixture()
        table = matching_rates(report_risks, annotations)
        for group in ("total", "warning", "observation"):
            cells = table[group]
            assert cells["high"]["count"] + cells["moderate"]["count"] + cells["low"]["count"] == cells["size"]

    def test_all_high_gives_100(self):
        risks = {f"rep-{i}": RiskLevel.WARNING for i in range(3)}
        risks.update({f"rep-o{i}": RiskLevel.OBSERVATION for i in range(2)})
        annotations = [annotation(rid) for rid in risks]
        table = matching_rates(risks, annotations)
        for group in ("total", "warning", "observation"):
            assert table[group]["high"]["percentage"] == "100.00"
            assert table[group]["moderate"]["percentage"] == "0.00"
            assert table[group]["low"]["percentage"] == "0.00"

    def test_permutation_invariance(self):
        report_risks, annotations = build_group_fixture()
        baseline = matching_rates(report_risks, annotations)
        rng = random.Random(1)
        shuffled = annotations[:]
        rng.shuffle(shuffled)
        assert matching_rates(report_risks, shuffled) == baseline

    def test_unannotated_reports_excluded(self):
        risks = {"rep-a": RiskLevel.WARNING, "rep-b": RiskLevel.WARNING}
        table = matching_rates(risks, [annotation("rep-a")])
        assert table["warning"]["size"] == 1
        assert table["total"]["size"] == 1

    def test_dangling_annotation_rejected(self):
        with pytest.raises(DanglingAnnotation):
            matching_rates({}, [annotation("rep-ghost")])

    def test_latest_annotation_wins(self):
        risks = {"rep-a": RiskLevel.WARNING}
        annotations = [
            annotation("rep-a", ConsistencyLevel.LOW, "t1", T0),
            annotation("rep-a", ConsistencyLevel.HIGH, "t2", T0 + timedelta(hours=1)),
        ]
        table = matching_rates(risks, annotations)
        assert table["warning"]["high"]["count"] == 1
        assert table["warning"]["low"]["count"] == 0

    def test_agrees_with_naive_tally_on_random_input(self):
        rng = random.Random(13)
        risks = {f"rep-{i}": rng.choice(list(RiskLevel)) for i in range(50)}
        annotations = [
            annotation(rid, rng.choice(list(ConsistencyLevel)), f"t{rng.randrange(2)}",
                       T0 + timedelta(minutes=rng.randrange(100)))
            for rid in risks if rng.random() < 0.8
        ]
        table = matching_rates(risks, annotations)
        reduced = reduce_annotations(annotations)
        for level in ConsistencyLevel:
            expected = sum(1 for a in reduced.values() if a.consistency is level)
            assert table["total"][level.value]["count"] == expected


class TestRecordAnnotation:
    def test_record_on_completed_report(self, store):
        seed_report(store, "rep-1")
        record_annotation(store, annotation("rep-1"))
        assert store.exists("annotation", "rep-1:t1")

    def test_record_on_escalated_report(self, store):
        seed_report(store, "rep-2", phase="escalated_harm")
        record_annotation(store, annotation("rep-2"))

    def test_failed_session_report_id_unknown(self, store):
        seed_report(store, "rep-3", phase="failed")
        with pytest.raises(UnknownReport):
            record_annotation(store, annotation("rep-3"))

    def test_running_session_not_terminal(self, store):
        seed_report(store, "rep-4", phase="stage1_running")
        with pytest.raises(ReportNotTerminal):
            record_annotation(store, annotation("rep-4"))

    def test_upsert_overwrites_and_audit_keeps_both(self, store):
        seed_report(store, "rep-5")
        record_annotation(store, annotation("rep-5", ConsistencyLevel.LOW))
        record_annotation(store, annotation("rep-5", ConsistencyLevel.HIGH,
                                            at=T0 + timedelta(minutes=5)))
        body, version = store.get("annotation", "rep-5:t1")
        assert body["consistency"] == "high"
        assert version == 2
        audit = [e for e in store.audit_events() if e["event_kind"] == "annotation_recorded"]
        assert len(audit) == 2


class TestCsv:
    def write_csv(self, tmp_path, rows, header="report_id,consistency,annotator_id,noted_at,comment"):
        path = tmp_path / "a.csv"
        path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
        return path

    def test_valid_rows_accepted(self, store, tmp_path):
        for i in range(3):
            seed_report(store, f"rep-{i}")
        rows = [f"rep-{i},high,t1,2025-04-01T00:00:00Z,fine" for i in range(3)]
        accepted, rejected = import_annotations_csv(store, self.write_csv(tmp_path, rows))
        assert (accepted, rejected) == (3, [])

    def test_unknown_report_row_rejected(self, store, tmp_path):
        seed_report(store, "rep-0")
        rows = [
            "rep-0,high,t1,2025-04-01T00:00:00Z,",
            "rep-missing,high,t1,2025-04-01T00:00:00Z,",
        ]
        accepted, rejected = import_annotations_csv(store, self.write_csv(tmp_path, rows))
        assert accepted == 1
        assert len(rejected) == 1 and rejected[0][0] == 3

    def test_invalid_consistency_rejected(self, store, tmp_path):
        seed_report(store, "rep-0")
        rows = ["rep-0,medium,t1,2025-04-01T00:00:00Z,"]
        accepted, rejected = import_annotations_csv(store, self.write_csv(tmp_path, rows))
        assert accepted == 0
        assert "invalid consistency" in rejected[0][1]

    def test_bad_header_is_format_error(self, store, tmp_path):
        path = self.write_csv(tmp_path, [], header="id,level")
        with pytest.raises(CsvFormatError):
            import_annotations_csv(store, path)

    def test_export_import_roundtrip(self, store, tmp_path):
        seed_report(store, "rep-0")
        record_annotation(store, annotation("rep-0", ConsistencyLevel.MODERATE, comment="读后感"))
        out = tmp_path / "out.csv"
        assert export_annotations_csv(store, out) == 1
        store2 = Store(tmp_path / "second.db")
        seed_report(store2, "rep-0")
        accepted, rejected = import_annotations_csv(store2, out)
        assert (accepted, rejected) == (1, [])
        body, _ = store2.get("annotation", "rep-0:t1")
        assert body["consistency"] == "moderate"
        assert body["comment"] == "读后感"
        store2.close()


class TestStoreStats:
    def test_stats_classification_reads_reports(self, store):
        for i in range(3):
            seed_report(store, f"rep-{i}", risk="warning" if i == 0 else "observation")
        dist = stats_classification(store)
        assert dist["warning"]["count"] == 1
        assert dist["observation"]["count"] == 2
