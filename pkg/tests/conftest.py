from __future__ import annotations

import io
import json
import sys
from pathlib import Path

import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from htpscreen.config import Application, AppConfig


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): formal acceptance criterion; prints a pass/fail line"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        label = marker.kwargs.get("label") or item.name
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] criterion {label}: {status}", file=sys.stderr)


def png_bytes(color=(120, 160, 200), size=(32, 32)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(color=(200, 160, 120), size=(32, 32)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="JPEG")
    return buf.getvalue()


@pytest.fixture
def png() -> bytes:
    return png_bytes()


def write_script(tmp_path: Path, script: dict, name: str = "script.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(script, ensure_ascii=False), encoding="utf-8")
    return path


def build_app(
    tmp_path: Path,
    script: dict,
    seed: int = 42,
    subdir: str = "run",
    **config_overrides,
) -> Application:
    """A fully wired mock-mode Application in an isolated store directory."""
    run_dir = tmp_path / subdir
    run_dir.mkdir(parents=True, exist_ok=True)
    script_path = write_script(run_dir, script)
    config = AppConfig(
        store_path=run_dir / "store.db",
        provider_mode="mock",
        mock_script=script_path,
        seed=seed,
        trace_log=run_dir / "trace.jsonl",
    )
    for key, value in config_overrides.items():
        setattr(config, key, value)
    return Application.build(config)


def make_report_dict(submission_id: str, risk: str, created_at: str, escalated: bool = False) -> dict:
    """A minimal FinalReport body that passes validate_final_report."""
    aspect_reports = [
        {
            "aspect": aspect,
            "observations": [],
            "interpretation": f"{aspect} reading",
            "produced_at": created_at,
            "model_trace_id": f"t.{aspect}",
        }
        for aspect in ("overall", "house", "tree", "person")
    ]
    report = {
        "submission_id": submission_id,
        "risk": risk,
        "summary": "fixture summary",
        "positive_factors": [],
        "negative_factors": [],
        "neutral_factors": [],
        "aspect_reports": aspect_reports,
        "created_at": created_at,
    }
    if escalated:
        report["escalation_notice"] = "please arrange professional assistance"
    return report


def seed_reports(store, warning: int = 0, observation: int = 0, escalated: int = 0,
                 start_minute: int = 0) -> list[str]:
    """Synthesize terminal sessions + stored reports directly, newest last."""
    ids = []
    minute = start_minute
    plan = [("warning", True)] * escalated + [("warning", False)] * warning
    plan += [("observation", False)] * observation
    for i, (risk, is_escalated) in enumerate(plan):
        suffix = f"{minute:06d}"
        report_id, session_id, sub_id = f"rep-{suffix}", f"ses-{suffix}", f"sub-{suffix}"
        created = f"2025-05-01T{minute // 60:02d}:{minute % 60:02d}:00Z"
        store.put("session", session_id, {
            "session_id": session_id, "submission_id": sub_id,
            "phase": "escalated_harm" if is_escalated else "completed",
            "aspect_status": {a: "done" for a in ("overall", "house", "tree", "person")},
            "report_id": report_id, "events": [],
        })
        store.put("report", report_id, {
            "report": make_report_dict(sub_id, risk, created, is_escalated),
            "escalated": is_escalated,
            "rule": {"severe_short_circuit": True, "negative_factor_threshold": 4,
                     "model_suggestion_mode": "conservative_or"},
            "session_id": session_id,
        })
        ids.append(report_id)
        minute += 1
    return ids


def run_pipeline(app: Application, image: bytes, external_ref=None, grade_tag=None):
    """Ingest one drawing and drive its session to a terminal phase."""
    from htpscreen.domain import SubmissionSource
    from htpscreen.storage import RawUpload, ingest_submission

    submission, receipt = ingest_submission(
        app.store,
        RawUpload(data=image, external_ref=external_ref, grade_tag=grade_tag),
        app.anon_key,
        app.rng,
        SubmissionSource.FIXTURE,
        app.clock,
    )
    session_id = app.orchestrator.start_session(submission.id)
    state = app.orchestrator.run_session(session_id)
    return submission, state
