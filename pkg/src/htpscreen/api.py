"""HTTP interface for the review UI and integrators.

Submissions return immediately with ids and run asynchronously; clients poll
the session endpoint. Every error body has the same {code, message} shape,
and no response ever inlines image bytes: the drawing is served only from its
own authorized endpoint.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import Depends, FastAPI, File, Form, Header, Request, Response, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import Application
from .domain import ConsistencyLevel, RiskLevel, SubmissionSource
from .evaluation import (
    Annotation,
    ReportNotTerminal,
    UnknownReport,
    annotated_report_ids,
    record_annotation,
    stats_classification,
    stats_matching_rates,
)
from .orchestrator import Phase
from .storage import (
    NotFound,
    OversizeImage,
    RawUpload,
    UndecodableImage,
    UnsupportedMediaType,
    ingest_submission,
)

log = logging.getLogger(__name__)

RISK_SORT = {"escalated": 0, RiskLevel.WARNING.value: 1, RiskLevel.OBSERVATION.value: 2}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class AnnotationIn(BaseModel):
    consistency: str
    annotator_id: str = "anonymous"
    comment: str = ""


def create_app(app: Application, max_workers: int = 4) -> FastAPI:
    executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="session")

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        executor.shutdown(wait=True)  # let in-flight sessions finish before the store closes

    api = FastAPI(
        title="htpscreen service", version="0.1.0",
        docs_url=None, redoc_url=None, lifespan=lifespan,
    )

    if app.config.cors_origin:
        api.add_middleware(
            CORSMiddleware,
            allow_origins=[app.config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @api.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @api.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_request", "message": str(exc.errors()[:1])},
        )

    @api.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        log.exception("unhandled error on %s", request.url.path)
        return JSONResponse(
            status_code=500, content={"code": "internal_error", "message": "internal error"}
        )

    def require_auth(authorization: Optional[str] = Header(default=None)) -> None:
        expected = app.config.api_token
        if not expected:
            return
        if authorization != f"Bearer {expected}":
            raise ApiError(401, "unauthenticated", "missing or invalid bearer token")

    # -- submissions -----------------------------------------------------

    @api.post("/v1/submissions", status_code=201, dependencies=[Depends(require_auth)])
    async def post_submission(
        image: UploadFile = File(...),
        external_ref: Optional[str] = Form(default=None),
        cohort: Optional[str] = Form(default=None),
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        if idempotency_key:
            try:
                body, _ = app.store.get("idempotency", idempotency_key)
                return body
            except NotFound:
                pass
        data = await image.read()
        upload = RawUpload(data=data, external_ref=external_ref, grade_tag=cohort)
        try:
            submission, _ = ingest_submission(
                app.store, upload, app.anon_key, app.rng, SubmissionSource.API, app.clock
            )
        except OversizeImage as exc:
            raise ApiError(400, "oversize_image", str(exc)) from exc
        except UndecodableImage as exc:
            raise ApiError(400, "undecodable_image", str(exc)) from exc
        except UnsupportedMediaType as exc:
            raise ApiError(400, "unsupported_media_type", str(exc)) from exc
        session_id = app.orchestrator.start_session(submission.id)
        executor.submit(app.orchestrator.run_session, session_id)
        result = {"submission_id": submission.id, "session_id": session_id}
        if idempotency_key:
            app.store.put("idempotency", idempotency_key, result)
        return result

    @api.get("/v1/submissions/{submission_id}/image", dependencies=[Depends(require_auth)])
    def get_submission_image(submission_id: str):
        try:
            submission = app.store.get_submission(submission_id)
        except NotFound as exc:
            raise ApiError(404, "submission_not_found", str(exc)) from exc
        return Response(content=submission.image.data, media_type=submission.image.media_type)

    # -- sessions ----------------------------------------------------------

    @api.get("/v1/sessions/{session_id}", dependencies=[Depends(require_auth)])
    def get_session(session_id: str):
        try:
            body, _ = app.store.get("session", session_id)
        except NotFound as exc:
            raise ApiError(404, "session_not_found", str(exc)) from exc
        events = body.get("events", [])
        out = {
            "session_id": body["session_id"],
            "submission_id": body["submission_id"],
            "phase": body["phase"],
            "aspect_status": body["aspect_status"],
            "event_count": len(events),
            "last_event": events[-1] if events else None,
        }
        if body.get("report_id"):
            out["report_id"] = body["report_id"]
            out["report_url"] = f"/v1/reports/{body['report_id']}"
        if body.get("failure_reason"):
            out["failure_reason"] = body["failure_reason"]
        return out

    # -- reports -----------------------------------------------------------

    def report_summary(key: str, body: dict, annotated: set[str], cohorts: dict[str, Optional[str]]) -> dict:
        report = body["report"]
        return {
            "report_id": key,
            "risk": report["risk"],
            "escalated": bool(body.get("escalated")),
            "created_at": report["created_at"],
            "annotated": key in annotated,
            "submission_id": report["submission_id"],
            "grade_tag": cohorts.get(report["submission_id"]),
        }

    @api.get("/v1/reports", dependencies=[Depends(require_auth)])
    def list_reports(
        risk: Optional[str] = None,
        annotated: Optional[bool] = None,
        page: int = 1,
    ):
        if risk is not None and risk not in (r.value for r in RiskLevel):
            raise ApiError(400, "invalid_risk", f"unknown risk level {risk!r}")
        if page < 1:
            raise ApiError(400, "invalid_page", "page numbers start at 1")
        annotated_ids = annotated_report_ids(app.store)
        cohorts = {
            key: body.get("grade_tag") for key, body in app.store.list("submission")
        }
        items = [
            report_summary(key, body, annotated_ids, cohorts)
            for key, body in app.store.list("report")
        ]
        if risk is not None:
            items = [i for i in items if i["risk"] == risk]
        if annotated is not None:
            items = [i for i in items if i["annotated"] == annotated]
        # triage queue order: escalated, then warning, then observation;
        # newest first within each class (two stable passes)
        items.sort(key=lambda i: (i["created_at"], i["report_id"]), reverse=True)
        items.sort(key=lambda i: RISK_SORT["escalated"] if i["escalated"] else RISK_SORT[i["risk"]])
        page_size = app.config.page_size
        start = (page - 1) * page_size
        return {
            "items": items[start : start + page_size],
            "page": page,
            "page_size": page_size,
            "total": len(items),
        }

    @api.get("/v1/reports/{report_id}", dependencies=[Depends(require_auth)])
    def get_report(report_id: str):
        try:
            body, _ = app.store.get("report", report_id)
        except NotFound as exc:
            raise ApiError(404, "report_not_found", str(exc)) from exc
        return {
            "report_id": report_id,
            "escalated": bool(body.get("escalated")),
            "annotated": report_id in annotated_report_ids(app.store),
            "rule": body.get("rule"),
            "report": body["report"],
        }

    # -- annotations ---------------------------------------------------------

    @api.post(
        "/v1/reports/{report_id}/annotations",
        status_code=201,
        dependencies=[Depends(require_auth)],
    )
    def post_annotation(report_id: str, payload: AnnotationIn):
        try:
            consistency = ConsistencyLevel(payload.consistency.lower())
        except ValueError:
            raise ApiError(
                400, "invalid_consistency",
                f"consistency must be one of {[c.value for c in ConsistencyLevel]}",
            ) from None
        annotation = Annotation(
            report_id=report_id,
            consistency=consistency,
            annotator_id=payload.annotator_id,
            noted_at=app.clock.utcnow(),
            comment=payload.comment,
        )
        try:
            record_annotation(app.store, annotation)
        except UnknownReport as exc:
            raise ApiError(404, "report_not_found", str(exc)) from exc
        except ReportNotTerminal as exc:
            raise ApiError(409, "report_not_terminal", str(exc)) from exc
        return annotation.to_dict()

    # -- statistics ------------------------------------------------------------

    @api.get("/v1/stats/classification", dependencies=[Depends(require_auth)])
    def get_classification():
        return stats_classification(app.store)

    @api.get("/v1/stats/matching-rates", dependencies=[Depends(require_auth)])
    def get_matching_rates():
        return stats_matching_rates(app.store, app.clock)

    return api
