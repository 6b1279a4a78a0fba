"""Anonymized persistence: submissions, sessions, reports, annotations, audit.

Backed by a single embedded SQLite file plus an images/ directory of opaque
blobs named by submission id, so a school deployment needs no external
database. Every write is an optimistic-versioned upsert; audit events are
append-only. External references never touch disk: only a keyed digest is
kept, which stays linkable for follow-up without being reversible.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import io
import json
import random
import sqlite3
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

from PIL import Image, UnidentifiedImageError

from .clocks import Clock, RealClock
from .domain import (
    DrawingSubmission,
    ImagePayload,
    SubmissionSource,
    canonical_json,
    format_timestamp,
)

MAX_IMAGE_BYTES = 10 * 1024 * 1024
ALLOWED_MEDIA_TYPES = ("image/png", "image/jpeg")
PII_DENYLIST = ("name", "birthdate", "address", "phone", "roster_id", "student_id", "school")

RECORD_KINDS = ("submission", "session", "report", "annotation", "idempotency")

_EXTENSIONS = {"image/png": ".png", "image/jpeg": ".jpg"}


class StorageError(Exception):
    pass


class NotFound(StorageError):
    def __init__(self, kind: str, key: str):
        super().__init__(f"{kind} {key!r} not found")
        self.kind = kind
        self.key = key


class VersionConflict(StorageError):
    def __init__(self, kind: str, key: str, expected: int, actual: int):
        super().__init__(
            f"stale write to {kind} {key!r}: expected version {expected}, store has {actual}"
        )
        self.expected = expected
        self.actual = actual


class OversizeImage(StorageError):
    pass


class UndecodableImage(StorageError):
    pass


class UnsupportedMediaType(StorageError):
    pass


@dataclass(frozen=True)
class AnonymizationReceipt:
    """What the ingestion gate removed; the original reference is never stored."""

    stripped_fields: tuple[str, ...]
    original_ref_digest: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict = {"stripped_fields": list(self.stripped_fields)}
        if self.original_ref_digest is not None:
            out["original_ref_digest"] = self.original_ref_digest
        return out


@dataclass(frozen=True)
class RawUpload:
    """An unanonymized upload as it arrives from the API or CLI."""

    data: bytes
    external_ref: Optional[str] = None
    grade_tag: Optional[str] = None
    extra_metadata: dict = field(default_factory=dict)


class Store:
    """Single-file document store with per-key optimistic versioning."""

    def __init__(self, path: Path, clock: Optional[Clock] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.images_dir = self.path.parent / "images"
        self.clock = clock or RealClock()
        self._lock = threading.RLock()
        self._db = sqlite3.connect(str(self.path), check_same_thread=False)
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS records ("
            " kind TEXT NOT NULL, key TEXT NOT NULL, version INTEGER NOT NULL,"
            " body TEXT NOT NULL, written_at TEXT NOT NULL,"
            " PRIMARY KEY (kind, key))"
        )
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS audit ("
            " seq INTEGER PRIMARY KEY AUTOINCREMENT,"
            " at TEXT NOT NULL, event_kind TEXT NOT NULL, detail TEXT NOT NULL)"
        )
        self._db.commit()

    def close(self) -> None:
        with self._lock:
            self._db.commit()
            self._db.close()

    # -- generic record operations ------------------------------------

    def put(self, kind: str, key: str, body: dict, expected_version: Optional[int] = None) -> int:
        if kind not in RECORD_KINDS:
            raise StorageError(f"unknown record kind {kind!r}")
        encoded = canonical_json(body)
        written_at = format_timestamp(self.clock.utcnow())
        with self._lock:
            row = self._db.execute(
                "SELECT version FROM records WHERE kind=? AND key=?", (kind, key)
            ).fetchone()
            current = row[0] if row else 0
            if expected_version is not None and expected_version != current:
                raise VersionConflict(kind, key, expected_version, current)
            version = current + 1
            self._db.execute(
                "INSERT INTO records (kind, key, version, body, written_at)"
                " VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT(kind, key) DO UPDATE SET"
                " version=excluded.version, body=excluded.body, written_at=excluded.written_at",
                (kind, key, version, encoded, written_at),
            )
            self._db.commit()
            return version

    def get(self, kind: str, key: str) -> tuple[dict, int]:
        with self._lock:
            row = self._db.execute(
                "SELECT body, version FROM records WHERE kind=? AND key=?", (kind, key)
            ).fetchone()
        if row is None:
            raise NotFound(kind, key)
        return json.loads(row[0]), row[1]

    def exists(self, kind: str, key: str) -> bool:
        with self._lock:
            row = self._db.execute(
                "SELECT 1 FROM records WHERE kind=? AND key=?", (kind, key)
            ).fetchone()
        return row is not None

    def list(
        self, kind: str, predicate: Optional[Callable[[str, dict], bool]] = None
    ) -> list[tuple[str, dict]]:
        with self._lock:
            rows = self._db.execute(
                "SELECT key, body FROM records WHERE kind=? ORDER BY rowid", (kind,)
            ).fetchall()
        items = [(key, json.loads(body)) for key, body in rows]
        if predicate is not None:
            items = [(k, b) for k, b in items if predicate(k, b)]
        return items

    def append_audit(self, event_kind: str, detail: dict) -> None:
        with self._lock:
            self._db.execute(
                "INSERT INTO audit (at, event_kind, detail) VALUES (?, ?, ?)",
                (format_timestamp(self.clock.utcnow()), event_kind, canonical_json(detail)),
            )
            self._db.commit()

    def audit_events(self) -> list[dict]:
        with self._lock:
            rows = self._db.execute(
                "SELECT seq, at, event_kind, detail FROM audit ORDER BY seq"
            ).fetchall()
        return [
            {"seq": seq, "at": at, "event_kind": kind, "detail": json.loads(detail)}
            for seq, at, kind, detail in rows
        ]

    # -- submissions (image blobs live beside the database) ------------

    def put_submission(self, submission: DrawingSubmission, receipt: AnonymizationReceipt) -> None:
        self.images_dir.mkdir(parents=True, exist_ok=True)
        blob_name = submission.id + _EXTENSIONS.get(submission.image.media_type, ".bin")
        (self.images_dir / blob_name).write_bytes(submission.image.data)
        body = submission.to_dict()
        body["image"] = {"media_type": submission.image.media_type, "blob": blob_name}
        body["anonymization"] = receipt.to_dict()
        self.put("submission", submission.id, body)

    def get_submission(self, submission_id: str) -> DrawingSubmission:
        body, _ = self.get("submission", submission_id)
        blob = self.images_dir / body["image"]["blob"]
        raw = dict(body)
        raw["image"] = {
            "media_type": body["image"]["media_type"],
            "data_b64": base64.b64encode(blob.read_bytes()).decode("ascii"),
        }
        raw.pop("anonymization", None)
        return DrawingSubmission.from_dict(raw)

    # -- whole-store scans ---------------------------------------------

    def iter_bodies(self) -> Iterator[tuple[str, str, str]]:
        """Yield (kind, key, raw JSON body) over every record, audit included."""
        with self._lock:
            rows = self._db.execute("SELECT kind, key, body FROM records").fetchall()
            audit = self._db.execute("SELECT seq, detail FROM audit").fetchall()
        for kind, key, body in rows:
            yield kind, key, body
        for seq, detail in audit:
            yield "audit", str(seq), detail


def _json_keys(value) -> Iterator[str]:
    if isinstance(value, dict):
        for k, v in value.items():
            yield k
            yield from _json_keys(v)
    elif isinstance(value, list):
        for v in value:
            yield from _json_keys(v)


def scan_for_pii(
    store: Store,
    denylist_fields: tuple[str, ...] = PII_DENYLIST,
    forbidden_strings: tuple[str, ...] = (),
) -> list[str]:
    """Occurrences of denylisted field names or forbidden substrings anywhere in the store."""
    hits: list[str] = []
    for kind, key, raw in store.iter_bodies():
        for field_name in set(_json_keys(json.loads(raw))):
            if field_name.lower() in denylist_fields:
                hits.append(f"{kind}/{key}: field {field_name!r}")
        for needle in forbidden_strings:
            if needle and needle in raw:
                hits.append(f"{kind}/{key}: contains {needle!r}")
    return hits


def keyed_digest(anon_key: bytes, external_ref: str) -> str:
    return hmac.new(anon_key, external_ref.encode("utf-8"), hashlib.sha256).hexdigest()


def ingest_submission(
    store: Store,
    upload: RawUpload,
    anon_key: bytes,
    rng: random.Random,
    source: SubmissionSource,
    clock: Optional[Clock] = None,
    max_bytes: int = MAX_IMAGE_BYTES,
    allowed_media_types: tuple[str, ...] = ALLOWED_MEDIA_TYPES,
) -> tuple[DrawingSubmission, AnonymizationReceipt]:
    """Anonymize and persist an upload.

    The submission id is freshly generated (from the run's RNG, so mock runs
    are reproducible) and carries no trace of the external reference; the
    reference survives only as a keyed digest in the receipt.
    """
    clock = clock or store.clock
    if len(upload.data) > max_bytes:
        raise OversizeImage(f"image is {len(upload.data)} bytes, cap is {max_bytes}")
    if not upload.data:
        raise UndecodableImage("empty image payload")
    try:
        with Image.open(io.BytesIO(upload.data)) as img:
            fmt = img.format
            img.verify()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UndecodableImage(f"cannot decode image: {exc}") from exc
    media_type = {"PNG": "image/png", "JPEG": "image/jpeg"}.get(fmt or "", f"image/{(fmt or 'unknown').lower()}")
    if media_type not in allowed_media_types:
        raise UnsupportedMediaType(f"{media_type} not in allowlist {allowed_media_types}")

    submission_id = "sub-" + "".join(rng.choice("0123456789abcdef") for _ in range(16))
    stripped = []
    digest = None
    if upload.external_ref:
        digest = keyed_digest(anon_key, upload.external_ref)
        stripped.append("external_ref")
    stripped.extend(sorted(upload.extra_metadata.keys()))

    submission = DrawingSubmission(
        id=submission_id,
        image=ImagePayload(media_type=media_type, data=upload.data),
        received_at=clock.utcnow(),
        source=source,
        grade_tag=upload.grade_tag,
    )
    receipt = AnonymizationReceipt(
        stripped_fields=tuple(stripped), original_ref_digest=digest
    )
    store.put_submission(submission, receipt)
    store.append_audit(
        "submission_ingested",
        {"submission_id": submission_id, "stripped_fields": list(receipt.stripped_fields)},
    )
    return submission, receipt


def export_store(store: Store, out_dir: Path, include_images: bool = False) -> dict[str, int]:
    """Dump every record kind as JSON-lines for backup or inspection."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts: dict[str, int] = {}
    for kind in RECORD_KINDS:
        items = store.list(kind)
        with (out_dir / f"{kind}.jsonl").open("w", encoding="utf-8") as fh:
            for key, body in items:
                fh.write(canonical_json({"key": key, "body": body}) + "\n")
        counts[kind] = len(items)
    events = store.audit_events()
    with (out_dir / "audit.jsonl").open("w", encoding="utf-8") as fh:
        for event in events:
            fh.write(canonical_json(event) + "\n")
    counts["audit"] = len(events)
    if include_images and store.images_dir.exists():
        dest = out_dir / "images"
        dest.mkdir(exist_ok=True)
        for blob in store.images_dir.iterdir():
            (dest / blob.name).write_bytes(blob.read_bytes())
    return counts
