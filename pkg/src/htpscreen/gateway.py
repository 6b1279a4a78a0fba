"""Uniform access to the multimodal and text model endpoints.

One protocol (OpenAI-style chat completions over HTTPS) for both roles, with
deterministic refusal detection, an error taxonomy, bounded retry with
exponential backoff, a per-attempt trace log that never records prompts or
images, and a scripted in-process mock provider for offline runs.
"""

from __future__ import annotations

import base64
import json
import random
import threading
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Union

import requests

from .clocks import Clock, RealClock
from .domain import ImagePayload
from .prompts import RenderedPrompt

DEFAULT_TEMPERATURE = 0.2
DEFAULT_TOP_P = 0.75
DEFAULT_MAX_OUTPUT_TOKENS = 2048
DEFAULT_CONCURRENT_CAP = 8


class ModelRole(str, Enum):
    MULTIMODAL_ANALYST = "multimodal_analyst"
    TEXT_EXPERT = "text_expert"


class ErrorKind(str, Enum):
    REFUSAL = "refusal"
    RATE_LIMITED = "rate_limited"
    NETWORK = "network"
    MALFORMED_RESPONSE = "malformed_response"
    PROVIDER_ERROR = "provider_error"


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ModelRequest:
    role: ModelRole
    prompt: RenderedPrompt
    trace_id: str
    image: Optional[ImagePayload] = None
    params: SamplingParams = SamplingParams()

    def __post_init__(self):
        if self.image is not None and self.role is not ModelRole.MULTIMODAL_ANALYST:
            raise ValueError("image attachments are only valid for the multimodal role")


class GatewayError(Exception):
    def __init__(self, kind: ErrorKind, detail: str, retryable: bool):
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail
        self.retryable = retryable


class RetryExhausted(GatewayError):
    def __init__(self, last: GatewayError, attempts: int):
        super().__init__(last.kind, f"exhausted after {attempts} attempts: {last.detail}", False)
        self.last = last
        self.attempts = attempts


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    backoff_factor: float = 2.0
    jitter_fraction: float = 0.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if self.backoff_factor < 1:
            raise ValueError("backoff_factor must be >= 1")
        if not (0 <= self.jitter_fraction < 1):
            raise ValueError("jitter_fraction must be in [0, 1)")

    def delay_for(self, attempt: int, rng: Optional[random.Random] = None) -> float:
        """Delay before attempt ``attempt + 1`` (attempt counts from 1)."""
        delay = self.base_delay * self.backoff_factor ** (attempt - 1)
        if self.jitter_fraction and rng is not None:
            delay += delay * rng.uniform(-self.jitter_fraction, self.jitter_fraction)
        return delay


@dataclass(frozen=True)
class AttemptRecord:
    attempt: int
    outcome_kind: str  # "ok" or an ErrorKind value
    detail: str = ""
    delay_before_next: Optional[float] = None


class TransportFailure(Exception):
    """Raw provider failure before classification."""

    def __init__(self, category: str, detail: str, status: Optional[int] = None):
        super().__init__(detail)
        self.category = category  # network | status | malformed | exhausted
        self.detail = detail
        self.status = status


def load_refusal_patterns(path: Optional[Path] = None) -> tuple[str, ...]:
    if path is None:
        path = Path(str(resources.files("htpscreen").joinpath("data/refusal_patterns.txt")))
    patterns = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            patterns.append(line.lower())
    return tuple(patterns)


def classify_response(
    raw: Union[str, TransportFailure], patterns: tuple[str, ...]
) -> Union[str, GatewayError]:
    """Total classification of a provider outcome: the text, or a taxonomy error.

    Never raises; the caller decides whether to raise the returned error.
    """
    if isinstance(raw, TransportFailure):
        if raw.category == "network":
            return GatewayError(ErrorKind.NETWORK, raw.detail, retryable=True)
        if raw.category == "malformed":
            return GatewayError(ErrorKind.MALFORMED_RESPONSE, raw.detail, retryable=True)
        if raw.category == "exhausted":
            return GatewayError(ErrorKind.PROVIDER_ERROR, raw.detail, retryable=False)
        if raw.status == 429:
            return GatewayError(ErrorKind.RATE_LIMITED, raw.detail, retryable=True)
        if raw.status is not None and 400 <= raw.status < 500:
            return GatewayError(ErrorKind.PROVIDER_ERROR, raw.detail, retryable=False)
        return GatewayError(ErrorKind.PROVIDER_ERROR, raw.detail, retryable=True)
    lowered = raw.lower()
    for pattern in patterns:
        if pattern in lowered:
            return GatewayError(
                ErrorKind.REFUSAL, f"matched refusal pattern {pattern!r}", retryable=True
            )
    return raw


def with_retry(
    call: Callable[[int], str],
    policy: RetryPolicy,
    clock: Clock,
    rng: Optional[random.Random] = None,
    on_attempt: Optional[Callable[[AttemptRecord], None]] = None,
) -> tuple[str, list[AttemptRecord]]:
    """Run ``call(attempt)`` with bounded retry on retryable GatewayErrors.

    Returns (result, attempt log); raises RetryExhausted after max_attempts,
    or the original error immediately when it is not retryable. The attempt
    log is attached to raised errors as ``attempt_log``.
    """
    log: list[AttemptRecord] = []

    def note(record: AttemptRecord) -> None:
        log.append(record)
        if on_attempt is not None:
            on_attempt(record)

    for attempt in range(1, policy.max_attempts + 1):
        try:
            result = call(attempt)
        except GatewayError as err:
            last_attempt = attempt >= policy.max_attempts
            if err.retryable and not last_attempt:
                delay = policy.delay_for(attempt, rng)
                note(AttemptRecord(attempt, err.kind.value, err.detail, delay))
                clock.sleep(delay)
                continue
            note(AttemptRecord(attempt, err.kind.value, err.detail))
            if not err.retryable:
                err.attempt_log = log
                raise
            exhausted = RetryExhausted(err, attempt)
            exhausted.attempt_log = log
            raise exhausted from err
        note(AttemptRecord(attempt, "ok"))
        return result, log
    raise AssertionError("unreachable")


class Provider:
    def send(self, request: ModelRequest) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class ProviderEndpoint:
    base_url: str
    model_name: str
    api_key: str = ""
    timeout_s: float = 60.0


class HttpProvider(Provider):
    """OpenAI-compatible chat-completions client for one configured endpoint."""

    def __init__(self, endpoint: ProviderEndpoint, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self._session = session or requests.Session()

    def send(self, request: ModelRequest) -> str:
        if request.image is not None:
            data_url = "data:{};base64,{}".format(
                request.image.media_type,
                base64.b64encode(request.image.data).decode("ascii"),
            )
            content: object = [
                {"type": "text", "text": request.prompt.text},
                {"type": "image_url", "image_url": {"url": data_url}},
            ]
        else:
            content = request.prompt.text
        payload = {
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._session.post(
                url, json=payload, headers=headers, timeout=self.endpoint.timeout_s
            )
        except requests.RequestException as exc:
            raise TransportFailure("network", f"{type(exc).__name__}: {exc}") from exc
        if response.status_code != 200:
            raise TransportFailure(
                "status", f"HTTP {response.status_code}", status=response.status_code
            )
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportFailure("malformed", f"bad completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise TransportFailure("malformed", "completion content is not text")
        return text


class ScriptExhausted(Exception):
    def __init__(self, template_id: str, consumed: int):
        super().__init__(f"mock script exhausted for {template_id!r} after {consumed} responses")
        self.template_id = template_id


@dataclass
class ScriptEntry:
    text: str = ""
    error: Optional[str] = None  # network | rate_limited | malformed
    latency_s: float = 0.0
    latency_range: Optional[tuple[float, float]] = None


class MockProvider(Provider):
    """Deterministic scripted provider: responses in order per template id.

    ``mode`` is "ordered" (exhaustion raises) or "cycle" (lists repeat). The
    seed only matters for entries with a latency_range, which sample their
    delay from the seeded generator.
    """

    def __init__(self, script: dict[str, list[ScriptEntry]], seed: int = 0,
                 mode: str = "ordered", clock: Optional[Clock] = None):
        if not script or all(not entries for entries in script.values()):
            raise ValueError("mock script must contain at least one response")
        if mode not in ("ordered", "cycle"):
            raise ValueError(f"unknown script mode {mode!r}")
        self._script = script
        self._mode = mode
        self._rng = random.Random(seed)
        self._clock = clock or RealClock()
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def send(self, request: ModelRequest) -> str:
        template_id = request.prompt.template_id
        with self._lock:
            entries = self._script.get(template_id, [])
            index = self._cursor.get(template_id, 0)
            if index >= len(entries):
                if self._mode == "cycle" and entries:
                    index = index % len(entries)
                else:
                    raise TransportFailure(
                        "exhausted",
                        str(ScriptExhausted(template_id, len(entries))),
                    )
            entry = entries[index]
            self._cursor[template_id] = self._cursor.get(template_id, 0) + 1
            if entry.latency_range is not None:
                latency = self._rng.uniform(*entry.latency_range)
            else:
                latency = entry.latency_s
        if latency > 0:
            self._clock.sleep(latency)
        if entry.error == "network":
            raise TransportFailure("network", "scripted network failure")
        if entry.error == "rate_limited":
            raise TransportFailure("status", "scripted HTTP 429", status=429)
        if entry.error == "malformed":
            raise TransportFailure("malformed", "scripted malformed payload")
        if entry.error is not None:
            raise ValueError(f"unknown scripted error {entry.error!r}")
        return entry.text


def load_mock_script(path: Union[str, Path]) -> tuple[dict[str, list[ScriptEntry]], str]:
    """Parse a mock script file; returns (script, mode)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    script: dict[str, list[ScriptEntry]] = {}
    for template_id, entries in raw.get("responses", {}).items():
        parsed = []
        for entry in entries:
            parsed.append(
                ScriptEntry(
                    text=entry.get("text", ""),
                    error=entry.get("error"),
                    latency_s=float(entry.get("latency_s", 0.0)),
                    latency_range=tuple(entry["latency_range"]) if "latency_range" in entry else None,
                )
            )
        script[template_id] = parsed
    return script, raw.get("mode", "ordered")


class TraceLog:
    """Append-only JSON-lines attempt log; one record per attempt, no content."""

    def __init__(self, path: Optional[Path]):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()

    def record(self, trace_id: str, role: ModelRole, template_id: str,
               attempt: int, outcome_kind: str, latency_ms: int) -> None:
        if self._path is None:
            return
        line = json.dumps(
            {
                "trace_id": trace_id,
                "role": role.value,
                "template_id": template_id,
                "attempt": attempt,
                "outcome_kind": outcome_kind,
                "latency_ms": latency_ms,
            },
            ensure_ascii=False,
        )
        with self._lock:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class ModelGateway:
    """Routes requests to the provider for each role, with retry and tracing."""

    def __init__(
        self,
        providers: dict[ModelRole, Provider],
        clock: Optional[Clock] = None,
        policy: RetryPolicy = RetryPolicy(),
        refusal_patterns: Optional[tuple[str, ...]] = None,
        trace_path: Optional[Path] = None,
        rng: Optional[random.Random] = None,
        concurrent_cap: int = DEFAULT_CONCURRENT_CAP,
    ):
        self.providers = providers
        self.clock = clock or RealClock()
        self.policy = policy
        self.patterns = refusal_patterns if refusal_patterns is not None else load_refusal_patterns()
        self.trace = TraceLog(trace_path)
        self._rng = rng
        self._slots = threading.BoundedSemaphore(concurrent_cap)

    def complete(self, request: ModelRequest, attempt: int = 1) -> str:
        """One classified provider call; raises GatewayError per the taxonomy."""
        provider = self.providers.get(request.role)
        if provider is None:
            raise GatewayError(
                ErrorKind.PROVIDER_ERROR, f"no provider configured for {request.role.value}", False
            )
        started = self.clock.now()
        try:
            with self._slots:
                raw: Union[str, TransportFailure] = provider.send(request)
        except TransportFailure as failure:
            raw = failure
        outcome = classify_response(raw, self.patterns)
        latency_ms = int((self.clock.now() - started) * 1000)
        kind = "ok" if isinstance(outcome, str) else outcome.kind.value
        self.trace.record(
            request.trace_id, request.role, request.prompt.template_id, attempt, kind, latency_ms
        )
        if isinstance(outcome, GatewayError):
            raise outcome
        return outcome

    def call(
        self,
        request: ModelRequest,
        on_attempt: Optional[Callable[[AttemptRecord], None]] = None,
    ) -> tuple[str, list[AttemptRecord]]:
        """complete() under the gateway retry policy."""
        return with_retry(
            lambda attempt: self.complete(request, attempt),
            self.policy,
            self.clock,
            rng=self._rng,
            on_attempt=on_attempt,
        )
