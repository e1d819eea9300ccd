"""Chat-completion gateway with retries, usage capture and cost accounting.

Wire format (POST ``{base_url}/chat/completions``, bearer credential)::

    request  {"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}],
              "temperature": ..., "max_completion_tokens": ...}
    response {"choices": [{"message": {"content": ...}}],
              "usage": {"prompt_tokens": ..., "completion_tokens": ...}}
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx

from .errors import (
    AuthFailed,
    OutputEmpty,
    ProviderError,
    ProviderExhausted,
    TransientProviderError,
    UnknownModelPrice,
)
from .prompts import estimate_tokens

logger = logging.getLogger(__name__)

API_KEY_ENV = "CIAO_API_KEY"
BASE_URL_ENV = "CIAO_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-5"

MAX_ATTEMPTS = 3
BACKOFF_BASE_S = 2.0
BACKOFF_FACTOR = 4.0


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    system_text: str
    user_text: str
    max_output_tokens: int = 16_000
    temperature: float = 0.2
    label: str = ""  # section id; used by the mock script and cost report

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must not be empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class RawCompletion:
    text: str
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: int
    attempts: int


class Provider(Protocol):
    def send(self, request: CompletionRequest) -> RawCompletion: ...


class Clock:
    """Wall clock and monotonic timer; swapped for a fixed one in tests."""

    def now(self) -> dt.datetime:
        return dt.datetime.now(dt.timezone.utc).replace(microsecond=0)

    def monotonic_ms(self) -> int:
        return int(time.monotonic() * 1000)


class FixedClock(Clock):
    def __init__(self, epoch: int):
        self._now = dt.datetime.fromtimestamp(epoch, dt.timezone.utc)

    def now(self) -> dt.datetime:
        return self._now

    def monotonic_ms(self) -> int:
        return 0


def backoff_delay(failures: int, rng: Callable[[], float] = random.random) -> float:
    """Full-jitter delay before the retry that follows ``failures`` failures."""
    cap = BACKOFF_BASE_S * BACKOFF_FACTOR ** (failures - 1)
    return rng() * cap


def complete(
    request: CompletionRequest,
    provider: Provider,
    *,
    max_attempts: int = MAX_ATTEMPTS,
    sleep: Callable[[float], None] = time.sleep,
    rng: Callable[[], float] = random.random,
    clock: Clock | None = None,
) -> CompletionResult:
    clock = clock or Clock()
    start = clock.monotonic_ms()
    last: TransientProviderError | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            raw = provider.send(request)
        except TransientProviderError as exc:
            last = exc
            logger.warning("%s: attempt %d/%d failed: %s", request.label or request.model_id, attempt, max_attempts, exc)
            if attempt < max_attempts:
                sleep(backoff_delay(attempt, rng))
            continue
        if not raw.text.strip():
            raise OutputEmpty(f"{request.label or request.model_id}: provider returned a blank completion")
        return CompletionResult(
            text=raw.text,
            input_tokens=max(raw.input_tokens, 0),
            output_tokens=max(raw.output_tokens, 0),
            latency_ms=clock.monotonic_ms() - start,
            attempts=attempt,
        )
    raise ProviderExhausted(max_attempts, last)


class Gateway:
    """Provider plus call settings shared by every section request."""

    def __init__(
        self,
        provider: Provider,
        model_id: str = DEFAULT_MODEL,
        *,
        max_output_tokens: int = 16_000,
        temperature: float = 0.2,
        max_in_flight: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Clock | None = None,
    ):
        self.provider = provider
        self.model_id = model_id
        self.max_output_tokens = max_output_tokens
        self.temperature = temperature
        self.sleep = sleep
        self.clock = clock or Clock()
        self._slots = threading.BoundedSemaphore(max_in_flight) if max_in_flight else None

    def request(self, system_text: str, user_text: str, label: str = "") -> CompletionRequest:
        return CompletionRequest(
            self.model_id, system_text, user_text, self.max_output_tokens, self.temperature, label
        )

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if self._slots is None:
            return complete(request, self.provider, sleep=self.sleep, clock=self.clock)
        with self._slots:
            return complete(request, self.provider, sleep=self.sleep, clock=self.clock)


class HttpProvider:
    """Client for chat-completions-compatible HTTP APIs."""

    def __init__(
        self,
        api_key: str,
        base_url: str = DEFAULT_BASE_URL,
        *,
        timeout_s: float = 600.0,
        max_tokens_field: str = "max_completion_tokens",
        client: httpx.Client | None = None,
    ):
        self.api_key = api_key
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.max_tokens_field = max_tokens_field
        self.client = client or httpx.Client(timeout=timeout_s)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpProvider":
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise AuthFailed(f"{API_KEY_ENV} is not set")
        return cls(key, os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL, **kwargs)

    def payload(self, request: CompletionRequest) -> dict:
        return {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            self.max_tokens_field: request.max_output_tokens,
        }

    def send(self, request: CompletionRequest) -> RawCompletion:
        try:
            resp = self.client.post(
                self.url,
                json=self.payload(request),
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
        except httpx.TimeoutException as exc:
            raise TransientProviderError("timeout", str(exc)) from exc
        except httpx.TransportError as exc:
            raise TransientProviderError("connection", str(exc)) from exc

        if resp.status_code in (401, 403):
            raise AuthFailed(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            raise TransientProviderError("rate-limit", resp.text[:200])
        if resp.status_code in (408, 409) or resp.status_code >= 500:
            raise TransientProviderError("server-error", f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:500]}")

        try:
            body = resp.json()
            text = body["choices"][0]["message"].get("content") or ""
            usage = body.get("usage") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed response: {exc}") from exc
        return RawCompletion(text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))


@dataclass(frozen=True)
class ScriptStep:
    text: str | None = None
    error: str | None = None  # rate-limit | timeout | server-error | auth | bad-request


_MOCK_ERRORS = {
    "rate-limit": lambda label: TransientProviderError("rate-limit", label),
    "timeout": lambda label: TransientProviderError("timeout", label),
    "server-error": lambda label: TransientProviderError("server-error", label),
    "auth": lambda label: AuthFailed(f"mock auth failure for {label}"),
    "bad-request": lambda label: ProviderError(f"mock bad request for {label}"),
}


class MockProvider:
    """Deterministic offline provider.

    ``script`` maps a request label to the steps returned on successive calls
    for that label. Once a label's steps run out (or when it has none) the
    ``default`` callable produces the text. Token usage is estimated from the
    request and output text, so runs are reproducible byte for byte.
    """

    def __init__(self, script: dict[str, list[ScriptStep]] | None = None, default: Callable[[CompletionRequest], str] | None = None):
        self.script = {k: list(v) for k, v in (script or {}).items()}
        self.default = default or (lambda req: req.user_text)
        self.calls: list[str] = []
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0

    @classmethod
    def from_json(cls, text: str, default=None) -> "MockProvider":
        """Load ``[{"section": id, "text": ...} | {"section": id, "error": kind}, ...]``."""
        steps: dict[str, list[ScriptStep]] = {}
        for i, item in enumerate(json.loads(text)):
            if not isinstance(item, dict) or "section" not in item:
                raise ValueError(f"mock script item {i} needs a 'section' key")
            if ("text" in item) == ("error" in item):
                raise ValueError(f"mock script item {i} needs exactly one of 'text' or 'error'")
            if "error" in item and item["error"] not in _MOCK_ERRORS:
                raise ValueError(f"mock script item {i}: unknown error {item['error']!r}")
            steps.setdefault(item["section"], []).append(ScriptStep(item.get("text"), item.get("error")))
        return cls(steps, default)

    def send(self, request: CompletionRequest) -> RawCompletion:
        with self._lock:
            self.calls.append(request.label)
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
            n = self._cursor.get(request.label, 0)
            self._cursor[request.label] = n + 1
        try:
            time.sleep(0.002)  # widen the window so concurrency is observable
            steps = self.script.get(request.label, [])
            step = steps[n] if n < len(steps) else ScriptStep()
            if step.error:
                raise _MOCK_ERRORS[step.error](request.label)
            text = step.text if step.text is not None else self.default(request)
            return RawCompletion(
                text,
                estimate_tokens(request.system_text + request.user_text),
                estimate_tokens(text),
            )
        finally:
            with self._lock:
                self.in_flight -= 1


# cost accounting

PriceTable = dict  # model_id -> (usd per 1M input tokens, usd per 1M output tokens), Decimals


def load_price_table(path: str | os.PathLike | None = None) -> dict[str, tuple[Decimal, Decimal]]:
    """Read ``{"model": {"input": <usd/M>, "output": <usd/M>}}``; the bundled table by default."""
    if path is None:
        text = resources.files("ciao").joinpath("data/prices.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text, parse_float=Decimal, parse_int=Decimal)
    table = {}
    for model, entry in raw.items():
        if model.startswith("_"):
            continue
        p_in, p_out = Decimal(entry["input"]), Decimal(entry["output"])
        if p_in < 0 or p_out < 0:
            raise ValueError(f"negative price for {model}")
        table[model] = (p_in, p_out)
    return table


@dataclass(frozen=True)
class CallCost:
    label: str
    input_tokens: int
    output_tokens: int
    usd: Decimal


@dataclass(frozen=True)
class CostReport:
    per_call: tuple[CallCost, ...] = ()
    total_usd: Decimal = Decimal(0)
    total_input_tokens: int = 0
    total_output_tokens: int = 0


def call_cost(input_tokens: int, output_tokens: int, prices: tuple[Decimal, Decimal]) -> Decimal:
    p_in, p_out = prices
    return (Decimal(input_tokens) * p_in + Decimal(output_tokens) * p_out).scaleb(-6)


def accumulate_cost(calls: Iterable[tuple[str, int, int]], model_id: str, prices: dict) -> CostReport:
    if model_id not in prices:
        raise UnknownModelPrice(model_id)
    per_call = tuple(CallCost(label, i, o, call_cost(i, o, prices[model_id])) for label, i, o in calls)
    return CostReport(
        per_call,
        sum((c.usd for c in per_call), Decimal(0)),
        sum(c.input_tokens for c in per_call),
        sum(c.output_tokens for c in per_call),
    )
