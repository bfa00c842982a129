from __future__ import annotations

import hashlib
import logging
import random
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Protocol

from ..schema import SchemaError, TokenUsage

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0001


class Provider(str, Enum):
    OPENAI = "openai"
    GEMINI = "gemini"
    MOCK = "mock"


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    provider: Provider
    input_rate: float  # USD per 1M input tokens
    output_rate: float  # USD per 1M output tokens
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    max_output_tokens: int | None = None  # None: provider maximum
    reasoning_enabled: bool = False
    api_model: str | None = None
    base_url: str | None = None
    fixtures: str | None = None
    max_concurrency: int = 4

    def __post_init__(self):
        if self.input_rate < 0 or self.output_rate < 0:
            raise ValueError(f"{self.model_id}: rates must be non-negative")
        if self.temperature < 0:
            raise ValueError(f"{self.model_id}: temperature must be non-negative")
        if self.max_concurrency < 1:
            raise ValueError(f"{self.model_id}: max_concurrency must be >= 1")

    @property
    def remote_name(self) -> str:
        return self.api_model or self.model_id


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    image: bytes | None = None
    image_mime: str = "image/png"

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.system.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.user.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.image or b"")
        return h.hexdigest()


@dataclass(frozen=True)
class RawResponse:
    text: str
    usage: TokenUsage = field(default_factory=TokenUsage)
    latency: float = 0.0
    attempt_count: int = 1
    parsed: Any = field(default=None, compare=False)

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


class BackendError(Exception):
    retryable = False


class TransportError(BackendError):
    retryable = True


class EmptyResponse(BackendError):
    retryable = True


class RateLimited(BackendError):
    retryable = True

    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class AuthError(BackendError):
    pass


class FixtureMissing(BackendError):
    pass


class Exhausted(Exception):
    def __init__(self, last_error: BaseException, attempt_count: int, usage: TokenUsage | None = None):
        super().__init__(f"gave up after {attempt_count} attempt(s): {last_error}")
        self.last_error = last_error
        self.attempt_count = attempt_count
        self.usage = usage or TokenUsage()


class Backend(Protocol):
    def call(self, spec: ModelSpec, prompt: PromptBundle) -> RawResponse: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    base_backoff: float = 1.0
    max_backoff: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.base_backoff < 0 or self.max_backoff < 0:
            raise ValueError("backoff must be non-negative")


def backoff_delay(policy: RetryPolicy, attempt: int, rng: random.Random) -> float:
    """Full-jitter exponential backoff after failed attempt number ``attempt`` (1-based)."""
    cap = min(policy.max_backoff, policy.base_backoff * (2 ** (attempt - 1)))
    return rng.uniform(0.0, cap)


_limiters: dict[str, threading.BoundedSemaphore] = {}
_limiters_lock = threading.Lock()


def limiter_for(spec: ModelSpec) -> threading.BoundedSemaphore:
    with _limiters_lock:
        sem = _limiters.get(spec.model_id)
        if sem is None:
            sem = _limiters[spec.model_id] = threading.BoundedSemaphore(spec.max_concurrency)
        return sem


_backends: dict[tuple, Backend] = {}
_backends_lock = threading.Lock()


def backend_for(spec: ModelSpec) -> Backend:
    from .http import GeminiBackend, OpenAIBackend
    from .mock import MockBackend

    key = (spec.provider, spec.fixtures, spec.base_url)
    with _backends_lock:
        backend = _backends.get(key)
        if backend is None:
            if spec.provider is Provider.MOCK:
                if not spec.fixtures:
                    raise FixtureMissing(f"{spec.model_id}: mock model has no fixture file")
                backend = MockBackend.from_file(spec.fixtures)
            elif spec.provider is Provider.OPENAI:
                backend = OpenAIBackend(base_url=spec.base_url)
            else:
                backend = GeminiBackend(base_url=spec.base_url)
            _backends[key] = backend
        return backend


def invoke(spec: ModelSpec, prompt: PromptBundle, backend: Backend | None = None) -> RawResponse:
    backend = backend or backend_for(spec)
    with limiter_for(spec):
        return backend.call(spec, prompt)


def retrying_invoke(spec: ModelSpec, prompt: PromptBundle, policy: RetryPolicy = RetryPolicy(), *,
                    validate: Callable[[str], Any] | None = None, backend: Backend | None = None,
                    sleep: Callable[[float], None] = time.sleep) -> RawResponse:
    """Invoke with retries on transport faults and on malformed output.

    ``validate`` parses the response text; a SchemaError from it counts as a
    failed attempt. Usage and latency of every answered attempt are summed, so
    cost accounting includes the retries.
    """
    rng = random.Random(f"{policy.seed}:{spec.model_id}:{prompt.digest()}")
    usage = TokenUsage()
    latency = 0.0
    last: BaseException | None = None
    attempts = policy.max_retries + 1
    for attempt in range(1, attempts + 1):
        try:
            raw = invoke(spec, prompt, backend)
            usage = usage + raw.usage
            latency += raw.latency
            parsed = validate(raw.text) if validate else None
            return replace(raw, usage=usage, latency=latency, attempt_count=attempt, parsed=parsed)
        except BackendError as exc:
            if not exc.retryable:
                raise
            last = exc
        except SchemaError as exc:
            last = exc
        log.debug("%s attempt %d/%d failed: %s", spec.model_id, attempt, attempts, last)
        if attempt < attempts:
            delay = backoff_delay(policy, attempt, rng)
            if isinstance(last, RateLimited) and last.retry_after:
                delay = max(delay, last.retry_after)
            sleep(delay)
    raise Exhausted(last, attempts, usage)
