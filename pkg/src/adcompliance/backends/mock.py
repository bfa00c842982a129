"""Fixture-driven offline backend.

Fixture files are JSON maps ``digest -> entry`` where ``digest`` is
``PromptBundle.digest()`` and an entry holds::

    {"text": "...", "input_tokens": 1500, "output_tokens": 90,
     "latency": 0.0, "scripted_failures": 0, "preamble": []}

``scripted_failures`` is a count of transport failures (or a list of failure
names: transport, empty, rate_limited, auth) raised on the first calls;
``preamble`` lists texts returned on the calls after those, before ``text``.
Both exist to script retry behaviour; without them the backend is a pure
lookup.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from pathlib import Path
from typing import Mapping

from ..schema import TokenUsage
from .base import (AuthError, EmptyResponse, FixtureMissing, ModelSpec, PromptBundle, RateLimited, RawResponse,
                   TransportError)

_FAILURES = {
    "transport": lambda: TransportError("scripted transport failure"),
    "empty": lambda: EmptyResponse("scripted empty response"),
    "rate_limited": lambda: RateLimited("scripted rate limit", retry_after=None),
    "auth": lambda: AuthError("scripted auth failure"),
}


class MockBackend:
    def __init__(self, table: Mapping[str, Mapping]):
        self.table = dict(table)
        self.calls: Counter[str] = Counter()
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    def call(self, spec: ModelSpec, prompt: PromptBundle) -> RawResponse:
        digest = prompt.digest()
        entry = self.table.get(digest)
        with self._lock:
            self.calls[digest] += 1
            n = self.calls[digest]
        if entry is None:
            raise FixtureMissing(f"{spec.model_id}: no fixture for prompt digest {digest[:16]}")
        failures = entry.get("scripted_failures", 0)
        if isinstance(failures, int):
            failures = ["transport"] * failures
        if n <= len(failures):
            raise _FAILURES[failures[n - 1]]()
        preamble = entry.get("preamble", [])
        k = n - len(failures) - 1
        text = preamble[k] if k < len(preamble) else entry.get("text", "")
        if not text:
            raise EmptyResponse(f"{spec.model_id}: empty fixture text")
        usage = TokenUsage(int(entry.get("input_tokens", 0)), int(entry.get("output_tokens", 0)))
        return RawResponse(text=text, usage=usage, latency=float(entry.get("latency", 0.0)))
