import base64
import json
import random
import statistics
import threading
import time

import httpx
import pytest

from adcompliance.backends import (MODELS, AuthError, EmptyResponse, Exhausted, FixtureMissing, GeminiBackend,
                                   MockBackend, ModelSpec, OpenAIBackend, PromptBundle, Provider, RateLimited,
                                   RetryPolicy, TransportError, backoff_delay, invoke, lookup, model_spec_from_dict,
                                   retrying_invoke)
from adcompliance.backends.base import limiter_for
from adcompliance.schema import MissingAttribute, TokenUsage

PROMPT = PromptBundle("system text", "user text", b"\x89PNG fake", "image/png")
MOCK = ModelSpec("mock-child", Provider.MOCK, 1.0, 2.0)
NO_WAIT = RetryPolicy(max_retries=3, base_backoff=0.0)


def _mock(**entry):
    entry.setdefault("text", "hello")
    return MockBackend({PROMPT.digest(): entry})


def test_registry_prices():
    assert (MODELS["gpt-4.1"].input_rate, MODELS["gpt-4.1"].output_rate) == (2.0, 8.0)
    assert (MODELS["gemini-2.0-flash"].input_rate, MODELS["gemini-2.0-flash"].output_rate) == (0.15, 3.0)
    assert MODELS["gemini-2.5-pro"].reasoning_enabled
    assert all(s.temperature == 0.0001 for s in MODELS.values())
    with pytest.raises(KeyError):
        lookup("no-such-model")


def test_spec_from_dict_keeps_registry_prices_for_mocks():
    spec = model_spec_from_dict({"model_id": "gpt-4.1", "provider": "mock", "fixtures": "x.json"})
    assert spec.provider is Provider.MOCK and spec.input_rate == 2.0 and spec.fixtures == "x.json"
    with pytest.raises(ValueError):
        model_spec_from_dict({"model_id": "custom", "provider": "mock"})


def test_spec_invariants():
    with pytest.raises(ValueError):
        ModelSpec("m", Provider.MOCK, -1.0, 0.0)
    with pytest.raises(ValueError):
        ModelSpec("m", Provider.MOCK, 0.0, 0.0, temperature=-0.1)


def test_digest_covers_every_part():
    base = PROMPT.digest()
    assert PromptBundle("system text", "user text", b"\x89PNG fake").digest() == base
    assert PromptBundle("system text!", "user text", b"\x89PNG fake").digest() != base
    assert PromptBundle("system text", "user text!", b"\x89PNG fake").digest() != base
    assert PromptBundle("system text", "user text", b"other").digest() != base
    assert PromptBundle("system textuser", " text", b"\x89PNG fake").digest() != base


def test_mock_is_referentially_transparent():
    backend = _mock(text="garbage {not json", input_tokens=10, output_tokens=3, latency=0.25)
    a, b = invoke(MOCK, PROMPT, backend), invoke(MOCK, PROMPT, backend)
    assert a == b
    assert a.text == "garbage {not json" and a.usage == TokenUsage(10, 3) and a.latency == 0.25


def test_mock_fixture_miss():
    with pytest.raises(FixtureMissing):
        invoke(MOCK, PromptBundle("s", "u"), _mock())


def test_healthy_mock_single_attempt():
    raw = retrying_invoke(MOCK, PROMPT, NO_WAIT, backend=_mock())
    assert raw.attempt_count == 1


def test_fail_twice_then_succeed():
    backend = _mock(scripted_failures=2, input_tokens=5, output_tokens=1)
    raw = retrying_invoke(MOCK, PROMPT, NO_WAIT, backend=backend)
    assert raw.attempt_count == 3
    assert backend.total_calls == 3


def test_zero_retries_exhausts():
    with pytest.raises(Exhausted) as err:
        retrying_invoke(MOCK, PROMPT, RetryPolicy(max_retries=0), backend=_mock(scripted_failures=1))
    assert err.value.attempt_count == 1
    assert isinstance(err.value.last_error, TransportError)


def test_auth_error_is_fatal():
    backend = _mock(scripted_failures=["auth"])
    with pytest.raises(AuthError):
        retrying_invoke(MOCK, PROMPT, NO_WAIT, backend=backend)
    assert backend.total_calls == 1


def test_mixed_failures_then_success():
    backend = _mock(scripted_failures=["empty", "rate_limited", "transport"])
    assert retrying_invoke(MOCK, PROMPT, NO_WAIT, backend=backend).attempt_count == 4


def test_validation_failures_are_retried_and_usage_summed():
    backend = _mock(preamble=["not json", '{"a": 1}'], text='{"b": 2}', input_tokens=100, output_tokens=10)

    def validate(text):
        obj = json.loads(text) if text.startswith("{") else None
        if obj is None:
            raise MissingAttribute("b")
        if "b" not in obj:
            raise MissingAttribute("b")
        return obj

    raw = retrying_invoke(MOCK, PROMPT, NO_WAIT, backend=backend, validate=validate)
    assert raw.parsed == {"b": 2}
    assert raw.attempt_count == 3
    assert raw.usage == TokenUsage(300, 30)


def test_validation_exhaustion_keeps_usage():
    backend = _mock(text="nope", input_tokens=7, output_tokens=1)
    with pytest.raises(Exhausted) as err:
        retrying_invoke(MOCK, PROMPT, RetryPolicy(max_retries=2, base_backoff=0.0), backend=backend,
                        validate=lambda t: (_ for _ in ()).throw(MissingAttribute("x")))
    assert err.value.attempt_count == 3
    assert err.value.usage == TokenUsage(21, 3)


def test_backoff_full_jitter_bounds_and_growth():
    policy = RetryPolicy(base_backoff=1.0, max_backoff=30.0)
    rng = random.Random(0)
    means = []
    for attempt in range(1, 8):
        cap = min(30.0, 2 ** (attempt - 1))
        draws = [backoff_delay(policy, attempt, rng) for _ in range(4000)]
        assert 0.0 <= min(draws) and max(draws) <= cap
        means.append(statistics.fmean(draws))
    assert all(b >= a * 0.9 for a, b in zip(means, means[1:]))
    assert means[-1] == pytest.approx(15.0, rel=0.05)


def test_sleeps_follow_policy_and_honour_retry_after():
    slept = []
    backend = _mock(scripted_failures=["rate_limited", "transport"])
    retrying_invoke(MOCK, PROMPT, RetryPolicy(max_retries=3, base_backoff=0.5), backend=backend, sleep=slept.append)
    assert len(slept) == 2 and slept[0] <= 0.5 and slept[1] <= 1.0

    class Waiting(MockBackend):
        def call(self, spec, prompt):
            if self.total_calls == 0:
                self.calls["x"] += 1
                raise RateLimited("slow down", retry_after=7.0)
            return super().call(spec, prompt)

    slept.clear()
    retrying_invoke(MOCK, PROMPT, RetryPolicy(base_backoff=0.1), backend=Waiting({PROMPT.digest(): {"text": "x"}}),
                    sleep=slept.append)
    assert slept == [7.0]


def test_retry_jitter_is_seeded():
    a, b = [], []
    retrying_invoke(MOCK, PROMPT, RetryPolicy(seed=3), backend=_mock(scripted_failures=2), sleep=a.append)
    retrying_invoke(MOCK, PROMPT, RetryPolicy(seed=3), backend=_mock(scripted_failures=2), sleep=b.append)
    assert a == b and len(a) == 2


def test_concurrency_limiter_caps_in_flight():
    spec = ModelSpec("limited-mock", Provider.MOCK, 0, 0, max_concurrency=2)
    state = {"now": 0, "peak": 0}
    lock = threading.Lock()

    class Slow:
        def call(self, spec, prompt):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.02)
            with lock:
                state["now"] -= 1
            return MockBackend({PROMPT.digest(): {"text": "ok"}}).call(spec, prompt)

    threads = [threading.Thread(target=invoke, args=(spec, PROMPT, Slow())) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] == 2
    assert limiter_for(spec) is limiter_for(spec)


# --- HTTP wire formats --------------------------------------------------------------------------------------------


def _client(backend_cls, handler, **kw):
    return backend_cls(api_key="k", transport=httpx.MockTransport(handler), **kw)


def test_openai_wire_format():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "answer"}}],
                                         "usage": {"prompt_tokens": 1500, "completion_tokens": 90}})

    raw = _client(OpenAIBackend, handler).call(MODELS["gpt-4.1"], PROMPT)
    assert raw.text == "answer" and raw.usage == TokenUsage(1500, 90) and raw.latency >= 0
    assert seen["url"].endswith("/chat/completions") and seen["auth"] == "Bearer k"
    body = seen["body"]
    assert body["model"] == "gpt-4.1" and body["temperature"] == 0.0001 and body["seed"] == 0
    assert body["max_tokens"] == 32768
    assert body["messages"][0] == {"role": "system", "content": "system text"}
    image = body["messages"][1]["content"][1]["image_url"]["url"]
    assert base64.b64decode(image.split(",", 1)[1]) == PROMPT.image


def test_gemini_wire_format_and_thinking_tokens():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["key"] = request.headers["x-goog-api-key"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "candidates": [{"content": {"parts": [{"text": "thinking...", "thought": True}, {"text": "final"}]}}],
            "usageMetadata": {"promptTokenCount": 1000, "candidatesTokenCount": 50, "thoughtsTokenCount": 200}})

    raw = _client(GeminiBackend, handler).call(MODELS["gemini-2.5-pro"], PROMPT)
    assert raw.text == "final" and raw.usage == TokenUsage(1000, 250)
    assert seen["url"].endswith("/models/gemini-2.5-pro:generateContent") and seen["key"] == "k"
    body = seen["body"]
    assert body["generationConfig"] == {"temperature": 0.0001, "seed": 0, "maxOutputTokens": 65536}
    assert body["systemInstruction"]["parts"][0]["text"] == "system text"
    assert base64.b64decode(body["contents"][0]["parts"][1]["inline_data"]["data"]) == PROMPT.image


@pytest.mark.parametrize("status, exc", [(401, AuthError), (403, AuthError), (429, RateLimited),
                                         (500, TransportError), (503, TransportError)])
def test_status_mapping(status, exc):
    backend = _client(OpenAIBackend, lambda r: httpx.Response(status, text="nope", headers={"retry-after": "2"}))
    with pytest.raises(exc) as err:
        backend.call(MODELS["gpt-4.1"], PROMPT)
    if exc is RateLimited:
        assert err.value.retry_after == 2.0


def test_empty_completion():
    backend = _client(OpenAIBackend, lambda r: httpx.Response(200, json={"choices": [{"message": {"content": ""}}]}))
    with pytest.raises(EmptyResponse):
        backend.call(MODELS["gpt-4.1"], PROMPT)


def test_missing_credentials(monkeypatch):
    for name in ("OPENAI_API_KEY", "GEMINI_API_KEY", "GOOGLE_API_KEY"):
        monkeypatch.delenv(name, raising=False)
    with pytest.raises(AuthError):
        OpenAIBackend(transport=httpx.MockTransport(lambda r: httpx.Response(200))).call(MODELS["gpt-4.1"], PROMPT)
    monkeypatch.setenv("GOOGLE_API_KEY", "g")
    assert GeminiBackend().api_key == "g"


def test_transport_faults_exhaust_after_limit_plus_one():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("unreachable", request=request)

    policy = RetryPolicy(max_retries=2, base_backoff=0.0)
    with pytest.raises(Exhausted) as err:
        retrying_invoke(MODELS["gpt-4.1"], PROMPT, policy, backend=_client(OpenAIBackend, handler))
    assert err.value.attempt_count == 3 and len(calls) == 3
    assert isinstance(err.value.last_error, TransportError)


def test_unreachable_host_real_socket():
    # port 9 on loopback refuses connections; no external traffic
    backend = OpenAIBackend(base_url="http://127.0.0.1:9", api_key="k", timeout=2.0)
    with pytest.raises(Exhausted) as err:
        retrying_invoke(MODELS["gpt-4.1"], PROMPT, RetryPolicy(max_retries=1, base_backoff=0.0), backend=backend)
    assert err.value.attempt_count == 2
