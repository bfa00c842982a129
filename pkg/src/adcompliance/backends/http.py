"""Live providers: OpenAI-style chat completions and Gemini-style generateContent.

Credentials come from OPENAI_API_KEY and GEMINI_API_KEY (GOOGLE_API_KEY is
accepted as a fallback for Gemini). Images travel base64-encoded inside the
JSON body for both styles.
"""

from __future__ import annotations

import base64
import os
import time

import httpx

from ..schema import TokenUsage
from .base import AuthError, BackendError, EmptyResponse, ModelSpec, PromptBundle, RateLimited, RawResponse, TransportError

OPENAI_URL = "https://api.openai.com/v1"
GEMINI_URL = "https://generativelanguage.googleapis.com/v1beta"

# Output-token ceilings used when ModelSpec.max_output_tokens is None.
PROVIDER_MAX_OUTPUT = {
    "gpt-4.1": 32768,
    "gpt-4.1-mini": 32768,
    "gpt-4o": 16384,
    "gpt-4o-mini": 16384,
    "gemini-2.5-pro": 65536,
    "gemini-2.5-flash": 65536,
    "gemini-2.0-flash": 8192,
    "gemini-1.5-pro": 8192,
}


def max_tokens_for(spec: ModelSpec) -> int | None:
    if spec.max_output_tokens is not None:
        return spec.max_output_tokens
    return PROVIDER_MAX_OUTPUT.get(spec.remote_name)


def _raise_for_status(resp: httpx.Response) -> None:
    code = resp.status_code
    if code < 400:
        return
    detail = resp.text[:300]
    if code in (401, 403):
        raise AuthError(f"HTTP {code}: {detail}")
    if code == 429:
        retry_after = resp.headers.get("retry-after")
        try:
            wait = float(retry_after) if retry_after else None
        except ValueError:
            wait = None
        raise RateLimited(f"HTTP 429: {detail}", retry_after=wait)
    if code >= 500:
        raise TransportError(f"HTTP {code}: {detail}")
    raise BackendError(f"HTTP {code}: {detail}")


class _HttpBackend:
    env_vars: tuple[str, ...] = ()
    default_url = ""

    def __init__(self, base_url: str | None = None, api_key: str | None = None, timeout: float = 300.0,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = (base_url or self.default_url).rstrip("/")
        self._api_key = api_key
        self.client = httpx.Client(timeout=timeout, transport=transport)

    @property
    def api_key(self) -> str:
        if self._api_key:
            return self._api_key
        for name in self.env_vars:
            if os.environ.get(name):
                return os.environ[name]
        raise AuthError(f"no credentials: set {' or '.join(self.env_vars)}")

    def _post(self, url: str, headers: dict, body: dict) -> tuple[dict, float]:
        start = time.perf_counter()
        try:
            resp = self.client.post(url, headers=headers, json=body)
        except httpx.TransportError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from None
        latency = time.perf_counter() - start
        _raise_for_status(resp)
        try:
            return resp.json(), latency
        except ValueError:
            raise TransportError("response body is not JSON") from None


class OpenAIBackend(_HttpBackend):
    env_vars = ("OPENAI_API_KEY",)
    default_url = OPENAI_URL

    def request_body(self, spec: ModelSpec, prompt: PromptBundle) -> dict:
        content: list[dict] = [{"type": "text", "text": prompt.user}]
        if prompt.image:
            data = base64.b64encode(prompt.image).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": f"data:{prompt.image_mime};base64,{data}"}})
        body = {
            "model": spec.remote_name,
            "messages": [{"role": "system", "content": prompt.system}, {"role": "user", "content": content}],
            "temperature": spec.temperature,
            "seed": spec.seed,
        }
        limit = max_tokens_for(spec)
        if limit:
            body["max_tokens"] = limit
        return body

    def call(self, spec: ModelSpec, prompt: PromptBundle) -> RawResponse:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        payload, latency = self._post(f"{self.base_url}/chat/completions", headers, self.request_body(spec, prompt))
        choices = payload.get("choices") or []
        text = (choices[0].get("message", {}).get("content") if choices else None) or ""
        if not text.strip():
            raise EmptyResponse(f"{spec.model_id}: empty completion")
        usage = payload.get("usage") or {}
        return RawResponse(text, TokenUsage(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)), latency)


class GeminiBackend(_HttpBackend):
    env_vars = ("GEMINI_API_KEY", "GOOGLE_API_KEY")
    default_url = GEMINI_URL

    def request_body(self, spec: ModelSpec, prompt: PromptBundle) -> dict:
        parts: list[dict] = [{"text": prompt.user}]
        if prompt.image:
            parts.append({"inline_data": {"mime_type": prompt.image_mime,
                                          "data": base64.b64encode(prompt.image).decode("ascii")}})
        config = {"temperature": spec.temperature, "seed": spec.seed}
        limit = max_tokens_for(spec)
        if limit:
            config["maxOutputTokens"] = limit
        return {
            "systemInstruction": {"parts": [{"text": prompt.system}]},
            "contents": [{"role": "user", "parts": parts}],
            "generationConfig": config,
        }

    def call(self, spec: ModelSpec, prompt: PromptBundle) -> RawResponse:
        headers = {"x-goog-api-key": self.api_key}
        url = f"{self.base_url}/models/{spec.remote_name}:generateContent"
        payload, latency = self._post(url, headers, self.request_body(spec, prompt))
        candidates = payload.get("candidates") or []
        parts = candidates[0].get("content", {}).get("parts", []) if candidates else []
        # thought parts are reasoning traces, not the answer
        text = "".join(p.get("text", "") for p in parts if not p.get("thought"))
        if not text.strip():
            raise EmptyResponse(f"{spec.model_id}: empty candidate")
        meta = payload.get("usageMetadata") or {}
        # thinking tokens bill at the output rate
        output = meta.get("candidatesTokenCount", 0) + meta.get("thoughtsTokenCount", 0)
        return RawResponse(text, TokenUsage(meta.get("promptTokenCount", 0), output), latency)
