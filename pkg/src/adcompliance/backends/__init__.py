"""Child and mother model invocation: live HTTP providers and an offline mock."""

from ..schema import TokenUsage
from .base import (
    AuthError,
    Backend,
    BackendError,
    DEFAULT_TEMPERATURE,
    EmptyResponse,
    Exhausted,
    FixtureMissing,
    ModelSpec,
    PromptBundle,
    Provider,
    RateLimited,
    RawResponse,
    RetryPolicy,
    TransportError,
    backend_for,
    backoff_delay,
    invoke,
    retrying_invoke,
)
from .http import GeminiBackend, OpenAIBackend
from .mock import MockBackend
from .registry import DISPLAY_NAMES, MODELS, lookup, model_spec_from_dict

__all__ = [
    "AuthError", "Backend", "BackendError", "DEFAULT_TEMPERATURE", "EmptyResponse", "Exhausted",
    "FixtureMissing", "GeminiBackend", "MockBackend", "ModelSpec", "MODELS", "DISPLAY_NAMES", "OpenAIBackend",
    "PromptBundle", "Provider", "RateLimited", "RawResponse", "RetryPolicy", "TokenUsage", "TransportError",
    "backend_for", "backoff_delay", "invoke", "lookup", "model_spec_from_dict", "retrying_invoke",
]
