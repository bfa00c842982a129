"""Known child/mother models with list prices (USD per 1M tokens)."""

from __future__ import annotations

from dataclasses import replace

from .base import ModelSpec, Provider

MODELS: dict[str, ModelSpec] = {
    spec.model_id: spec
    for spec in [
        ModelSpec("gpt-4.1", Provider.OPENAI, 2.00, 8.00),
        ModelSpec("gpt-4.1-mini", Provider.OPENAI, 0.40, 1.60),
        ModelSpec("gpt-4o", Provider.OPENAI, 2.50, 10.00),
        ModelSpec("gpt-4o-mini", Provider.OPENAI, 0.15, 0.60),
        ModelSpec("gemini-2.5-pro", Provider.GEMINI, 1.25, 10.00, reasoning_enabled=True),
        ModelSpec("gemini-2.5-flash", Provider.GEMINI, 0.30, 2.50, reasoning_enabled=True),
        ModelSpec("gemini-2.0-flash", Provider.GEMINI, 0.15, 3.00),
        ModelSpec("gemini-1.5-pro", Provider.GEMINI, 1.25, 5.00),
    ]
}

DISPLAY_NAMES = {
    "gpt-4.1": "GPT-4.1",
    "gpt-4.1-mini": "GPT-4.1 Mini",
    "gpt-4o": "GPT-4o",
    "gpt-4o-mini": "GPT-4o Mini",
    "gemini-2.5-pro": "Gemini 2.5 Pro",
    "gemini-2.5-flash": "Gemini 2.5 Flash",
    "gemini-2.0-flash": "Gemini 2.0 Flash",
    "gemini-1.5-pro": "Gemini 1.5 Pro",
}


def lookup(model_id: str) -> ModelSpec:
    try:
        return MODELS[model_id]
    except KeyError:
        raise KeyError(f"unknown model {model_id!r}; known: {', '.join(MODELS)}") from None


def model_spec_from_dict(d: dict) -> ModelSpec:
    """Build a spec from config, starting from the registry entry when the id is known.

    ``{"model_id": "gemini-2.0-flash", "provider": "mock", "fixtures": "..."}``
    gives an offline stand-in that keeps the real model's prices.
    """
    d = dict(d)
    model_id = d.pop("model_id")
    if "provider" in d:
        d["provider"] = Provider(d["provider"])
    if model_id in MODELS:
        return replace(MODELS[model_id], **d)
    missing = {"provider", "input_rate", "output_rate"} - set(d)
    if missing:
        raise ValueError(f"model {model_id!r} is not in the registry and lacks {sorted(missing)}")
    return ModelSpec(model_id=model_id, **d)
