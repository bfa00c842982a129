"""JSON run configuration. Relative paths resolve against the config file's directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .augment import AugmentParams, default_lexicon
from .backends import ModelSpec, Provider, RetryPolicy, model_spec_from_dict
from .judge import DEFAULT_JUDGEABLE, DEFAULT_OCR_THRESHOLD
from .metrics import POLICY_PROFILES, SelectionPolicy, policy_profile
from .schema import AttributeSpec, BrandContext, default_attribute_suite, load_brands, load_suite


class ConfigError(Exception):
    pass


_TOP_KEYS = {"models", "child_models", "mother_model", "suite", "brands", "dataset", "annotations", "retry",
             "parallelism", "judgeable", "ocr_threshold", "selection", "augmentation", "archive"}
_MODEL_KEYS = {f.name for f in fields(ModelSpec)}
_RETRY_KEYS = {f.name for f in fields(RetryPolicy)}
_SELECTION_KEYS = {"profile", "current_model_id", "min_accuracy_floor", "accuracy_weight", "cost_weight",
                   "latency_weight"}
_AUGMENT_KEYS = {"seed", "mask", "masks", "lexicon", "params"}
_PARAM_KEYS = {f.name for f in fields(AugmentParams)}

Rect = tuple[float, float, float, float]


@dataclass
class AugmentConfig:
    seed: int = 0
    mask: Rect | None = None
    masks: dict[str, Rect] = field(default_factory=dict)
    lexicon: list[str] = field(default_factory=default_lexicon)
    params: AugmentParams = field(default_factory=AugmentParams)


@dataclass
class Config:
    path: Path
    models: dict[str, ModelSpec]
    child_models: list[str]
    mother_model: str | None
    suite: list[AttributeSpec]
    brands: dict[str, BrandContext]
    dataset: Path | None
    annotations: Path | None
    retry: RetryPolicy
    parallelism: int
    judgeable: list[str]
    ocr_threshold: float
    selection: SelectionPolicy | None
    augmentation: AugmentConfig
    archive: Path

    def model(self, model_id: str) -> ModelSpec:
        try:
            return self.models[model_id]
        except KeyError:
            raise ConfigError(f"model {model_id!r} is not configured; configured: {sorted(self.models)}") from None


def _reject_unknown(section: str, d: Mapping, allowed: set[str]) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {extra}")


def _existing(base: Path, value: Any, what: str) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"{what}: expected a path string, got {value!r}")
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ConfigError(f"{what}: {p} does not exist")
    return p


def _rect(value: Any, what: str) -> Rect:
    if not (isinstance(value, (list, tuple)) and len(value) == 4 and all(isinstance(v, (int, float)) for v in value)):
        raise ConfigError(f"{what}: expected [x0, y0, x1, y1] in normalized coordinates")
    x0, y0, x1, y1 = (float(v) for v in value)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ConfigError(f"{what}: rectangle {value} is not a normalized box")
    return (x0, y0, x1, y1)


def _augmentation(base: Path, d: Mapping) -> AugmentConfig:
    _reject_unknown("augmentation", d, _AUGMENT_KEYS)
    params = d.get("params") or {}
    _reject_unknown("augmentation.params", params, _PARAM_KEYS)
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    lexicon = default_lexicon()
    if d.get("lexicon"):
        path = _existing(base, d["lexicon"], "augmentation.lexicon")
        lexicon = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()
                   if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        return AugmentConfig(
            seed=int(d.get("seed", 0)),
            mask=_rect(d["mask"], "augmentation.mask") if d.get("mask") is not None else None,
            masks={k: _rect(v, f"augmentation.masks[{k}]") for k, v in (d.get("masks") or {}).items()},
            lexicon=lexicon,
            params=AugmentParams(**params),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"augmentation: {exc}") from None


def _selection(d: Mapping | None, default_current: str | None) -> SelectionPolicy | None:
    if d is None:
        return None
    _reject_unknown("selection", d, _SELECTION_KEYS)
    d = dict(d)
    profile = d.pop("profile", "cost_sensitive")
    if profile not in POLICY_PROFILES:
        raise ConfigError(f"selection.profile: unknown profile {profile!r}; known: {sorted(POLICY_PROFILES)}")
    current = d.pop("current_model_id", default_current)
    if not current:
        raise ConfigError("selection.current_model_id is required")
    try:
        return policy_profile(profile, current, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"selection: {exc}") from None


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown("config", raw, _TOP_KEYS)
    base = path.resolve().parent

    models: dict[str, ModelSpec] = {}
    for i, m in enumerate(raw.get("models") or []):
        if not isinstance(m, dict) or "model_id" not in m:
            raise ConfigError(f"models[{i}]: expected an object with model_id")
        _reject_unknown(f"models[{i}]", m, _MODEL_KEYS)
        m = dict(m)
        if m.get("fixtures"):
            m["fixtures"] = str(_existing(base, m["fixtures"], f"models[{i}].fixtures"))
        try:
            spec = model_spec_from_dict(m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"models[{i}]: {exc}") from None
        if spec.provider is Provider.MOCK and not spec.fixtures:
            raise ConfigError(f"models[{i}]: mock model {spec.model_id!r} needs a fixtures file")
        if spec.model_id in models:
            raise ConfigError(f"models[{i}]: duplicate model id {spec.model_id!r}")
        models[spec.model_id] = spec

    child_models = list(raw.get("child_models") or [])
    mother = raw.get("mother_model")
    for mid in child_models + ([mother] if mother else []):
        if mid not in models:
            raise ConfigError(f"model {mid!r} is referenced but not listed under models")

    try:
        suite = load_suite(_existing(base, raw["suite"], "suite")) if raw.get("suite") else default_attribute_suite()
        brands = load_brands(_existing(base, raw["brands"], "brands")) if raw.get("brands") else {}
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None

    retry = raw.get("retry") or {}
    _reject_unknown("retry", retry, _RETRY_KEYS)
    try:
        retry = RetryPolicy(**retry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"retry: {exc}") from None

    parallelism = raw.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigError("parallelism must be a positive integer")
    judgeable = list(raw.get("judgeable") or DEFAULT_JUDGEABLE)
    names = {a.name for a in suite}
    unknown = [n for n in judgeable if n not in names]
    if unknown:
        raise ConfigError(f"judgeable: not in the suite: {unknown}")
    threshold = float(raw.get("ocr_threshold", DEFAULT_OCR_THRESHOLD))
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("ocr_threshold must lie in [0, 1]")

    archive = raw.get("archive", "archive")
    archive = Path(archive) if Path(archive).is_absolute() else base / archive
    return Config(
        path=path,
        models=models,
        child_models=child_models,
        mother_model=mother,
        suite=suite,
        brands=brands,
        dataset=_existing(base, raw["dataset"], "dataset") if raw.get("dataset") else None,
        annotations=_existing(base, raw["annotations"], "annotations") if raw.get("annotations") else None,
        retry=retry,
        parallelism=parallelism,
        judgeable=judgeable,
        ocr_threshold=threshold,
        selection=_selection(raw.get("selection"), child_models[0] if child_models else None),
        augmentation=_augmentation(base, raw.get("augmentation") or {}),
        archive=archive,
    )
