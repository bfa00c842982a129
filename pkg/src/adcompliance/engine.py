"""Child-model evaluation: prompt construction, one-pass report generation, batch fan-out."""

from __future__ import annotations

import hashlib
import logging
import mimetypes
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .backends import Backend, Exhausted, BackendError, ModelSpec, PromptBundle, RetryPolicy, retrying_invoke
from .schema import (AttributeKind, AttributeSpec, BrandContext, ComplianceReport, TokenUsage, parse_results)

log = logging.getLogger(__name__)

PROMPT_VERSION = "child-v1"

SYSTEM_PROMPT = (
    "Reason carefully about every answer before you commit to it.\n"
    "VERY IMPORTANT: Output result should be in JSON format, exactly as described in the user prompt, "
    "with no other top-level keys."
)

_VALUE_HINTS = {
    AttributeKind.BOOLEAN: "true or false",
    AttributeKind.POSITION_SECTOR: 'one of "Center", "Top-Left", "Top-Right", "Bottom-Left", "Bottom-Right", or null',
    AttributeKind.TEXT: "a string (empty if none)",
    AttributeKind.TEXT_LIST: "a list of strings (empty if none)",
    AttributeKind.COLOR_LIST: "a list of at most 3 color names, most dominant first",
    AttributeKind.SUGGESTION: "suggested rewrite or fix as a string (empty if nothing to change)",
}

Clock = Callable[[], str]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def fixed_clock(stamp: str = "1970-01-01T00:00:00+00:00") -> Clock:
    return lambda: stamp


class ImageLoadError(Exception):
    pass


@dataclass(frozen=True)
class Creative:
    creative_id: str
    image_path: str
    caption: str = ""
    brand_id: str = ""
    variant_of: str | None = None
    augmentation: str | None = None

    def to_dict(self) -> dict:
        d = {"creative_id": self.creative_id, "image_path": self.image_path, "caption": self.caption,
             "brand_id": self.brand_id}
        if self.variant_of is not None:
            d["variant_of"] = self.variant_of
        if self.augmentation is not None:
            d["augmentation"] = self.augmentation
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Creative":
        return cls(str(d["creative_id"]), str(d["image_path"]), d.get("caption") or "", d.get("brand_id") or "",
                   d.get("variant_of"), d.get("augmentation"))

    def load_image(self) -> tuple[bytes, str]:
        path = Path(self.image_path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ImageLoadError(f"{self.creative_id}: cannot read {path}: {exc.strerror}") from None
        mime = mimetypes.guess_type(path.name)[0] or "image/png"
        return data, mime


@dataclass(frozen=True)
class OutcomeError:
    error_type: str
    message: str
    attempt_count: int = 0
    usage: TokenUsage = field(default_factory=TokenUsage)


@dataclass(frozen=True)
class Outcome:
    creative_id: str
    model_id: str
    report: ComplianceReport | None = None
    error: OutcomeError | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass
class EvaluationRun:
    run_id: str
    dataset_ref: str
    model_ids: list[str]
    suite: list[AttributeSpec]
    creatives: list[Creative]
    outcomes: dict[tuple[str, str], Outcome]
    started: str = ""
    finished: str = ""
    prompt_version: str = PROMPT_VERSION
    prompt_hash: str = ""

    def reports(self, model_id: str | None = None) -> list[ComplianceReport]:
        return [o.report for o in self.outcomes.values()
                if o.report is not None and (model_id is None or o.model_id == model_id)]

    def failures(self) -> list[Outcome]:
        return [o for o in self.outcomes.values() if o.error is not None]

    def creative(self, creative_id: str) -> Creative:
        for c in self.creatives:
            if c.creative_id == creative_id:
                return c
        raise KeyError(creative_id)

    def subset(self, creative_ids: Iterable[str]) -> "EvaluationRun":
        keep = set(creative_ids)
        return EvaluationRun(self.run_id, self.dataset_ref, list(self.model_ids), self.suite,
                             [c for c in self.creatives if c.creative_id in keep],
                             {k: v for k, v in self.outcomes.items() if k[0] in keep},
                             self.started, self.finished, self.prompt_version, self.prompt_hash)


def _bullets(title: str, items: Sequence[str]) -> list[str]:
    if not items:
        return []
    return [f"{title}:"] + [f"  - {item}" for item in items]


def build_child_prompt(suite: Sequence[AttributeSpec], brand: BrandContext, caption: str = "",
                       image: bytes | None = None, image_mime: str = "image/png") -> PromptBundle:
    if not suite:
        raise ValueError("attribute suite is empty")
    lines = [
        "You are a brand compliance and content safety expert reviewing an advertisement image before "
        "it is published. Judge it for brand alignment and for public appropriateness, using only the "
        "details given below. Think each check through, then report the outcome.",
        "",
    ]
    brand_lines = (
        _bullets("Brand tone", brand.tone_descriptors)
        + _bullets("Brand core values", brand.core_values)
        + _bullets("Phrases the brand likes to see", brand.positive_phrases)
        + _bullets("Phrases the brand forbids", brand.negative_phrases)
        + _bullets("Compliance rules", brand.compliance_rules)
    )
    if brand_lines:
        lines += [f"Brand context ({brand.brand_id}):"] + brand_lines + [""]
    if caption:
        lines += ["Caption accompanying the image:", caption, ""]
    lines += [
        "Instructions:",
        'Return one JSON object with exactly the keys listed below. Each value is an object '
        '{"reasoning": "<one or two sentences>", "value": <answer>}.',
        "",
    ]
    for spec in suite:
        line = f'"{spec.name}": value is {_VALUE_HINTS[spec.kind]}. {spec.description}.'
        if spec.guidance:
            line += f" {spec.guidance}"
        lines.append(line)
    return PromptBundle(SYSTEM_PROMPT, "\n".join(lines), image, image_mime)


def prompt_hash(suite: Sequence[AttributeSpec]) -> str:
    bundle = build_child_prompt(suite, BrandContext("__template__"))
    text = f"{PROMPT_VERSION}\n{bundle.system}\n{bundle.user}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def evaluate_creative(creative: Creative, spec: ModelSpec, suite: Sequence[AttributeSpec], brand: BrandContext, *,
                      policy: RetryPolicy = RetryPolicy(), backend: Backend | None = None,
                      clock: Clock = utc_now) -> ComplianceReport:
    """One zero-shot pass of ``spec`` over a creative (retries aside)."""
    image, mime = creative.load_image()
    prompt = build_child_prompt(suite, brand, creative.caption, image, mime)
    raw = retrying_invoke(spec, prompt, policy, validate=partial(parse_results, suite=suite), backend=backend)
    return ComplianceReport(creative.creative_id, spec.model_id, raw.parsed, raw.usage, raw.latency, clock(),
                            raw.attempt_count, spec.reasoning_enabled)


def _describe(exc: BaseException) -> OutcomeError:
    if isinstance(exc, Exhausted):
        last = exc.last_error
        return OutcomeError(f"Exhausted:{type(last).__name__}", str(last), exc.attempt_count, exc.usage)
    return OutcomeError(type(exc).__name__, str(exc), 0)


def run_batch(dataset: Sequence[Creative], specs: Sequence[ModelSpec], suite: Sequence[AttributeSpec],
              brands: Mapping[str, BrandContext], parallelism: int = 1, *, run_id: str = "run",
              dataset_ref: str = "", policy: RetryPolicy = RetryPolicy(),
              backends: Mapping[str, Backend] | None = None, clock: Clock = utc_now,
              skip: Iterable[tuple[str, str]] = ()) -> EvaluationRun:
    """Evaluate every (creative, model) pair; failures are recorded, never raised.

    Pairs listed in ``skip`` are left out of the outcome map (used to resume).
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    backends = backends or {}
    skip = set(skip)
    started = clock()

    def brand_for(c: Creative) -> BrandContext:
        brand = brands.get(c.brand_id)
        if brand is None:
            log.warning("creative %s: brand %r has no context; using an empty one", c.creative_id, c.brand_id)
            brand = BrandContext(c.brand_id)
        return brand

    def work(creative: Creative, spec: ModelSpec) -> Outcome:
        try:
            report = evaluate_creative(creative, spec, suite, brand_for(creative), policy=policy,
                                       backend=backends.get(spec.model_id), clock=clock)
            return Outcome(creative.creative_id, spec.model_id, report=report)
        except (Exhausted, BackendError, ImageLoadError) as exc:
            log.warning("creative %s on %s failed: %s", creative.creative_id, spec.model_id, exc)
            return Outcome(creative.creative_id, spec.model_id, error=_describe(exc))

    pairs = [(c, s) for c in dataset for s in specs if (c.creative_id, s.model_id) not in skip]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(lambda p: work(*p), pairs))
    outcomes = {(o.creative_id, o.model_id): o for o in results}
    return EvaluationRun(run_id, dataset_ref, [s.model_id for s in specs], list(suite), list(dataset), outcomes,
                         started, clock(), PROMPT_VERSION, prompt_hash(suite))
