"""Mother-model judging: one focused prompt per attribute, binary or [0, 1] verdicts."""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .backends import Backend, Exhausted, ModelSpec, PromptBundle, RetryPolicy, retrying_invoke
from .engine import Creative
from .schema import (AttributeKind, AttributeSpec, AttributeValue, ComplianceReport, SchemaError, TokenUsage,
                     Unparseable, default_attribute_suite, extract_json_object)

DEFAULT_OCR_THRESHOLD = 0.8
JUDGE_PROMPT_VERSION = "judge-v1"

# Attributes judged by default: the detection, position, OCR, colour and grammar checks.
DEFAULT_JUDGEABLE = (
    "Primary Color", "Logo Detection", "Logo Position", "Human Presence", "Face Detection",
    "OCR Text", "CTA Position", "Profanity Detection", "Grammar Check",
)


class VerdictForm(str, Enum):
    BINARY = "binary"
    SCALAR = "scalar"


class VerdictParseError(SchemaError):
    pass


class EmptyJudgeSet(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    attribute: str
    form: VerdictForm
    value: bool | float
    rationale: str = ""

    def __post_init__(self):
        if self.form is VerdictForm.BINARY:
            if not isinstance(self.value, bool):
                raise ValueError("binary verdict needs a bool")
        else:
            if isinstance(self.value, bool) or not isinstance(self.value, (int, float)):
                raise ValueError("scalar verdict needs a real number")
            if not 0.0 <= float(self.value) <= 1.0 or math.isnan(self.value):
                raise ValueError(f"scalar verdict outside [0, 1]: {self.value}")

    @classmethod
    def binary(cls, attribute: str, correct: bool, rationale: str = "") -> "Verdict":
        return cls(attribute, VerdictForm.BINARY, bool(correct), rationale)

    @classmethod
    def scalar(cls, attribute: str, score: float, rationale: str = "") -> "Verdict":
        return cls(attribute, VerdictForm.SCALAR, float(score), rationale)

    @property
    def score(self) -> float:
        if self.form is VerdictForm.BINARY:
            return 1.0 if self.value else 0.0
        return float(self.value)

    def is_correct(self, threshold: float = DEFAULT_OCR_THRESHOLD) -> bool:
        if self.form is VerdictForm.BINARY:
            return bool(self.value)
        return self.value >= threshold

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "form": self.form.value, "value": self.value,
                "rationale": self.rationale}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Verdict":
        form = VerdictForm(d["form"])
        value = bool(d["value"]) if form is VerdictForm.BINARY else float(d["value"])
        return cls(d["attribute"], form, value, d.get("rationale", ""))


@dataclass(frozen=True)
class JudgeReport:
    creative_id: str
    child_model_id: str
    mother_model_id: str
    verdicts: Mapping[str, Verdict]
    abstained: Mapping[str, str] = field(default_factory=dict)
    usage: TokenUsage = field(default_factory=TokenUsage)

    @property
    def aggregate_score(self) -> float | None:
        """Mean verdict score; abstentions are excluded. None when nothing was judged."""
        if not self.verdicts:
            return None
        scores = [self.verdicts[k].score for k in sorted(self.verdicts)]
        return math.fsum(scores) / len(scores)


@dataclass(frozen=True)
class FewShot:
    answer: str
    verdict: str
    rationale: str = ""


def _normalize_tokens(text: str) -> list[str]:
    folded = text.casefold()
    stripped = "".join(ch for ch in folded if not unicodedata.category(ch).startswith("P"))
    return stripped.split()


def ocr_similarity(reference: str, hypothesis: str) -> float:
    """Cosine similarity of term-frequency vectors over normalized tokens."""
    a = Counter(_normalize_tokens(reference))
    b = Counter(_normalize_tokens(hypothesis))
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    dot = sum(count * b[tok] for tok, count in a.items())
    na = sum(c * c for c in a.values())
    nb = sum(c * c for c in b.values())
    return min(1.0, dot / math.sqrt(na * nb))


def score_ocr_verdict(reference: str, hypothesis: str, threshold: float = DEFAULT_OCR_THRESHOLD, *,
                      as_binary: bool = False, attribute: str = "OCR Text") -> Verdict:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    sim = ocr_similarity(reference, hypothesis)
    rationale = f"cosine similarity {sim:.4f} vs threshold {threshold}"
    if as_binary:
        return Verdict.binary(attribute, sim >= threshold, rationale)
    return Verdict.scalar(attribute, sim, rationale)


JUDGE_SYSTEM = (
    "You audit answers produced by another vision-language model for an advertisement compliance review. "
    "Look at the image yourself and check exactly one item. Reply with a JSON object only."
)


def _is_transcription(attribute: AttributeSpec) -> bool:
    return attribute.kind is AttributeKind.TEXT


def build_judge_prompt(attribute: AttributeSpec, child_value: AttributeValue, image: bytes | None,
                       fewshot: Sequence[FewShot] = (), image_mime: str = "image/png") -> PromptBundle:
    if child_value.kind is not attribute.kind:
        raise ValueError(f"{attribute.name}: value kind {child_value.kind.value} does not match the attribute")
    lines = [f'Item under review: "{attribute.name}" ({attribute.description}).']
    if attribute.guidance:
        lines.append(f"Review guidance: {attribute.guidance}")
    if _is_transcription(attribute):
        lines += [
            "Transcribe the relevant text from the image yourself, exactly as printed.",
            'Reply as {"reference": "<your transcription>"}.',
            f"(For context, the other model answered: {child_value.display()!r}.)",
        ]
    else:
        lines += [
            f"The other model answered: {child_value.display()!r}",
            "Decide whether that answer is correct for this image.",
            'Reply as {"verdict": "correct"} or {"verdict": "incorrect"}, with an optional "rationale" string. '
            'If only partially right, you may instead reply {"score": <number between 0 and 1>}.',
        ]
    for i, shot in enumerate(fewshot, 1):
        lines.append(f"Example {i}: answer {shot.answer!r} -> verdict {shot.verdict!r}."
                     + (f" {shot.rationale}" if shot.rationale else ""))
    return PromptBundle(JUDGE_SYSTEM, "\n".join(lines), image, image_mime)


_WORD = re.compile(r"\b(incorrect|correct)\b", re.IGNORECASE)


def parse_verdict(text: str, attribute: AttributeSpec) -> dict[str, Any]:
    """Pull the verdict payload out of mother output; raises VerdictParseError."""
    try:
        obj = extract_json_object(text)
    except Unparseable:
        obj = None
    if _is_transcription(attribute):
        if obj is not None and isinstance(obj.get("reference"), str):
            return {"reference": obj["reference"]}
        raise VerdictParseError(f"{attribute.name}: no transcription in mother output")
    if obj is not None:
        rationale = obj.get("rationale", "")
        rationale = rationale if isinstance(rationale, str) else json.dumps(rationale)
        v = obj.get("verdict")
        if isinstance(v, bool):
            return {"correct": v, "rationale": rationale}
        if isinstance(v, str) and v.strip().casefold() in ("correct", "incorrect"):
            return {"correct": v.strip().casefold() == "correct", "rationale": rationale}
        s = obj.get("score")
        if isinstance(s, (int, float)) and not isinstance(s, bool):
            if 0.0 <= s <= 1.0:
                return {"score": float(s), "rationale": rationale}
            raise VerdictParseError(f"{attribute.name}: score {s} outside [0, 1]")
    m = _WORD.search(text)
    if m:
        return {"correct": m.group(1).casefold() == "correct", "rationale": text.strip()[:200]}
    raise VerdictParseError(f"{attribute.name}: no verdict in mother output")


def _to_verdict(parsed: Mapping, attribute: AttributeSpec, child_value: AttributeValue, threshold: float) -> Verdict:
    if "reference" in parsed:
        return score_ocr_verdict(parsed["reference"], child_value.display(), threshold, attribute=attribute.name)
    if "score" in parsed:
        return Verdict.scalar(attribute.name, parsed["score"], parsed.get("rationale", ""))
    return Verdict.binary(attribute.name, parsed["correct"], parsed.get("rationale", ""))


def judge_report(mother: ModelSpec, creative: Creative, child_report: ComplianceReport, judgeable: Iterable[str],
                 *, suite: Sequence[AttributeSpec] | None = None, policy: RetryPolicy = RetryPolicy(),
                 backend: Backend | None = None, fewshot: Mapping[str, Sequence[FewShot]] | None = None,
                 ocr_threshold: float = DEFAULT_OCR_THRESHOLD, parallelism: int = 1) -> JudgeReport:
    """One mother call per judgeable attribute; failed attributes abstain."""
    suite = suite if suite is not None else default_attribute_suite()
    names = list(dict.fromkeys(judgeable))
    if not names:
        raise EmptyJudgeSet("no attributes to judge")
    by_name = {a.name: a for a in suite}
    unknown = [n for n in names if n not in child_report.results or n not in by_name]
    if unknown:
        raise ValueError(f"judgeable attributes not in the child report: {unknown}")
    fewshot = fewshot or {}
    image, image_mime = creative.load_image()

    def one(name: str):
        attr = by_name[name]
        value = child_report.results[name]
        prompt = build_judge_prompt(attr, value, image, fewshot.get(name, ()), image_mime)
        try:
            raw = retrying_invoke(mother, prompt, policy, backend=backend,
                                  validate=lambda text: parse_verdict(text, attr))
        except Exhausted as exc:
            return name, None, f"{type(exc.last_error).__name__}: {exc.last_error}", exc.usage
        return name, _to_verdict(raw.parsed, attr, value, ocr_threshold), None, raw.usage

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(one, names))
    verdicts, abstained, usage = {}, {}, TokenUsage()
    for name, verdict, reason, used in results:
        usage = usage + used
        if verdict is None:
            abstained[name] = reason
        else:
            verdicts[name] = verdict
    return JudgeReport(child_report.creative_id, child_report.model_id, mother.model_id, verdicts, abstained, usage)
