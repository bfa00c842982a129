"""Compliance attribute taxonomy, report values and structured-output validation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

SCHEMA_VERSION = 1
MAX_COLORS = 3


class AttributeKind(str, Enum):
    BOOLEAN = "Boolean"
    POSITION_SECTOR = "PositionSector"
    TEXT = "Text"
    TEXT_LIST = "TextList"
    COLOR_LIST = "ColorList"
    SUGGESTION = "Suggestion"


class PositionSector(str, Enum):
    CENTER = "Center"
    TOP_LEFT = "Top-Left"
    TOP_RIGHT = "Top-Right"
    BOTTOM_LEFT = "Bottom-Left"
    BOTTOM_RIGHT = "Bottom-Right"

    @classmethod
    def parse(cls, text: str) -> "PositionSector":
        key = re.sub(r"[\s_\-]+", "", text).casefold()
        for sector in cls:
            if sector.value.replace("-", "").casefold() == key:
                return sector
        raise ValueError(f"not a position sector: {text!r}")


class SchemaError(Exception):
    """Base class for validation failures; all of them are retry-eligible."""


class MissingAttribute(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"missing attribute {name!r}")
        self.name = name


class TypeMismatch(SchemaError):
    def __init__(self, name: str, expected: AttributeKind, got: Any = None):
        super().__init__(f"attribute {name!r}: expected {expected.value}, got {got!r}")
        self.name = name
        self.expected = expected


class Unparseable(SchemaError):
    def __init__(self, offset: int, reason: str = ""):
        super().__init__(f"unparseable structured output at offset {offset}: {reason}")
        self.offset = offset


class UnknownAttribute(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"unknown attribute {name!r}")
        self.name = name


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: AttributeKind
    description: str
    guidance: str | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind.value, "description": self.description}
        if self.guidance:
            d["guidance"] = self.guidance
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributeSpec":
        return cls(d["name"], AttributeKind(d["kind"]), d.get("description", ""), d.get("guidance"))


@dataclass(frozen=True)
class AttributeValue:
    """A typed answer for one attribute.

    ``value`` is a bool, a PositionSector (or None when nothing was located),
    a str, or a tuple of str depending on ``kind``. ``raw_model_text`` keeps
    whatever reasoning prose the model attached to the answer.
    """

    kind: AttributeKind
    value: Any
    raw_model_text: str = ""

    def to_json(self) -> Any:
        if self.kind is AttributeKind.POSITION_SECTOR:
            return None if self.value is None else self.value.value
        if self.kind in (AttributeKind.TEXT_LIST, AttributeKind.COLOR_LIST):
            return list(self.value)
        return self.value

    def display(self) -> str:
        v = self.to_json()
        if isinstance(v, bool):
            return "True" if v else "False"
        if isinstance(v, list):
            return ", ".join(v)
        return "" if v is None else str(v)


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)


@dataclass(frozen=True)
class ComplianceReport:
    creative_id: str
    model_id: str
    results: Mapping[str, AttributeValue]
    usage: TokenUsage = field(default_factory=TokenUsage)
    latency: float = 0.0
    timestamp: str = ""
    attempt_count: int = 1
    reasoning_enabled: bool = False

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be non-negative")

    def to_dict(self) -> dict:
        return {
            "creative_id": self.creative_id,
            "model_id": self.model_id,
            "results": {
                name: {"kind": v.kind.value, "value": v.to_json(), "raw_model_text": v.raw_model_text}
                for name, v in self.results.items()
            },
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "latency": self.latency,
            "timestamp": self.timestamp,
            "attempt_count": self.attempt_count,
            "reasoning_enabled": self.reasoning_enabled,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComplianceReport":
        results = {}
        for name, item in d["results"].items():
            kind = AttributeKind(item["kind"])
            results[name] = AttributeValue(kind, coerce_value(name, kind, item["value"]), item.get("raw_model_text", ""))
        usage = d.get("usage", {})
        return cls(
            creative_id=d["creative_id"],
            model_id=d["model_id"],
            results=results,
            usage=TokenUsage(usage.get("input_tokens", 0), usage.get("output_tokens", 0)),
            latency=d.get("latency", 0.0),
            timestamp=d.get("timestamp", ""),
            attempt_count=d.get("attempt_count", 1),
            reasoning_enabled=d.get("reasoning_enabled", False),
        )


@dataclass(frozen=True)
class BrandContext:
    brand_id: str
    tone_descriptors: tuple[str, ...] = ()
    core_values: tuple[str, ...] = ()
    positive_phrases: tuple[str, ...] = ()
    negative_phrases: tuple[str, ...] = ()
    compliance_rules: tuple[str, ...] = ()

    def __post_init__(self):
        overlap = {p.casefold() for p in self.positive_phrases} & {p.casefold() for p in self.negative_phrases}
        if overlap:
            raise ValueError(f"brand {self.brand_id!r}: phrases both positive and negative: {sorted(overlap)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "BrandContext":
        return cls(
            brand_id=d["brand_id"],
            tone_descriptors=tuple(d.get("tone_descriptors", ())),
            core_values=tuple(d.get("core_values", ())),
            positive_phrases=tuple(d.get("positive_phrases", ())),
            negative_phrases=tuple(d.get("negative_phrases", ())),
            compliance_rules=tuple(d.get("compliance_rules", ())),
        )


# Placeholder lexicons; representative only, not exhaustive.
CTA_PHRASES = ("Buy now", "Shop now", "Learn more", "Sign up", "Order today", "Call now", "Get started", "Try it free")
URGENT_PHRASES = ("Limited time", "Hurry", "Last chance", "Only today", "Ends soon", "While stocks last", "Act now")

_SECTOR_NOTE = "One of: Center, Top-Left, Top-Right, Bottom-Left, Bottom-Right (Center takes priority); null if absent."

_TABLE = [
    ("Primary Color", AttributeKind.COLOR_LIST, "Prominent color(s) in media",
     "List the top three dominant colors by name, most dominant first."),
    ("Logo Detection", AttributeKind.BOOLEAN, "Brand logo in creative", None),
    ("Logo Position", AttributeKind.POSITION_SECTOR, "Logo location in asset", _SECTOR_NOTE),
    ("Human Presence", AttributeKind.BOOLEAN, "Human figures present",
     "True if any visible body part indicative of a human is present."),
    ("Face Detection", AttributeKind.BOOLEAN, "Faces present",
     "Real human faces only; caricatures and illustrated avatars do not count."),
    ("OCR Text", AttributeKind.TEXT, "Recognized text via OCR", None),
    ("OCR Overlay Text", AttributeKind.TEXT, "Text overlays from OCR",
     "Only text occupying more than 10% of the image area is significant."),
    ("Headline Text", AttributeKind.TEXT, "Main headline via OCR", "The dominant textual element of the creative."),
    ("CTA Presence", AttributeKind.TEXT_LIST, "Call-to-action phrase",
     "Representative phrases: " + ", ".join(CTA_PHRASES) + "."),
    ("CTA Position", AttributeKind.POSITION_SECTOR, "Call-to-action phrase location", _SECTOR_NOTE),
    ("Language Detected", AttributeKind.TEXT_LIST, "Language of OCR text", None),
    ("Urgent Claim", AttributeKind.TEXT_LIST, "Urgent phrases in creative",
     "Representative phrases: " + ", ".join(URGENT_PHRASES) + "."),
    ("Profanity Detection", AttributeKind.TEXT_LIST, "Profane words in text", None),
    ("Brand Tone Consistency", AttributeKind.SUGGESTION, "Caption tone alignment", None),
    ("Brand Value Consistency", AttributeKind.SUGGESTION, "Caption vs. brand values", None),
    ("Brand Positive Phrases", AttributeKind.SUGGESTION, "Positive phrases in text",
     "Make sure at least one brand positive phrase is reflected."),
    ("Brand Negative Phrases", AttributeKind.SUGGESTION, "Negative phrases detected",
     "Suggest removal of every brand negative phrase present."),
    ("Grammar Check", AttributeKind.BOOLEAN, "Grammar correctness", None),
    ("Compliance Check", AttributeKind.BOOLEAN, "Meets content guidelines", None),
    ("Compliance Consistency", AttributeKind.SUGGESTION, "Modifications for compliance",
     "Cover time zone conventions, gender inclusivity, audience addressing, date formatting and brand rules."),
    ("Emoji Detection", AttributeKind.BOOLEAN, "Presence of emoji", None),
]


def default_attribute_suite() -> list[AttributeSpec]:
    return [AttributeSpec(name, kind, desc, guide) for name, kind, desc, guide in _TABLE]


def check_suite(suite: Iterable[AttributeSpec]) -> list[AttributeSpec]:
    suite = list(suite)
    names = [a.name for a in suite]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValueError(f"duplicate attribute names: {dupes}")
    if not suite:
        raise ValueError("attribute suite is empty")
    return suite


def load_suite(path: str | Path) -> list[AttributeSpec]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data["attributes"]
    return check_suite(AttributeSpec.from_dict(d) for d in data)


def load_brands(path: str | Path) -> dict[str, BrandContext]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("brands", list(data.values()))
    brands = [BrandContext.from_dict(d) for d in data]
    return {b.brand_id: b for b in brands}


def position_bin(center_x: float, center_y: float, center_half_span: float = 0.25) -> PositionSector:
    """Bin a normalized point (y grows downward) into one of five sectors."""
    if not (0.0 <= center_x <= 1.0 and 0.0 <= center_y <= 1.0):
        raise OutOfRange(f"coordinates must lie in [0, 1]: ({center_x}, {center_y})")
    if abs(center_x - 0.5) <= center_half_span and abs(center_y - 0.5) <= center_half_span:
        return PositionSector.CENTER
    top = center_y <= 0.5
    left = center_x <= 0.5
    if top:
        return PositionSector.TOP_LEFT if left else PositionSector.TOP_RIGHT
    return PositionSector.BOTTOM_LEFT if left else PositionSector.BOTTOM_RIGHT


_BOOL_WORDS = {"true": True, "false": False}
_NULL_WORDS = {"", "none", "null", "n/a", "not present", "absent"}
_VALUE_KEYS = ("value", "output", "result", "answer")
_REASON_KEYS = ("reasoning", "reason", "rationale", "explanation")


def coerce_value(name: str, kind: AttributeKind, raw: Any) -> Any:
    """Shape-check one bare value against ``kind``; raises TypeMismatch."""
    if kind is AttributeKind.BOOLEAN:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().casefold() in _BOOL_WORDS:
            return _BOOL_WORDS[raw.strip().casefold()]
        raise TypeMismatch(name, kind, raw)

    if kind is AttributeKind.POSITION_SECTOR:
        if raw is None or isinstance(raw, PositionSector):
            return raw
        if isinstance(raw, str):
            if raw.strip().casefold() in _NULL_WORDS:
                return None
            try:
                return PositionSector.parse(raw)
            except ValueError:
                pass
        raise TypeMismatch(name, kind, raw)

    if kind in (AttributeKind.TEXT, AttributeKind.SUGGESTION):
        if raw is None:
            return ""
        if isinstance(raw, str):
            return raw
        raise TypeMismatch(name, kind, raw)

    # list kinds
    if raw is None:
        items: list = []
    elif isinstance(raw, str):
        items = [s for s in (p.strip() for p in raw.split(",")) if s] if kind is AttributeKind.COLOR_LIST else (
            [raw.strip()] if raw.strip() else [])
    elif isinstance(raw, (list, tuple)) and all(isinstance(x, str) for x in raw):
        items = [x.strip() for x in raw if x.strip()]
    else:
        raise TypeMismatch(name, kind, raw)
    if kind is AttributeKind.COLOR_LIST:
        items = [c.casefold() for c in items]
        if len(items) > MAX_COLORS:
            raise TypeMismatch(name, kind, raw)
    return tuple(items)


def _norm_key(key: str) -> str:
    return " ".join(key.split()).casefold()


def extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of model prose, tolerating code fences."""
    fenced = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", text, re.DOTALL)
    if fenced:
        candidate, base = fenced.group(1), fenced.start(1)
    else:
        start = text.find("{")
        if start < 0:
            raise Unparseable(0, "no JSON object found")
        end = text.rfind("}")
        if end < start:
            raise Unparseable(start, "unterminated JSON object")
        candidate, base = text[start:end + 1], start
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise Unparseable(base + exc.pos, exc.msg) from None
    if not isinstance(obj, dict):
        raise Unparseable(base, "top-level JSON is not an object")
    return obj


def parse_results(raw_structured_text: str, suite: Iterable[AttributeSpec]) -> dict[str, AttributeValue]:
    obj = extract_json_object(raw_structured_text)
    by_key = {_norm_key(k): v for k, v in obj.items()}
    results = {}
    for spec in suite:
        norm = _norm_key(spec.name)
        if norm not in by_key:
            raise MissingAttribute(spec.name)
        entry = by_key[norm]
        reasoning = ""
        if isinstance(entry, dict):
            lowered = {k.casefold(): v for k, v in entry.items()}
            reasoning = next((lowered[k] for k in _REASON_KEYS if k in lowered), "") or ""
            if not isinstance(reasoning, str):
                reasoning = json.dumps(reasoning)
            key = next((k for k in _VALUE_KEYS if k in lowered), None)
            if key is None:
                raise TypeMismatch(spec.name, spec.kind, entry)
            entry = lowered[key]
        results[spec.name] = AttributeValue(spec.kind, coerce_value(spec.name, spec.kind, entry), reasoning)
    return results


def validate_report(raw_structured_text: str, suite: Iterable[AttributeSpec], *, creative_id: str = "",
                    model_id: str = "", usage: TokenUsage | None = None, latency: float = 0.0,
                    timestamp: str = "", attempt_count: int = 1, reasoning_enabled: bool = False) -> ComplianceReport:
    results = parse_results(raw_structured_text, suite)
    return ComplianceReport(creative_id, model_id, results, usage or TokenUsage(), latency, timestamp,
                            attempt_count, reasoning_enabled)


def serialize_results(results: Mapping[str, AttributeValue]) -> str:
    """Render results in the structured shape a child model is asked to produce."""
    payload = {}
    for name, v in results.items():
        entry = {"value": v.to_json()}
        if v.raw_model_text:
            entry["reasoning"] = v.raw_model_text
        payload[name] = entry
    return json.dumps(payload, indent=2, ensure_ascii=False)


def serialize_report(report: ComplianceReport) -> str:
    return serialize_results(report.results)
