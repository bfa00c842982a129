"""Synthetic 12-creative workspace for offline runs and tests.

``build_toy(dest)`` renders the images, derives ground truth from the
rendered pixels, and writes the manifest, brand contexts, three annotator
files, mock fixtures for two child models and one mother model, and a
config that ties them together. Everything is deterministic, so a rebuilt
workspace is byte-identical to the committed one.

Child answers carry scripted mistakes on the annotated attributes so that
scorecards are non-trivial and hand-checkable:

    gpt-4.1           Face Detection wrong on 6/12, Logo Position wrong on 1/12
    gemini-2.0-flash  Primary Color wrong on 4/12, Logo Position and OCR Text wrong on 2/12 each
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import tempfile

from .augment import AugmentationKind, augment_creatives, default_lexicon, encode_png
from .augment import glyphs
from .engine import Creative
from .backends import PromptBundle
from .engine import build_child_prompt
from .judge import build_judge_prompt
from .schema import (URGENT_PHRASES, AttributeKind, AttributeValue, BrandContext, PositionSector,
                     default_attribute_suite, position_bin, serialize_results)

SIZE = 128

PALETTE = {
    "red": (220, 30, 40),
    "blue": (30, 60, 200),
    "green": (30, 160, 60),
    "yellow": (240, 210, 40),
    "black": (10, 10, 10),
    "white": (245, 245, 245),
    "orange": (245, 130, 20),
    "purple": (120, 40, 160),
    "tan": (224, 172, 105),
}

ANNOTATED = ("Logo Position", "Logo Detection", "Human Presence", "Face Detection", "OCR Text", "Primary Color")
CHILD_MODELS = ("gpt-4.1", "gemini-2.0-flash")
MOTHER_MODEL = "gemini-2.5-pro"

BRANDS = [
    BrandContext("brightbrew", ("warm", "playful"), ("craft", "community"), ("freshly roasted", "made with care"),
                 ("cheap",), ("Use 24-hour time for store hours", "Write dates as DD/MM/YYYY")),
    BrandContext("peakgear", ("bold", "adventurous"), ("durability", "sustainability"), ("built to last",),
                 ("disposable", "flimsy"), ("Address the audience with gender-neutral language",)),
    BrandContext("lumacare", ("calm", "reassuring"), ("wellbeing", "inclusivity"), ("gentle on skin",),
                 ("miracle", "guaranteed cure"), ("No medical claims", "Include all skin tones in imagery")),
]


@dataclass(frozen=True)
class ToySpec:
    creative_id: str
    brand_id: str
    background: str
    accent: str
    headline: str
    headline_scale: int = 2
    logo: tuple[str, int, int] | None = None  # color, center x, center y (pixels)
    cta: tuple[str, int, int] | None = None  # text, center x, center y
    person: str | None = None  # "full" (head and body) or "arm"
    emoji: bool = False
    language: tuple[str, ...] = ("English",)
    grammar_ok: bool = True
    caption: str = ""


SPECS = [
    ToySpec("toy-01", "brightbrew", "orange", "black", "NEW BLEND", logo=("red", 64, 64), cta=("BUY NOW", 96, 104),
            caption="Freshly roasted every morning."),
    ToySpec("toy-02", "brightbrew", "yellow", "blue", "HURRY", logo=("red", 22, 22), cta=("ORDER TODAY", 64, 104),
            person="full", caption="Grab yours before noon."),
    ToySpec("toy-03", "brightbrew", "white", "green", "CHEAP EATS", logo=("blue", 106, 22), person="arm",
            caption="Cheap coffee for everyone."),
    ToySpec("toy-04", "brightbrew", "purple", "yellow", "YOUR THE BEST", headline_scale=1, logo=("green", 106, 80),
            cta=("SHOP NOW", 32, 104), grammar_ok=False, caption="Your the best customers."),
    ToySpec("toy-05", "peakgear", "green", "black", "GO FAR", logo=("white", 22, 80), person="full",
            caption="Built to last on every trail."),
    ToySpec("toy-06", "peakgear", "blue", "orange", "LAST CHANCE", logo=("yellow", 64, 60), cta=("SIGN UP", 96, 104),
            emoji=True, caption="Final days of the season sale."),
    ToySpec("toy-07", "peakgear", "black", "red", "OFERTA HOY", language=("Spanish",), person="arm",
            cta=("COMPRA YA", 64, 104), caption="Equipo para la montana."),
    ToySpec("toy-08", "peakgear", "white", "blue", "DAMN GOOD GEAR", headline_scale=1, logo=("red", 106, 22),
            person="full", emoji=True, caption="Gear that works."),
    ToySpec("toy-09", "lumacare", "tan", "white", "SOFT SKIN", logo=("purple", 60, 66), person="full",
            cta=("LEARN MORE", 64, 104), caption="Gentle on skin, every day."),
    ToySpec("toy-10", "lumacare", "white", "purple", "SOLDES", language=("French",), logo=("green", 22, 22),
            emoji=True, caption="Douceur pour tous."),
    ToySpec("toy-11", "lumacare", "blue", "white", "MIRACLE CREAM", headline_scale=1, logo=("orange", 106, 80),
            person="full", cta=("TRY IT FREE", 64, 104), caption="A miracle in a jar."),
    ToySpec("toy-12", "lumacare", "green", "yellow", "CALM", person="arm", emoji=True,
            caption="Take a quiet moment."),
]


def _fill(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    img[max(0, y0):min(SIZE, y1), max(0, x0):min(SIZE, x1)] = color


def _stamp(img: np.ndarray, mask: np.ndarray, x: int, y: int, color) -> None:
    h, w = mask.shape
    region = img[y:y + h, x:x + w]
    region[mask[:region.shape[0], :region.shape[1]]] = color


def _text_box(text: str, scale: int) -> tuple[np.ndarray, int, int]:
    mask = glyphs.upscale(glyphs.text_mask(text), scale)
    return mask, mask.shape[1], mask.shape[0]


@dataclass
class Rendered:
    pixels: np.ndarray
    truth: dict[str, AttributeValue]
    logo_box: tuple[int, int, int, int] | None = None
    headline_area: float = 0.0
    extra: dict = field(default_factory=dict)


def render(spec: ToySpec, brand: BrandContext) -> Rendered:
    img = np.zeros((SIZE, SIZE, 3), dtype=np.uint8)
    img[:] = PALETTE[spec.background]
    _fill(img, 0, 96, SIZE, SIZE, PALETTE[spec.accent])

    mask, w, h = _text_box(spec.headline, spec.headline_scale)
    hx = (SIZE - w) // 2
    text_color = PALETTE["white"] if spec.background in ("black", "blue", "purple", "green") else PALETTE["black"]
    _stamp(img, mask, max(0, hx), 40 - h if spec.logo and spec.logo[2] >= 56 else 44, text_color)
    headline_area = (min(w, SIZE) * h) / (SIZE * SIZE)

    if spec.person:
        skin = PALETTE["tan"] if spec.background != "tan" else PALETTE["black"]
        dx = 92 if spec.logo and spec.logo[1] < 40 and spec.logo[2] > 56 else 0  # keep clear of the logo
        if spec.person == "full":
            _fill(img, 12 + dx, 58, 22 + dx, 68, skin)  # head
            _fill(img, 10 + dx, 68, 24 + dx, 94, skin)  # body
        else:
            _fill(img, 70, 80, 94, 86, skin)  # arm only

    logo_box = None
    if spec.logo:
        color, cx, cy = spec.logo
        logo_box = (cx - 12, cy - 12, cx + 12, cy + 12)
        _fill(img, *logo_box, PALETTE[color])
        letter = glyphs.upscale(glyphs.text_mask(spec.brand_id[0].upper()), 2)
        _stamp(img, letter, cx - 6, cy - 11, PALETTE["white"] if color != "white" else PALETTE["black"])

    if spec.cta:
        text, cx, cy = spec.cta
        cmask, cw, ch = _text_box(text, 1)
        bx0, by0 = cx - cw // 2 - 3, cy - ch // 2 - 2
        _fill(img, bx0, by0, bx0 + cw + 6, by0 + ch + 4, PALETTE["white"])
        _stamp(img, cmask, bx0 + 3, by0 + 2, PALETTE["black"])

    if spec.emoji:
        _stamp(img, glyphs.upscale(glyphs.emoji_mask(0), 2), 100, 64, PALETTE["yellow"])

    # dominant colours straight from the pixels
    names = {v: k for k, v in PALETTE.items()}
    flat = img.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    ranked = sorted(((int(n), names.get(tuple(int(x) for x in c))) for c, n in zip(colors, counts)),
                    key=lambda t: (-t[0], t[1] or ""))
    top3 = tuple(name for _, name in ranked if name)[:3]

    texts = [spec.headline] + ([spec.cta[0]] if spec.cta else [])
    lowered = " ".join(texts).casefold()
    urgent = tuple(p for p in URGENT_PHRASES if p.casefold() in lowered)
    profane = tuple(w for w in ("damn",) if w in lowered.split())
    negatives = [p for p in brand.negative_phrases if p.casefold() in (lowered + " " + spec.caption.casefold())]
    compliant = spec.grammar_ok and not profane and not negatives

    def v(kind, value):
        return AttributeValue(kind, value)

    K = AttributeKind
    truth = {
        "Primary Color": v(K.COLOR_LIST, top3),
        "Logo Detection": v(K.BOOLEAN, spec.logo is not None),
        "Logo Position": v(K.POSITION_SECTOR, position_bin(spec.logo[1] / SIZE, spec.logo[2] / SIZE)
                           if spec.logo else None),
        "Human Presence": v(K.BOOLEAN, spec.person is not None),
        "Face Detection": v(K.BOOLEAN, spec.person == "full"),
        "OCR Text": v(K.TEXT, " ".join(texts)),
        "OCR Overlay Text": v(K.TEXT, spec.headline if headline_area > 0.10 else ""),
        "Headline Text": v(K.TEXT, spec.headline),
        "CTA Presence": v(K.TEXT_LIST, (spec.cta[0],) if spec.cta else ()),
        "CTA Position": v(K.POSITION_SECTOR, position_bin(spec.cta[1] / SIZE, spec.cta[2] / SIZE)
                          if spec.cta else None),
        "Language Detected": v(K.TEXT_LIST, spec.language),
        "Urgent Claim": v(K.TEXT_LIST, urgent),
        "Profanity Detection": v(K.TEXT_LIST, profane),
        "Brand Tone Consistency": v(K.SUGGESTION, "" if compliant else
                                    f"Rephrase the caption in a {' and '.join(brand.tone_descriptors)} tone."),
        "Brand Value Consistency": v(K.SUGGESTION, "" if compliant else
                                     f"Connect the message to {brand.core_values[0]}."),
        "Brand Positive Phrases": v(K.SUGGESTION, f"Add '{brand.positive_phrases[0]}'."
                                    if brand.positive_phrases[0].casefold() not in spec.caption.casefold() else ""),
        "Brand Negative Phrases": v(K.SUGGESTION, "; ".join(f"Remove '{p}'" for p in negatives)),
        "Grammar Check": v(K.BOOLEAN, spec.grammar_ok),
        "Compliance Check": v(K.BOOLEAN, compliant),
        "Compliance Consistency": v(K.SUGGESTION, "" if compliant else "Fix the flagged wording before release."),
        "Emoji Detection": v(K.BOOLEAN, spec.emoji),
    }
    return Rendered(img, truth, logo_box, headline_area)


# Scripted child mistakes: model -> attribute -> creative indexes (0-based).
CHILD_ERRORS = {
    "gpt-4.1": {"Face Detection": (0, 1, 2, 4, 6, 8), "Logo Position": (5,)},
    "gemini-2.0-flash": {"Primary Color": (0, 3, 6, 9), "Logo Position": (1, 10), "OCR Text": (2, 7)},
}

# Mother verdicts that disagree with the labels: (attribute, creative index). The mother sees the
# same prompt whenever both children give the same answer, so slips are keyed per image, not per child.
MOTHER_SLIPS = {("Face Detection", 0), ("Human Presence", 3), ("Primary Color", 5), ("Logo Position", 1)}

# Second annotator disagrees with the first here: (attribute, creative index).
ANNOTATOR_B_DISAGREES = {("Face Detection", 2), ("Human Presence", 6), ("Logo Position", 4), ("Primary Color", 8)}

# Extra mistakes the cheap model makes on altered images: kind -> attribute -> creative indexes.
VARIANT_MODEL = "gemini-2.0-flash"
VARIANT_ERRORS = {
    AugmentationKind.BLURRED: {"OCR Text": (0, 4, 5, 8)},
    AugmentationKind.DIM: {"Human Presence": (4,)},
    AugmentationKind.GRAYSCALE: {"Primary Color": tuple(range(12))},
    AugmentationKind.OCCLUDED: {"Logo Detection": (0, 5, 8)},
    AugmentationKind.ROTATED: {"Logo Position": (0, 1, 2, 3, 4, 5, 7, 8, 9, 10)},
    AugmentationKind.GAUSSIAN_NOISE: {"Face Detection": (1, 10)},
    AugmentationKind.SALT_PEPPER: {"Logo Detection": (2, 9)},
}
AUGMENT_SEED = 7
DEFAULT_MASK = (0.4, 0.4, 0.6, 0.6)

CHILD_COST = {"gpt-4.1": (1500, 420, 3.2), "gemini-2.0-flash": (1500, 90, 1.4)}
MOTHER_COST = (900, 40, 2.5)


def _wrong(value: AttributeValue, index: int) -> AttributeValue:
    K = AttributeKind
    if value.kind is K.BOOLEAN:
        return AttributeValue(K.BOOLEAN, not value.value)
    if value.kind is K.POSITION_SECTOR:
        order = list(PositionSector)
        cur = order.index(value.value) if value.value is not None else 0
        return AttributeValue(K.POSITION_SECTOR, order[(cur + 1 + index) % len(order)])
    if value.kind is K.COLOR_LIST:
        rest = tuple(c for c in PALETTE if c not in value.value)
        return AttributeValue(K.COLOR_LIST, rest[index % len(rest):][:1] + value.value[1:3])
    if value.kind is K.TEXT:
        return AttributeValue(K.TEXT, "ILLEGIBLE")
    raise ValueError(f"no scripted mistake for {value.kind}")


def _flip(value: AttributeValue, attribute: str, index: int) -> AttributeValue:
    """A label different from ``value`` for the second annotator."""
    return _wrong(value, index + 1)


def _reasoned(results: dict[str, AttributeValue], model_id: str) -> dict[str, AttributeValue]:
    return {k: AttributeValue(v.kind, v.value, f"{model_id} checked {k.lower()}.") for k, v in results.items()}


def _answers(truth: dict[str, AttributeValue], errors: dict[str, tuple[int, ...]], index: int,
             model_id: str) -> dict[str, AttributeValue]:
    answers = dict(truth)
    for attr, idxs in errors.items():
        if index in idxs:
            answers[attr] = _wrong(truth[attr], index)
    return _reasoned(answers, model_id)


def _variant_truth(truth: dict[str, AttributeValue], kind: AugmentationKind) -> dict[str, AttributeValue]:
    """What a careful reader would report for the altered image (only the overlays change content)."""
    out = dict(truth)
    if kind is AugmentationKind.EMOJI_OVERLAY:
        out["Emoji Detection"] = AttributeValue(AttributeKind.BOOLEAN, True)
    if kind is AugmentationKind.PROFANE_TEXT:
        out["Compliance Check"] = AttributeValue(AttributeKind.BOOLEAN, False)
        out["Compliance Consistency"] = AttributeValue(AttributeKind.SUGGESTION, "Remove the offensive overlay text.")
    return out


def _digest_entry(text: str, usage: tuple[int, int, float], index: int) -> dict:
    inp, out, lat = usage
    return {"text": text, "input_tokens": inp + 10 * index, "output_tokens": out + index,
            "latency": round(lat + 0.1 * index, 3)}


def _mother_text(attribute: str, correct: bool, truth: AttributeValue) -> str:
    if truth.kind is AttributeKind.TEXT:
        return json.dumps({"reference": truth.value})
    return json.dumps({"verdict": "correct" if correct else "incorrect",
                       "rationale": f"Compared the {attribute.lower()} answer with the image."})


def bundled_toy() -> Path:
    """Location of the toy workspace shipped inside the package."""
    return Path(__file__).parent / "data" / "toy"


def build_toy(dest: str | Path) -> Path:
    dest = Path(dest)
    (dest / "images").mkdir(parents=True, exist_ok=True)
    (dest / "fixtures").mkdir(exist_ok=True)
    (dest / "annotations").mkdir(exist_ok=True)
    suite = default_attribute_suite()
    by_name = {a.name: a for a in suite}
    brands = {b.brand_id: b for b in BRANDS}

    manifest, masks = [], {}
    labels = {"a1": [], "a2": [], "gold": []}
    child_fx: dict[str, dict] = {m: {} for m in CHILD_MODELS}
    mother_fx: dict[str, dict] = {}
    truths: list[dict[str, AttributeValue]] = []

    for i, spec in enumerate(SPECS):
        brand = brands[spec.brand_id]
        r = render(spec, brand)
        png = encode_png(r.pixels)
        (dest / "images" / f"{spec.creative_id}.png").write_bytes(png)
        manifest.append({"creative_id": spec.creative_id, "image_path": f"images/{spec.creative_id}.png",
                         "caption": spec.caption, "brand_id": spec.brand_id})
        if r.logo_box:
            x0, y0, x1, y1 = r.logo_box
            # cover the left half of the logo
            masks[spec.creative_id] = [x0 / SIZE, y0 / SIZE, (x0 + x1) / 2 / SIZE, y1 / SIZE]

        for attr in ANNOTATED:
            value = r.truth[attr].to_json()
            labels["a1"].append({"annotator_id": "a1", "creative_id": spec.creative_id, "attribute": attr,
                                 "value": value})
            labels["gold"].append({"annotator_id": "gold", "creative_id": spec.creative_id, "attribute": attr,
                                   "value": value})
            b_value = _flip(r.truth[attr], attr, i).to_json() if (attr, i) in ANNOTATOR_B_DISAGREES else value
            labels["a2"].append({"annotator_id": "a2", "creative_id": spec.creative_id, "attribute": attr,
                                 "value": b_value})

        prompt = build_child_prompt(suite, brand, spec.caption, png, "image/png")
        for model in CHILD_MODELS:
            answers = _answers(r.truth, CHILD_ERRORS[model], i, model)
            text = "```json\n" + serialize_results(answers) + "\n```"
            child_fx[model][prompt.digest()] = _digest_entry(text, CHILD_COST[model], i)

            for attr in ANNOTATED:
                jp = build_judge_prompt(by_name[attr], answers[attr], png)
                correct = answers[attr].value == r.truth[attr].value
                if (attr, i) in MOTHER_SLIPS:
                    correct = not correct
                mother_fx[jp.digest()] = _digest_entry(_mother_text(attr, correct, r.truth[attr]), MOTHER_COST, i)

        truths.append(r.truth)

    # variant answers for the robustness table, keyed by the altered images' prompts
    with tempfile.TemporaryDirectory() as tmp:
        base = [Creative(m["creative_id"], str(dest / m["image_path"]), m["caption"], m["brand_id"]) for m in manifest]
        result = augment_creatives(base, tmp, AUGMENT_SEED, lexicon=default_lexicon(), default_mask=DEFAULT_MASK,
                                   masks={k: tuple(v) for k, v in masks.items()})
        index = {m["creative_id"]: i for i, m in enumerate(manifest)}
        for v in result.variants:
            i = index[v.variant_of]
            kind = AugmentationKind.parse(v.augmentation)
            errors = {a: tuple(ix) for a, ix in CHILD_ERRORS[VARIANT_MODEL].items()}
            for attr, idxs in VARIANT_ERRORS.get(kind, {}).items():
                errors[attr] = tuple(sorted(set(errors.get(attr, ())) | set(idxs)))
            answers = _answers(_variant_truth(truths[i], kind), errors, i, VARIANT_MODEL)
            png = (Path(tmp) / v.image_path).read_bytes()
            prompt = build_child_prompt(suite, brands[v.brand_id], v.caption, png, "image/png")
            text = "```json\n" + serialize_results(answers) + "\n```"
            child_fx[VARIANT_MODEL][prompt.digest()] = _digest_entry(text, CHILD_COST[VARIANT_MODEL], i)

    def dump(path: Path, obj) -> None:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")

    (dest / "manifest.jsonl").write_text("".join(json.dumps(m, sort_keys=True) + "\n" for m in manifest),
                                         encoding="utf-8")
    dump(dest / "brands.json", [{"brand_id": b.brand_id, "tone_descriptors": list(b.tone_descriptors),
                                 "core_values": list(b.core_values), "positive_phrases": list(b.positive_phrases),
                                 "negative_phrases": list(b.negative_phrases),
                                 "compliance_rules": list(b.compliance_rules)} for b in BRANDS])
    for who, rows in labels.items():
        (dest / "annotations" / f"{who}.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n"
                                                                   for r in rows), encoding="utf-8")
    for model, table in child_fx.items():
        dump(dest / "fixtures" / f"{model}.json", table)
    dump(dest / "fixtures" / f"{MOTHER_MODEL}.json", mother_fx)
    dump(dest / "config.json", {
        "models": [{"model_id": m, "provider": "mock", "fixtures": f"fixtures/{m}.json"}
                   for m in CHILD_MODELS + (MOTHER_MODEL,)],
        "child_models": list(CHILD_MODELS),
        "mother_model": MOTHER_MODEL,
        "brands": "brands.json",
        "dataset": "manifest.jsonl",
        "annotations": "annotations/gold.jsonl",
        "retry": {"max_retries": 2, "base_backoff": 0.0},
        "parallelism": 4,
        "judgeable": list(ANNOTATED),
        "ocr_threshold": 0.8,
        "selection": {"profile": "cost_sensitive", "current_model_id": "gpt-4.1", "min_accuracy_floor": 80.0},
        "augmentation": {"seed": AUGMENT_SEED, "mask": list(DEFAULT_MASK), "masks": masks},
        "archive": "archive",
    })
    return dest


def expected_child_prompt_digest(creative_id: str, root: str | Path) -> str:
    """Digest of the child prompt for one toy creative as the engine will build it."""
    spec = next(s for s in SPECS if s.creative_id == creative_id)
    brand = {b.brand_id: b for b in BRANDS}[spec.brand_id]
    png = (Path(root) / "images" / f"{creative_id}.png").read_bytes()
    return build_child_prompt(default_attribute_suite(), brand, spec.caption, png, "image/png").digest()


__all__ = ["ANNOTATED", "BRANDS", "CHILD_ERRORS", "CHILD_MODELS", "MOTHER_MODEL", "SPECS", "PromptBundle", "bundled_toy",
           "build_toy", "expected_child_prompt_digest", "render"]
