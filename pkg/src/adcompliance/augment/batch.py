"""Dataset-level augmentation: every image through every kind, plus a variants manifest."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..engine import Creative
from .ops import DEFAULT_PARAMS, AugmentationKind, AugmentParams, MissingMask, Rect, apply, encode_png, load_image, \
    variant_seed
from .prng import derive_seed

log = logging.getLogger(__name__)

VARIANTS_MANIFEST = "variants.jsonl"


@dataclass
class AugmentResult:
    variants: list[Creative] = field(default_factory=list)
    errors: list[tuple[str, str, str]] = field(default_factory=list)  # creative_id, kind, message


def image_seed(seed: int, creative_id: str) -> int:
    return derive_seed(seed, creative_id)


def variant_id(creative_id: str, kind: AugmentationKind) -> str:
    return f"{creative_id}__{kind.slug}"


def augment_creatives(creatives: Sequence[Creative], out_dir: str | Path, seed: int, *,
                      lexicon: Sequence[str], default_mask: Rect | None = None,
                      masks: Mapping[str, Rect] | None = None, params: AugmentParams = DEFAULT_PARAMS,
                      kinds: Sequence[AugmentationKind] = tuple(AugmentationKind)) -> AugmentResult:
    """Write ``<out>/images/<id>__<kind>.png`` for each creative and kind.

    Image paths in the returned creatives (and in ``variants.jsonl``) are
    relative to ``out_dir``. A creative without a mask still gets every
    other kind; its Occluded variant is reported as an error.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    masks = masks or {}
    result = AugmentResult()
    for c in creatives:
        pixels = load_image(c.image_path)
        base = image_seed(seed, c.creative_id)
        mask = masks.get(c.creative_id, default_mask)
        for kind in kinds:
            try:
                img = apply(pixels, kind, variant_seed(base, kind), mask=mask, lexicon=lexicon, params=params)
            except MissingMask as exc:
                log.error("%s: %s", c.creative_id, exc)
                result.errors.append((c.creative_id, kind.value, str(exc)))
                continue
            vid = variant_id(c.creative_id, kind)
            rel = f"images/{vid}.png"
            (out / rel).write_bytes(encode_png(img))
            result.variants.append(Creative(vid, rel, c.caption, c.brand_id, c.creative_id, kind.value))
    (out / VARIANTS_MANIFEST).write_text("".join(json.dumps(v.to_dict(), sort_keys=True) + "\n"
                                                 for v in result.variants), encoding="utf-8")
    return result
