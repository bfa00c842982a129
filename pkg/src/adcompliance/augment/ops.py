"""The eleven robustness alterations over 8-bit RGB rasters.

Pixel math is integer-only except the Gaussian draw itself, so outputs are
bit-reproducible. Every random choice comes from the SplitMix64 stream of
the seed passed in.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import glyphs
from .prng import SplitMix64, block, derive_seed, unit_floats

Rect = tuple[float, float, float, float]  # normalized x0, y0, x1, y1


class AugmentationKind(str, Enum):
    BRIGHT = "Bright"
    BLURRED = "Blurred"
    DIM = "Dim"
    GRAYSCALE = "Grayscale"
    OCCLUDED = "Occluded"
    ROTATED = "Rotated"
    SHARP = "Sharp"
    GAUSSIAN_NOISE = "Gaussian Noise"
    SALT_PEPPER = "Salt-and-Pepper Noise"
    EMOJI_OVERLAY = "Emoji Overlay"
    PROFANE_TEXT = "Profane Text"

    @property
    def index(self) -> int:
        return list(AugmentationKind).index(self)

    @property
    def slug(self) -> str:
        return self.value.lower().replace("-and-", "_").replace(" ", "_").replace("-", "_")

    @classmethod
    def parse(cls, text: str) -> "AugmentationKind":
        for kind in cls:
            if text in (kind.value, kind.name, kind.slug):
                return kind
        raise ValueError(f"unknown augmentation kind {text!r}")


class AugmentError(Exception):
    pass


class MissingMask(AugmentError):
    pass


class UnsupportedFormat(AugmentError):
    pass


@dataclass(frozen=True)
class AugmentParams:
    delta: int = 60
    blur_radius: int = 3
    sharp_radius: int = 2
    sharp_amount: float = 1.0
    max_angle: float = 30.0
    noise_sigma: float = 15.0
    flip_probability: float = 0.02
    emoji_count: int = 3
    emoji_color: tuple[int, int, int] = (255, 200, 0)
    occlusion_fill: tuple[int, int, int] = (128, 128, 128)

    def __post_init__(self):
        if not 0.0 <= self.max_angle <= 30.0:
            raise ValueError("max_angle must lie in [0, 30]")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")


DEFAULT_PARAMS = AugmentParams()


@dataclass(frozen=True)
class AugmentedImage:
    source_id: str
    kind: AugmentationKind
    seed: int
    pixels: np.ndarray


def load_image(source: str | Path | bytes) -> np.ndarray:
    try:
        if isinstance(source, (bytes, bytearray)):
            img = Image.open(io.BytesIO(source))
        else:
            img = Image.open(source)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise UnsupportedFormat(str(exc)) from None
    return np.array(img.convert("RGB"), dtype=np.uint8)


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), "RGB").save(buf, format="PNG", optimize=False,
                                                                              compress_level=6)
    return buf.getvalue()


def _check(image: np.ndarray) -> np.ndarray:
    if not isinstance(image, np.ndarray) or image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise UnsupportedFormat("expected an HxWx3 uint8 RGB array")
    return image


def _clamp(values: np.ndarray) -> np.ndarray:
    return np.clip(values, 0, 255).astype(np.uint8)


def shift_intensity(image: np.ndarray, delta: int) -> np.ndarray:
    return _clamp(image.astype(np.int16) + delta)


def grayscale(image: np.ndarray) -> np.ndarray:
    img = image.astype(np.int32)
    luma = (299 * img[..., 0] + 587 * img[..., 1] + 114 * img[..., 2] + 500) // 1000
    return np.repeat(luma[..., None], 3, axis=2).astype(np.uint8)


def box_blur(image: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window with edge replication, rounded half up."""
    if radius <= 0:
        return image.copy()
    k = 2 * radius + 1
    padded = np.pad(image.astype(np.int64), ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0), (0, 0)))
    h, w = image.shape[:2]
    total = c[k:k + h, k:k + w] - c[0:h, k:k + w] - c[k:k + h, 0:w] + c[0:h, 0:w]
    n = k * k
    return ((total + n // 2) // n).astype(np.uint8)


def unsharp(image: np.ndarray, radius: int, amount: float) -> np.ndarray:
    milli = int(round(amount * 1000))
    img = image.astype(np.int64)
    detail = img - box_blur(image, radius).astype(np.int64)
    return _clamp(img + (detail * milli + 500) // 1000)


def rotation_angle_tenths(seed: int, max_angle: float = 30.0) -> int:
    """Rotation in tenths of a degree, uniform over [-max_angle, +max_angle]."""
    limit = int(round(max_angle * 10))
    return SplitMix64(derive_seed(seed, "rotate")).below(2 * limit + 1) - limit


def rotation_angle(seed: int, max_angle: float = 30.0) -> float:
    return rotation_angle_tenths(seed, max_angle) / 10.0


def rotate(image: np.ndarray, angle_tenths: int) -> np.ndarray:
    """Counter-clockwise nearest-neighbour rotation onto an expanded black canvas (Q16 fixed point)."""
    one = 1 << 16
    theta = math.radians(angle_tenths / 10.0)
    c = int(round(math.cos(theta) * one))
    s = int(round(math.sin(theta) * one))
    h, w = image.shape[:2]
    new_w = -(-(abs(c) * w + abs(s) * h) // one)
    new_h = -(-(abs(s) * w + abs(c) * h) // one)
    ys, xs = np.mgrid[0:new_h, 0:new_w].astype(np.int64)
    dx2 = 2 * xs + 1 - new_w
    dy2 = 2 * ys + 1 - new_h
    sx = (c * dx2 - s * dy2 + w * one) // (2 * one)
    sy = (s * dx2 + c * dy2 + h * one) // (2 * one)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros((new_h, new_w, 3), dtype=np.uint8)
    out[valid] = image[sy[valid], sx[valid]]
    return out


def gaussian_noise(image: np.ndarray, seed: int, sigma: float) -> np.ndarray:
    n = image.size
    m = (n + 1) // 2
    sub = derive_seed(seed, "gaussian")
    u1 = unit_floats(sub, m, 0)
    u2 = unit_floats(sub, m, m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m, dtype=np.float64)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    noise = np.rint(sigma * z[:n]).astype(np.int64).reshape(image.shape)
    return _clamp(image.astype(np.int64) + noise)


def salt_pepper(image: np.ndarray, seed: int, probability: float) -> np.ndarray:
    h, w = image.shape[:2]
    draws = block(derive_seed(seed, "salt_pepper"), h * w).reshape(h, w)
    u = (draws >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    flip = u < probability
    salt = (draws & np.uint64(1)) == np.uint64(1)
    out = image.copy()
    out[flip & salt] = 255
    out[flip & ~salt] = 0
    return out


def _paint(out: np.ndarray, mask: np.ndarray, x: int, y: int, color) -> None:
    h, w = out.shape[:2]
    mh = min(mask.shape[0], h - y)
    mw = min(mask.shape[1], w - x)
    if mh <= 0 or mw <= 0:
        return
    region = out[y:y + mh, x:x + mw]
    region[mask[:mh, :mw]] = color


def emoji_overlay(image: np.ndarray, seed: int, count: int, color) -> np.ndarray:
    h, w = image.shape[:2]
    rng = SplitMix64(derive_seed(seed, "emoji"))
    factor = max(1, min(h, w) // 48)
    out = image.copy()
    for _ in range(count):
        glyph = glyphs.upscale(glyphs.emoji_mask(rng.below(len(glyphs.EMOJI_NAMES))), factor)
        gh, gw = glyph.shape
        x = rng.below(max(1, w - gw + 1))
        y = rng.below(max(1, h - gh + 1))
        _paint(out, glyph, x, y, color)
    return out


def profane_text(image: np.ndarray, seed: int, lexicon: Sequence[str]) -> np.ndarray:
    if not lexicon:
        raise ValueError("profane lexicon must be non-empty")
    h, w = image.shape[:2]
    rng = SplitMix64(derive_seed(seed, "profane"))
    phrase = lexicon[rng.below(len(lexicon))]
    mask = glyphs.text_mask(phrase)
    qw, qh = max(1, w // 2), max(1, h // 2)
    factor = max(1, min((qw - 4) // max(1, mask.shape[1]), (qh - 4) // glyphs.CHAR_H))
    mask = glyphs.upscale(mask, factor)
    pad = 2 * factor
    box_h, box_w = mask.shape[0] + 2 * pad, mask.shape[1] + 2 * pad
    x0 = rng.below(max(1, qw - box_w + 1))
    y0 = rng.below(max(1, qh - box_h + 1))
    out = image.copy()
    out[y0:y0 + box_h, x0:x0 + box_w] = 255
    _paint(out, mask, min(x0 + pad, w), min(y0 + pad, h), (0, 0, 0))
    return out


def occlude(image: np.ndarray, rect: Rect, fill) -> np.ndarray:
    x0, y0, x1, y1 = rect
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ValueError(f"mask rectangle must be normalized with x0<x1, y0<y1: {rect}")
    h, w = image.shape[:2]
    out = image.copy()
    out[int(math.floor(y0 * h)):int(math.ceil(y1 * h)), int(math.floor(x0 * w)):int(math.ceil(x1 * w))] = fill
    return out


def apply(image: np.ndarray, kind: AugmentationKind, seed: int, *, mask: Rect | None = None,
          lexicon: Sequence[str] = (), params: AugmentParams = DEFAULT_PARAMS) -> np.ndarray:
    image = _check(image)
    if kind is AugmentationKind.BRIGHT:
        return shift_intensity(image, params.delta)
    if kind is AugmentationKind.DIM:
        return shift_intensity(image, -params.delta)
    if kind is AugmentationKind.BLURRED:
        return box_blur(image, params.blur_radius)
    if kind is AugmentationKind.GRAYSCALE:
        return grayscale(image)
    if kind is AugmentationKind.OCCLUDED:
        if mask is None:
            raise MissingMask("Occluded needs a mask rectangle over the logo region")
        return occlude(image, mask, params.occlusion_fill)
    if kind is AugmentationKind.ROTATED:
        return rotate(image, rotation_angle_tenths(seed, params.max_angle))
    if kind is AugmentationKind.SHARP:
        return unsharp(image, params.sharp_radius, params.sharp_amount)
    if kind is AugmentationKind.GAUSSIAN_NOISE:
        return gaussian_noise(image, seed, params.noise_sigma)
    if kind is AugmentationKind.SALT_PEPPER:
        return salt_pepper(image, seed, params.flip_probability)
    if kind is AugmentationKind.EMOJI_OVERLAY:
        return emoji_overlay(image, seed, params.emoji_count, params.emoji_color)
    if kind is AugmentationKind.PROFANE_TEXT:
        return profane_text(image, seed, lexicon)
    raise ValueError(f"unhandled kind {kind}")


def variant_seed(seed: int, kind: AugmentationKind) -> int:
    return seed ^ kind.index


def suite(image: np.ndarray, seed: int, mask: Rect | None, lexicon: Sequence[str], *, source_id: str = "",
          params: AugmentParams = DEFAULT_PARAMS) -> list[AugmentedImage]:
    """All eleven variants of one image, each reproducible from ``seed ^ kind.index``."""
    if mask is None:
        raise MissingMask("the suite includes Occluded, which needs a mask rectangle")
    if not lexicon:
        raise ValueError("profane lexicon must be non-empty")
    out = []
    for kind in AugmentationKind:
        s = variant_seed(seed, kind)
        out.append(AugmentedImage(source_id, kind, s, apply(image, kind, s, mask=mask, lexicon=lexicon,
                                                            params=params)))
    return out


def default_lexicon() -> list[str]:
    from importlib import resources

    text = resources.files("adcompliance.data").joinpath("profane_lexicon.txt").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
