"""Bitmap text and emoji rendering from the bundled glyph sheet."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np
from PIL import Image

CHAR_W, CHAR_H = 6, 11
EMOJI_SIZE = 12
EMOJI_NAMES = ("smile", "heart", "star", "wink")


@lru_cache(maxsize=1)
def _sheet() -> np.ndarray:
    with resources.files("adcompliance.data").joinpath("glyphs.png").open("rb") as fh:
        return np.array(Image.open(fh).convert("1"), dtype=bool)


def text_mask(text: str) -> np.ndarray:
    """Boolean (CHAR_H, CHAR_W * len(text)) mask; unknown characters render as '?'."""
    sheet = _sheet()
    cells = []
    for ch in text:
        code = ord(ch)
        if not 32 <= code <= 126:
            code = ord("?")
        i = code - 32
        cells.append(sheet[0:CHAR_H, i * CHAR_W:(i + 1) * CHAR_W])
    if not cells:
        return np.zeros((CHAR_H, 0), dtype=bool)
    return np.concatenate(cells, axis=1)


def emoji_mask(index: int) -> np.ndarray:
    sheet = _sheet()
    i = index % len(EMOJI_NAMES)
    return sheet[CHAR_H:CHAR_H + EMOJI_SIZE, i * EMOJI_SIZE:(i + 1) * EMOJI_SIZE]


def upscale(mask: np.ndarray, factor: int) -> np.ndarray:
    if factor <= 1:
        return mask
    return np.repeat(np.repeat(mask, factor, axis=0), factor, axis=1)
