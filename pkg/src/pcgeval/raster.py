"""Render standing blocks as black rectangles on a white 1024x1024 capture."""

from __future__ import annotations

import io
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .level import LevelLayout

SIZE = 1024
MARGIN = 100
BLACK = 0
WHITE = 255


def cell_scale(layout: LevelLayout, size: int = SIZE, margin: int = MARGIN) -> Fraction:
    """Pixels per grid cell (41.2 for the default 20x16 grid)."""
    cfg = layout.config
    return Fraction(size - 2 * margin, max(cfg.width, cfg.height))


def _round(v: Fraction) -> int:
    # half away from zero; all pixel coordinates are non-negative
    return math.floor(v + Fraction(1, 2))


def block_rect(block, scale: Fraction, size: int = SIZE, margin: int = MARGIN) -> tuple[int, int, int, int]:
    """(col0, col1, row0, row1) half-open pixel bounds of a block."""
    bottom = size - margin
    col0 = _round(margin + block.x * scale)
    col1 = _round(margin + block.right * scale)
    row0 = _round(bottom - (block.y + block.height) * scale)
    row1 = _round(bottom - block.y * scale)
    return col0, col1, row0, row1


def render(layout: LevelLayout, moving: Iterable[int] = (), size: int = SIZE, margin: int = MARGIN) -> np.ndarray:
    """Return a uint8 image (rows x cols) with every non-moving block drawn black.

    Grid x in [0, W] maps onto pixel columns [margin, size - margin]; grid
    y = 0 sits on the bottom edge of the content area and y grows upward.
    """
    moving = set(moving)
    img = np.full((size, size), WHITE, dtype=np.uint8)
    scale = cell_scale(layout, size, margin)
    for b in layout.blocks:
        if b.id in moving:
            continue
        c0, c1, r0, r1 = block_rect(b, scale, size, margin)
        img[r0:r1, c0:c1] = BLACK
    return img


def write_image(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG")


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L"), dtype=np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()
