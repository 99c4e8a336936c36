"""Bundled synthetic corpus: gradients, text-rendered cards, noise textures.

Generated on demand with a fixed seed so every test runs without external
downloads. Category directory names double as manifest category tags.
"""

import os
import random
from typing import Dict, List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .imageops import PixelImage, from_pil, save_png

CATEGORIES = ("high_res_search", "text_structured", "dense_real_world")


def gradient_card(w: int, h: int, rng: random.Random) -> PixelImage:
    """Smooth two-corner gradient with a random orientation and palette."""
    c0 = np.array([rng.randrange(256) for _ in range(3)], dtype=np.float64)
    c1 = np.array([rng.randrange(256) for _ in range(3)], dtype=np.float64)
    c2 = np.array([rng.randrange(256) for _ in range(3)], dtype=np.float64)
    x = np.linspace(0.0, 1.0, w)[None, :, None]
    y = np.linspace(0.0, 1.0, h)[:, None, None]
    if rng.random() < 0.5:
        x, y = y.transpose(1, 0, 2), x.transpose(1, 0, 2)
    px = c0 * (1 - x) * (1 - y) + c1 * x + c2 * y * (1 - x)
    return PixelImage(np.clip(px, 0, 255).astype(np.uint8))


def text_card(w: int, h: int, rng: random.Random) -> PixelImage:
    """Table-like card: soft background, ruled lines, digit strings."""
    base = gradient_card(w, h, rng)
    img = base.to_pil()
    draw = ImageDraw.Draw(img)
    ink = tuple(rng.randrange(60) for _ in range(3))
    rows = rng.randint(3, 5)
    cols = rng.randint(2, 4)
    for r in range(1, rows):
        y = r * h // rows
        draw.line([(0, y), (w, y)], fill=ink, width=1)
    for c in range(1, cols):
        x = c * w // cols
        draw.line([(x, 0), (x, h)], fill=ink, width=1)
    for r in range(rows):
        for c in range(cols):
            text = str(rng.randint(10, 9999))
            draw.text(
                (c * w // cols + 3, r * h // rows + 2), text, fill=ink
            )
    return from_pil(img)


def noise_card(w: int, h: int, rng: random.Random) -> PixelImage:
    """Dense unstructured texture (per-pixel uniform noise)."""
    np_rng = np.random.default_rng(rng.randrange(2**32))
    return PixelImage(np_rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


_MAKERS = {
    "high_res_search": gradient_card,
    "text_structured": text_card,
    "dense_real_world": noise_card,
}


def build_synthetic_corpus(
    out_dir: str,
    per_category: int = 34,
    seed: int = 0,
    size: Tuple[int, int] = (96, 96),
) -> Dict[str, List[str]]:
    """Write per_category PNGs into one subdirectory per category; returns
    the written paths keyed by category."""
    w, h = size
    written: Dict[str, List[str]] = {}
    for category in CATEGORIES:
        cat_dir = os.path.join(out_dir, category)
        os.makedirs(cat_dir, exist_ok=True)
        rng = random.Random(f"{seed}:{category}")
        paths = []
        for k in range(per_category):
            img = _MAKERS[category](w, h, rng)
            path = os.path.join(cat_dir, f"{category}_{k:03d}.png")
            save_png(img, path)
            paths.append(path)
        written[category] = paths
    return written
