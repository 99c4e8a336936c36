import numpy as np
import pytest

from jigsawenv.imageops import PixelImage


def gradient_image(w: int, h: int) -> PixelImage:
    """Smooth two-axis gradient; every pixel value distinct enough for
    neighbor-edge tests."""
    x = np.linspace(0, 255, w, dtype=np.float64)
    y = np.linspace(0, 255, h, dtype=np.float64)
    xx, yy = np.meshgrid(x, y)
    px = np.stack([xx, yy, (xx + yy) / 2], axis=-1)
    return PixelImage(px.astype(np.uint8))


def distinct_image(w: int, h: int) -> PixelImage:
    """Every pixel gets a unique RGB triple (needs w*h <= 2^24)."""
    idx = np.arange(w * h, dtype=np.uint32).reshape(h, w)
    px = np.stack([(idx >> 16) & 255, (idx >> 8) & 255, idx & 255], axis=-1)
    return PixelImage(px.astype(np.uint8))


def constant_image(w: int, h: int, value=(90, 120, 200)) -> PixelImage:
    return PixelImage(np.full((h, w, 3), value, dtype=np.uint8))


def noise_image(w: int, h: int, seed: int) -> PixelImage:
    rng = np.random.default_rng(seed)
    return PixelImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


@pytest.fixture
def grad64():
    return gradient_image(64, 64)


@pytest.fixture
def grad60():
    return gradient_image(60, 60)
