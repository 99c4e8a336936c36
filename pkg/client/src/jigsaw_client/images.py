"""Pixel-exact PNG transport helpers.

Images cross the wire as base64 PNG; decoding yields (H, W, 3) uint8 numpy
buffers and re-encoding decodes back to the identical buffer.
"""

import base64
import io

import numpy as np
from PIL import Image


def png_bytes_to_pixels(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def pixels_to_png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def b64_to_pixels(b64: str) -> np.ndarray:
    return png_bytes_to_pixels(base64.b64decode(b64))
