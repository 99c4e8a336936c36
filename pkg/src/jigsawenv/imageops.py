"""Pixel-level primitives: resize-to-grid, tiling, composition, crop, zoom.

Images are numpy uint8 arrays of shape (H, W, 3) wrapped in PixelImage.
Every operation is a pure function of its inputs and resampling always uses
bilinear interpolation, so identical inputs give byte-identical pixels and
recorded episodes replay exactly. Equality checks are defined on decoded
pixel buffers, never on PNG container bytes.
"""

import io
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from .errors import (
    DegenerateBox,
    EdgeLengthMismatch,
    EmptyImage,
    InvalidBox,
    NonPositiveFactor,
    NotDivisible,
    SizeMismatch,
    UndecodableImage,
)
from .perms import labels_for


@dataclass(frozen=True)
class PixelImage:
    """RGB image; pixels has shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise EmptyImage(f"expected (H, W, 3) uint8 array, got {p.shape} {p.dtype}")
        if p.shape[0] == 0 or p.shape[1] == 0:
            raise EmptyImage("zero-sized image")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: "PixelImage") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGB")

    def to_png_bytes(self) -> bytes:
        # Fixed encoder settings so the same pixels always produce the
        # same container bytes within one environment.
        buf = io.BytesIO()
        self.to_pil().save(buf, format="PNG", compress_level=6, optimize=False)
        return buf.getvalue()


def from_pil(img: Image.Image) -> PixelImage:
    """Ingest any PIL image: alpha is dropped, grayscale replicated to RGB."""
    return PixelImage(np.asarray(img.convert("RGB"), dtype=np.uint8))


def from_png_bytes(data: bytes) -> PixelImage:
    try:
        return from_pil(Image.open(io.BytesIO(data)))
    except Exception as exc:
        raise UndecodableImage(str(exc)) from exc


def load_image(path) -> PixelImage:
    try:
        with Image.open(path) as img:
            return from_pil(img)
    except (OSError, ValueError) as exc:
        raise UndecodableImage(f"{path}: {exc}") from exc


def save_png(img: PixelImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(img.to_png_bytes())


@dataclass(frozen=True)
class TileSet:
    """m^2 equally sized tiles; the meaning of the order is the caller's
    (split_tiles yields true row-major position order, episodes re-order
    into label order)."""

    m: int
    tiles: Tuple[PixelImage, ...]
    tile_w: int = field(init=False)
    tile_h: int = field(init=False)

    def __post_init__(self):
        if len(self.tiles) != self.m * self.m:
            raise SizeMismatch(f"expected {self.m * self.m} tiles, got {len(self.tiles)}")
        w, h = self.tiles[0].width, self.tiles[0].height
        for t in self.tiles:
            if t.width != w or t.height != h:
                raise SizeMismatch("tiles differ in size")
        object.__setattr__(self, "tile_w", w)
        object.__setattr__(self, "tile_h", h)


@dataclass(frozen=True)
class NormalizedBox:
    """Fractional crop box; 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name, v in (("x1", self.x1), ("y1", self.y1), ("x2", self.x2), ("y2", self.y2)):
            if not 0.0 <= v <= 1.0:
                raise InvalidBox(f"{name}={v} outside [0, 1]")
        if not self.x1 < self.x2:
            raise InvalidBox(f"x1={self.x1} must be < x2={self.x2}")
        if not self.y1 < self.y2:
            raise InvalidBox(f"y1={self.y1} must be < y2={self.y2}")

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def _round_half_up(x: float) -> int:
    # Deterministic round-half-away-from-zero for nonnegative values;
    # Python's round() is half-even, which would make replay rules murky.
    return int(np.floor(x + 0.5))


def _nearest_multiple(d: int, m: int) -> int:
    return max(m, ((d + m // 2) // m) * m)


def _bilinear_resize(img: PixelImage, w: int, h: int) -> PixelImage:
    if (w, h) == (img.width, img.height):
        return img
    return from_pil(img.to_pil().resize((w, h), Image.BILINEAR))


def resize_to_multiple(img: PixelImage, m: int) -> PixelImage:
    """Bilinearly resize so both dimensions are multiples of m.

    Each dimension is rounded to its nearest multiple of m (ties round up,
    minimum m). Already-divisible images are returned unchanged.
    """
    if m < 2:
        raise NotDivisible(f"grid order must be >= 2, got {m}")
    w = _nearest_multiple(img.width, m)
    h = _nearest_multiple(img.height, m)
    if (w, h) == (img.width, img.height):
        return img
    return _bilinear_resize(img, w, h)


def split_tiles(img: PixelImage, m: int) -> TileSet:
    """Cut into an m x m grid of tiles in true row-major order."""
    if img.width % m or img.height % m:
        raise NotDivisible(f"{img.width}x{img.height} not divisible by m={m}")
    tw, th = img.width // m, img.height // m
    tiles = []
    for r in range(m):
        for c in range(m):
            block = img.pixels[r * th : (r + 1) * th, c * tw : (c + 1) * tw]
            tiles.append(PixelImage(np.ascontiguousarray(block)))
    return TileSet(m=m, tiles=tuple(tiles))


def compose_state_image(tiles: TileSet, state: Sequence[str]) -> PixelImage:
    """Render the grid with slot k showing the tile named by state[k].

    Label semantics are positional: the i-th label of the canonical label
    set names tiles.tiles[i].
    """
    m = tiles.m
    if len(state) != m * m:
        raise SizeMismatch(f"state has {len(state)} slots, grid needs {m * m}")
    index = {label: i for i, label in enumerate(labels_for(m * m))}
    out = np.empty((tiles.tile_h * m, tiles.tile_w * m, 3), dtype=np.uint8)
    for k, label in enumerate(state):
        if label not in index:
            raise SizeMismatch(f"unknown tile label {label!r}")
        r, c = divmod(k, m)
        tile = tiles.tiles[index[label]]
        out[
            r * tiles.tile_h : (r + 1) * tiles.tile_h,
            c * tiles.tile_w : (c + 1) * tiles.tile_w,
        ] = tile.pixels
    return PixelImage(out)


def crop_region(img: PixelImage, box: NormalizedBox) -> PixelImage:
    """Crop the pixel rectangle [round(x1*W), round(x2*W)) x [round(y1*H), round(y2*H))."""
    px1 = _round_half_up(box.x1 * img.width)
    px2 = _round_half_up(box.x2 * img.width)
    py1 = _round_half_up(box.y1 * img.height)
    py2 = _round_half_up(box.y2 * img.height)
    if px2 - px1 < 1 or py2 - py1 < 1:
        raise DegenerateBox(
            f"box {box.as_list()} collapses to {px2 - px1}x{py2 - py1} pixels"
        )
    return PixelImage(np.ascontiguousarray(img.pixels[py1:py2, px1:px2]))


def zoom_image(img: PixelImage, factor: float) -> PixelImage:
    """Scale both dimensions by factor (nearest rounding, minimum 1 px)."""
    if not factor > 0:
        raise NonPositiveFactor(f"zoom factor must be > 0, got {factor}")
    w = max(1, _round_half_up(img.width * factor))
    h = max(1, _round_half_up(img.height * factor))
    return _bilinear_resize(img, w, h)


def cap_longest_side(img: PixelImage, cap: int) -> PixelImage:
    """Downscale so max(width, height) <= cap; no-op when already within."""
    longest = max(img.width, img.height)
    if longest <= cap:
        return img
    scale = cap / longest
    w = max(1, _round_half_up(img.width * scale))
    h = max(1, _round_half_up(img.height * scale))
    return _bilinear_resize(img, w, h)


HORIZONTAL = "horizontal"  # right edge of a against left edge of b
VERTICAL = "vertical"      # bottom edge of a against top edge of b


def edge_dissimilarity(a: PixelImage, b: PixelImage, side: str) -> float:
    """Mean squared difference between abutting 1-pixel border strips.

    side=horizontal compares a's rightmost column with b's leftmost column;
    side=vertical compares a's bottom row with b's top row. Zero iff the
    strips are identical.
    """
    if side == HORIZONTAL:
        strip_a = a.pixels[:, -1, :]
        strip_b = b.pixels[:, 0, :]
    elif side == VERTICAL:
        strip_a = a.pixels[-1, :, :]
        strip_b = b.pixels[0, :, :]
    else:
        raise ValueError(f"side must be {HORIZONTAL!r} or {VERTICAL!r}, got {side!r}")
    if strip_a.shape != strip_b.shape:
        raise EdgeLengthMismatch(
            f"edge lengths differ: {strip_a.shape[0]} vs {strip_b.shape[0]}"
        )
    diff = strip_a.astype(np.float64) - strip_b.astype(np.float64)
    return float(np.mean(diff * diff))
