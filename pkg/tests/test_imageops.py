"""Image primitives: grid resize, tiling, composition, crop, zoom, edges."""

import itertools

import numpy as np
import pytest

from conftest import constant_image, distinct_image, gradient_image
from jigsawenv import errors, imageops, perms
from jigsawenv.imageops import HORIZONTAL, VERTICAL, NormalizedBox, PixelImage


def nearest_multiple_oracle(d, m):
    """Independent modular-arithmetic rule: nearest multiple, ties up, min m."""
    lo = (d // m) * m
    hi = lo + m
    if lo == 0:
        return m
    if d - lo < hi - d:
        return lo
    return hi  # ties round up


# --- resize_to_multiple ---------------------------------------------------

def test_resize_noop_when_divisible():
    img = gradient_image(512, 512)
    out = imageops.resize_to_multiple(img, 2)
    assert out is img  # unchanged byte-for-byte


@pytest.mark.parametrize(
    "w,h,m,expected",
    [
        (511, 514, 3, (510, 513)),
        (5, 5, 2, (6, 6)),  # equidistant rounds up
        (100, 100, 3, (99, 99)),
        (1, 1, 4, (4, 4)),  # floor of m
    ],
)
def test_resize_nearest_multiple_rule(w, h, m, expected):
    out = imageops.resize_to_multiple(gradient_image(w, h), m)
    assert (out.width, out.height) == expected
    assert expected == (nearest_multiple_oracle(w, m), nearest_multiple_oracle(h, m))


def test_resize_rule_matches_oracle_broadly():
    for d in range(1, 50):
        for m in (2, 3, 4, 5):
            out = imageops.resize_to_multiple(gradient_image(d, 8 * m), m)
            assert out.width == nearest_multiple_oracle(d, m)


# --- split / compose --------------------------------------------------------

def test_split_checkerboard_quadrants():
    px = np.zeros((4, 4, 3), dtype=np.uint8)
    px[:2, 2:] = 60
    px[2:, :2] = 120
    px[2:, 2:] = 200
    tiles = imageops.split_tiles(PixelImage(px), 2)
    values = [int(t.pixels[0, 0, 0]) for t in tiles.tiles]
    assert values == [0, 60, 120, 200]
    for t in tiles.tiles:
        assert np.all(t.pixels == t.pixels[0, 0])


def test_split_not_divisible():
    with pytest.raises(errors.NotDivisible):
        imageops.split_tiles(gradient_image(63, 64), 2)


def test_split_row_major_index_arithmetic():
    # On a 6x6 image with unique pixels, 1-based tile 5 of a 3x3 grid is the
    # center: source rows 2..3 and cols 2..3 (0-based).
    img = distinct_image(6, 6)
    tiles = imageops.split_tiles(img, 3)
    center = tiles.tiles[4]
    assert np.array_equal(center.pixels, img.pixels[2:4, 2:4])


def test_split_compose_round_trip_byte_exact():
    img = distinct_image(12, 12)
    for m in (2, 3):
        tiles = imageops.split_tiles(img, m)
        out = imageops.compose_state_image(tiles, perms.identity_arrangement(m * m))
        assert out.same_pixels(img)


def test_compose_swap_moves_quadrants():
    img = distinct_image(8, 8)
    tiles = imageops.split_tiles(img, 2)
    swapped = imageops.compose_state_image(tiles, ("B", "A", "C", "D"))
    assert np.array_equal(swapped.pixels[:4, :4], img.pixels[:4, 4:])
    assert np.array_equal(swapped.pixels[:4, 4:], img.pixels[:4, :4])
    assert np.array_equal(swapped.pixels[4:], img.pixels[4:])


def test_compose_equivariance_under_slot_permutation():
    # Permuting slots after composition equals composing the permuted state.
    rng = np.random.default_rng(0)
    img = distinct_image(12, 12)
    m = 2
    tiles = imageops.split_tiles(img, m)
    labels = perms.identity_arrangement(m * m)
    for _ in range(20):
        s1 = tuple(rng.permutation(list(labels)))
        slot_perm = list(rng.permutation(m * m))
        composed = imageops.compose_state_image(tiles, s1)
        rearranged_tiles = imageops.split_tiles(composed, m)
        # rearranged_tiles are in slot order of s1; applying slot_perm to them
        # must equal composing s2 = s1 re-indexed by slot_perm.
        s2 = tuple(s1[p] for p in slot_perm)
        direct = imageops.compose_state_image(tiles, s2)
        via_tiles = np.concatenate(
            [
                np.concatenate(
                    [rearranged_tiles.tiles[slot_perm[r * m + c]].pixels for c in range(m)],
                    axis=1,
                )
                for r in range(m)
            ],
            axis=0,
        )
        assert np.array_equal(direct.pixels, via_tiles)


def test_compose_then_split_then_compose_identity():
    img = distinct_image(12, 12)
    tiles = imageops.split_tiles(img, 2)
    state = ("C", "A", "D", "B")
    once = imageops.compose_state_image(tiles, state)
    again = imageops.compose_state_image(
        imageops.split_tiles(once, 2), perms.identity_arrangement(4)
    )
    assert once.same_pixels(again)


# --- crop -------------------------------------------------------------------

def test_crop_identity_box(grad64):
    out = imageops.crop_region(grad64, NormalizedBox(0, 0, 1, 1))
    assert out.same_pixels(grad64)


def test_crop_lower_left_quadrant():
    img = distinct_image(100, 100)
    out = imageops.crop_region(img, NormalizedBox(0.0, 0.5, 0.5, 1.0))
    assert (out.width, out.height) == (50, 50)
    assert np.array_equal(out.pixels, img.pixels[50:100, 0:50])


def test_degenerate_box_rejected_at_construction():
    with pytest.raises(errors.InvalidBox):
        NormalizedBox(0.3, 0.3, 0.3, 0.8)
    with pytest.raises(errors.InvalidBox):
        NormalizedBox(0.5, 0.2, 0.4, 0.8)
    with pytest.raises(errors.InvalidBox):
        NormalizedBox(-0.1, 0.0, 0.5, 0.5)


def test_crop_rounding_collapse():
    img = gradient_image(10, 10)
    with pytest.raises(errors.DegenerateBox):
        imageops.crop_region(img, NormalizedBox(0.41, 0.2, 0.44, 0.8))


# --- zoom ---------------------------------------------------------------------

def test_zoom_examples(grad64):
    assert imageops.zoom_image(grad64, 1.0) is grad64
    out = imageops.zoom_image(gradient_image(100, 80), 1.5)
    assert (out.width, out.height) == (150, 120)
    with pytest.raises(errors.NonPositiveFactor):
        imageops.zoom_image(grad64, 0)
    with pytest.raises(errors.NonPositiveFactor):
        imageops.zoom_image(grad64, -2.0)


def test_zoom_minimum_one_pixel():
    out = imageops.zoom_image(gradient_image(4, 4), 0.01)
    assert (out.width, out.height) == (1, 1)


def test_cap_longest_side():
    img = gradient_image(200, 100)
    assert imageops.cap_longest_side(img, 400) is img
    capped = imageops.cap_longest_side(img, 100)
    assert (capped.width, capped.height) == (100, 50)


# --- edge dissimilarity ----------------------------------------------------------

def test_edge_zero_for_continuation_of_constant():
    img = constant_image(8, 8)
    assert imageops.edge_dissimilarity(img, img, HORIZONTAL) == 0.0
    assert imageops.edge_dissimilarity(img, img, VERTICAL) == 0.0


def test_edge_black_vs_white_is_255_squared():
    black = constant_image(4, 4, (0, 0, 0))
    white = constant_image(4, 4, (255, 255, 255))
    assert imageops.edge_dissimilarity(black, white, HORIZONTAL) == 255.0**2
    assert imageops.edge_dissimilarity(black, white, VERTICAL) == 255.0**2


def test_edge_length_mismatch():
    with pytest.raises(errors.EdgeLengthMismatch):
        imageops.edge_dissimilarity(constant_image(4, 4), constant_image(4, 6), HORIZONTAL)


def test_true_neighbors_beat_non_neighbors_on_gradient():
    # Split a smooth gradient and compare every horizontally adjacent pair:
    # the true neighbor must always cost strictly less than any other tile.
    img = gradient_image(60, 60)
    tiles = imageops.split_tiles(img, 3).tiles
    for r in range(3):
        for c in range(2):
            left = tiles[r * 3 + c]
            true_right = tiles[r * 3 + c + 1]
            true_cost = imageops.edge_dissimilarity(left, true_right, HORIZONTAL)
            for other_index, other in enumerate(tiles):
                if other_index == r * 3 + c + 1:
                    continue
                other_cost = imageops.edge_dissimilarity(left, other, HORIZONTAL)
                assert true_cost < other_cost


# --- codec determinism ------------------------------------------------------------

def test_png_round_trip_and_determinism(grad64):
    data1 = grad64.to_png_bytes()
    data2 = grad64.to_png_bytes()
    assert data1 == data2
    back = imageops.from_png_bytes(data1)
    assert back.same_pixels(grad64)


def test_ingest_normalizes_modes(tmp_path):
    from PIL import Image

    gray = Image.new("L", (6, 6), 128)
    rgba = Image.new("RGBA", (6, 6), (10, 20, 30, 40))
    for pil in (gray, rgba):
        img = imageops.from_pil(pil)
        assert img.pixels.shape == (6, 6, 3)


def test_operations_deterministic():
    a = imageops.zoom_image(gradient_image(33, 47), 1.7)
    b = imageops.zoom_image(gradient_image(33, 47), 1.7)
    assert a.same_pixels(b)
    r1 = imageops.resize_to_multiple(gradient_image(17, 19), 3)
    r2 = imageops.resize_to_multiple(gradient_image(17, 19), 3)
    assert r1.same_pixels(r2)
