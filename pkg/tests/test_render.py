from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from conftest import make_raster
from crosswalk_vlm.georaster import PixelWindow
from crosswalk_vlm.render import (
    RenderStyle,
    blur_outside,
    decode_png,
    encode_png,
    gaussian_blur,
    gaussian_kernel,
    overlay_masks,
    render_blurred,
    render_overlaid,
    render_plain,
    render_vector_layer,
    road_mask,
)

BLUE = np.array([0, 0, 255], np.uint8)
RED = np.array([255, 0, 0], np.uint8)
WHITE = np.array([255, 255, 255], np.uint8)


def _is(img: np.ndarray, color: np.ndarray) -> np.ndarray:
    return np.all(img == color, axis=-1)


def _scipy_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    r = math.ceil(4 * sigma)
    return ndimage.gaussian_filter(img.astype(np.float64), sigma=(sigma, sigma, 0), radius=(r, r, 0), mode="reflect")


# plain ----------------------------------------------------------------------


def test_plain_constant():
    r = make_raster(np.full((300, 300, 3), 77, np.uint8))
    out = render_plain(r, PixelWindow(10, 20, 256))
    assert out.shape == (256, 256, 3)
    assert np.all(out == 77)


def test_plain_toy_crop():
    px = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    r = make_raster(px)
    np.testing.assert_array_equal(render_plain(r, PixelWindow(1, 2, 2)), px[2:4, 1:3])


def test_plain_is_a_copy(noise_raster):
    out = render_plain(noise_raster, PixelWindow(0, 0, 256))
    out[:] = 0
    assert noise_raster.pixels.any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 256), st.integers(0, 256), st.integers(0, 256), st.integers(0, 256))
def test_overlapping_windows_agree(ax, ay, bx, by):
    r = make_raster(np.random.default_rng(ax * 7 + by).integers(0, 256, (512, 512, 3), dtype=np.uint8))
    a = render_plain(r, PixelWindow(ax, ay, 256))
    b = render_plain(r, PixelWindow(bx, by, 256))
    x0, x1 = max(ax, bx), min(ax, bx) + 256
    y0, y1 = max(ay, by), min(ay, by) + 256
    if x0 < x1 and y0 < y1:
        np.testing.assert_array_equal(a[y0 - ay : y1 - ay, x0 - ax : x1 - ax], b[y0 - by : y1 - by, x0 - bx : x1 - bx])


# vector layer -------------------------------------------------------------------


def test_horizontal_line_rows():
    img = render_vector_layer([(20.0, 128.5), (200.0, 128.5)], 256)
    blue_rows, blue_cols = np.nonzero(_is(img, BLUE))
    assert set(blue_rows) == {127, 128, 129}
    assert blue_cols.min() == 18  # round cap reaches 1.5 px behind the start
    red_rows, red_cols = np.nonzero(_is(img, RED))
    assert abs(red_rows.mean() - 128) < 1e-9 and abs(red_cols.mean() - 199.5) < 1e-9
    # everything else is background
    assert np.all(_is(img, BLUE) | _is(img, RED) | _is(img, WHITE))


def test_vertical_line_columns():
    img = render_vector_layer([(64.5, 0.0), (64.5, 128.0)], 256)
    assert set(np.nonzero(_is(img, BLUE))[1]) == {63, 64, 65}


def test_blue_pixel_count_tracks_length_times_width():
    rng = np.random.default_rng(0)
    style = RenderStyle(dot_radius=1)
    checked = 0
    while checked < 300:
        x0, y0, x1, y1 = rng.uniform(8, 248, size=4)
        length = math.hypot(x1 - x0, y1 - y0)
        if length < 50:
            continue
        img = render_vector_layer([(x0, y0), (x1, y1)], 256, style)
        # brute-force count over every pixel of the finished image
        count = int(_is(img, BLUE).sum())
        expect = length * style.line_width
        assert abs(count - expect) <= 0.10 * expect, (x0, y0, x1, y1, count)
        checked += 1


def test_one_red_component():
    img = render_vector_layer([(0.0, 30.0), (90.0, 100.0), (128.0, 128.0)], 256)
    _, n = ndimage.label(_is(img, RED))
    assert n == 1


# overlaid -------------------------------------------------------------------------


def test_overlay_on_gray():
    r = make_raster(np.full((256, 256, 3), 128, np.uint8))
    line = [(0.0, 100.0), (128.0, 128.0)]
    img = render_overlaid(r, PixelWindow(0, 0, 256), line)
    vec = render_vector_layer(line, 256)
    drawn = ~_is(vec, WHITE)
    np.testing.assert_array_equal(img[drawn], vec[drawn])
    assert np.all(img[~drawn] == 128)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 256), st.floats(0, 256)), min_size=2, max_size=5))
def test_overlay_touches_only_drawn_pixels(poly):
    r = make_raster(np.random.default_rng(5).integers(0, 250, (256, 256, 3), dtype=np.uint8))
    w = PixelWindow(0, 0, 256)
    plain = render_plain(r, w)
    img = render_overlaid(r, w, poly)
    line, dot = overlay_masks(poly, RenderStyle(), 256)
    changed = np.any(img != plain, axis=-1)
    assert not np.any(changed & ~(line | dot))
    assert np.all(img[dot] == RED)
    _, n = ndimage.label(_is(img, RED))
    assert n == 1


# blur -----------------------------------------------------------------------------


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.5, 5.0, 7.3])
def test_kernel_normalized(sigma):
    k = gaussian_kernel(sigma)
    assert len(k) == 2 * math.ceil(4 * sigma) + 1
    assert abs(k.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(k, k[::-1])


@pytest.mark.parametrize("sigma", [1.0, 5.0])
def test_impulse_reproduces_kernel(sigma):
    k = gaussian_kernel(sigma)
    img = np.zeros((101, 101, 1))
    img[50, 50, 0] = 1.0
    out = gaussian_blur(img, sigma)[..., 0]
    r = len(k) // 2
    np.testing.assert_allclose(out[50 - r : 51 + r, 50 - r : 51 + r], np.outer(k, k), atol=1e-6)
    np.testing.assert_allclose(out[50, 50 - r : 51 + r], k[r] * k, atol=1e-6)


@pytest.mark.parametrize("sigma", [1.0, 2.5, 5.0, 3.3])
def test_blur_matches_scipy(sigma, rng):
    img = rng.integers(0, 256, (64, 80, 3)).astype(np.float64)
    np.testing.assert_allclose(gaussian_blur(img, sigma), _scipy_blur(img, sigma), atol=1e-9)


def test_blur_constant_is_constant():
    img = np.full((256, 256, 3), 173, np.uint8)
    mask = np.zeros((256, 256), bool)
    assert np.array_equal(blur_outside(img, mask, 5.0), img)


def test_blurred_mask_property(noise_raster):
    w = PixelWindow(128, 64, 256)
    line = [(0.0, 128.0), (128.0, 128.0)]
    others = [line, [(128.0, 0.0), (128.0, 128.0)]]
    style = RenderStyle()
    plain = render_plain(noise_raster, w)
    img = render_blurred(noise_raster, w, line, style, keep_sharp=others)
    mask = road_mask(others, style.road_buffer, 256)
    ln, dot = overlay_masks(line, style, 256)
    sharp = mask & ~(ln | dot)
    np.testing.assert_array_equal(img[sharp], plain[sharp])
    assert img[~mask].astype(float).var() < plain[~mask].astype(float).var()
    # outside the mask it is exactly the rounded oracle blur
    oracle = np.clip(np.rint(_scipy_blur(plain, style.blur_sigma)), 0, 255).astype(np.uint8)
    np.testing.assert_array_equal(img[~mask], oracle[~mask])


def test_blurred_keeps_overlay():
    r = make_raster(np.full((256, 256, 3), 90, np.uint8))
    img = render_blurred(r, PixelWindow(0, 0, 256), [(0.0, 128.5), (128.0, 128.5)])
    assert _is(img, BLUE).any() and _is(img, RED).any()


def test_style_invariants():
    with pytest.raises(ValueError):
        RenderStyle(line_width=0.5)
    with pytest.raises(ValueError):
        RenderStyle(dot_radius=0)
    with pytest.raises(ValueError):
        RenderStyle(blur_sigma=0)
    with pytest.raises(ValueError):
        RenderStyle(line_width=5, road_buffer=4)


def test_png_round_trip(rng):
    img = rng.integers(0, 256, (256, 256, 3), dtype=np.uint8)
    data = encode_png(img)
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    np.testing.assert_array_equal(decode_png(data), img)
    assert encode_png(img) == data
