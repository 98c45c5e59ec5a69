"""Patch renderers for the Plain, Separated, Overlaid and Blurred datasets.

All renderers are pure functions returning ``(size, size, 3)`` uint8 arrays.
Geometry is in window-local fractional pixel coordinates: pixel ``(col, row)``
covers ``[col, col+1) x [row, row+1)`` and its centre is ``(col+0.5, row+0.5)``.
Anti-aliasing is deliberately absent; a pixel is painted iff its centre lies
within the shape.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from PIL import Image

from .georaster import GeoRaster, PixelWindow

Point = tuple[float, float]


class DatasetConfig(str, enum.Enum):
    PLAIN = "plain"
    SEPARATED = "separated"
    OVERLAID = "overlaid"
    BLURRED = "blurred"

    @property
    def image_count(self) -> int:
        return 2 if self is DatasetConfig.SEPARATED else 1


@dataclass(frozen=True)
class RenderStyle:
    line_color: tuple[int, int, int] = (0, 0, 255)
    line_width: float = 3
    dot_color: tuple[int, int, int] = (255, 0, 0)
    dot_radius: float = 5
    blur_sigma: float = 5.0
    road_buffer: float = 20
    background: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if self.line_width < 1:
            raise ValueError("line_width must be >= 1")
        if self.dot_radius < 1:
            raise ValueError("dot_radius must be >= 1")
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be > 0")
        if self.road_buffer < self.line_width:
            raise ValueError("road_buffer must be >= line_width")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


# geometry -----------------------------------------------------------------


def _centres(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(size, dtype=np.float64) + 0.5
    return np.meshgrid(c, c)  # xx[row, col], yy[row, col]


def polyline_distance_field(poly: Sequence[Point], size: int) -> np.ndarray:
    """Distance from every pixel centre to the polyline."""
    xx, yy = _centres(size)
    best = np.full((size, size), np.inf)
    pts = [tuple(map(float, p)) for p in poly]
    if len(pts) == 1:
        return np.hypot(xx - pts[0][0], yy - pts[0][1])
    for (ax, ay), (bx, by) in zip(pts, pts[1:]):
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom == 0:
            t = np.zeros_like(xx)
        else:
            t = np.clip(((xx - ax) * dx + (yy - ay) * dy) / denom, 0.0, 1.0)
        np.minimum(best, np.hypot(xx - (ax + t * dx), yy - (ay + t * dy)), out=best)
    return best


def line_mask(poly: Sequence[Point], width: float, size: int) -> np.ndarray:
    return polyline_distance_field(poly, size) <= width / 2


def disc_mask(centre: Point, radius: float, size: int) -> np.ndarray:
    xx, yy = _centres(size)
    return np.hypot(xx - centre[0], yy - centre[1]) <= radius


def road_mask(centerlines: Sequence[Sequence[Point]], buffer: float, size: int) -> np.ndarray:
    """Pixels within ``buffer`` of any centerline; these stay sharp when blurring."""
    mask = np.zeros((size, size), dtype=bool)
    for poly in centerlines:
        mask |= polyline_distance_field(poly, size) <= buffer
    return mask


def overlay_masks(centerline: Sequence[Point], style: RenderStyle, size: int) -> tuple[np.ndarray, np.ndarray]:
    """(line pixels, dot pixels); the dot sits on the centerline's last vertex."""
    dot = disc_mask(centerline[-1], style.dot_radius, size)
    line = line_mask(centerline, style.line_width, size) & ~dot
    return line, dot


# gaussian -----------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(4 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    # "symmetric" mirrors about the edge including the edge sample (abc|cba)
    padded = np.pad(a, pad, mode="symmetric")
    n = a.shape[axis]
    out = np.zeros_like(a, dtype=np.float64)
    for i, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, float64 in and out, reflected borders."""
    k = gaussian_kernel(sigma)
    a = np.asarray(image, dtype=np.float64)
    return _convolve_axis(_convolve_axis(a, k, 0), k, 1)


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


# renderers ----------------------------------------------------------------


def render_plain(raster: GeoRaster, window: PixelWindow) -> np.ndarray:
    if not window.fits(raster.width_px, raster.height_px):
        raise ValueError(f"{window} exceeds raster {raster.width_px}x{raster.height_px}")
    return raster.pixels[window.y0 : window.y0 + window.size, window.x0 : window.x0 + window.size].copy()


def render_vector_layer(centerline: Sequence[Point], size: int, style: RenderStyle = RenderStyle()) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = style.background
    _paint_overlay(img, centerline, style)
    return img


def _paint_overlay(img: np.ndarray, centerline: Sequence[Point], style: RenderStyle) -> None:
    line, dot = overlay_masks(centerline, style, img.shape[0])
    img[line] = style.line_color
    img[dot] = style.dot_color


def render_overlaid(
    raster: GeoRaster, window: PixelWindow, centerline: Sequence[Point], style: RenderStyle = RenderStyle()
) -> np.ndarray:
    img = render_plain(raster, window)
    _paint_overlay(img, centerline, style)
    return img


def blur_outside(plain: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    blurred = _to_u8(gaussian_blur(plain, sigma))
    return np.where(mask[..., None], plain, blurred)


def render_blurred(
    raster: GeoRaster,
    window: PixelWindow,
    centerline: Sequence[Point],
    style: RenderStyle = RenderStyle(),
    keep_sharp: Sequence[Sequence[Point]] | None = None,
) -> np.ndarray:
    """Blur everything farther than ``road_buffer`` from the roads, then overlay.

    ``keep_sharp`` lists every centerline in the window that should stay
    unblurred (all approaches of the intersection); it defaults to the one
    being rendered.
    """
    plain = render_plain(raster, window)
    lines = list(keep_sharp) if keep_sharp else [centerline]
    mask = road_mask(lines, style.road_buffer, window.size)
    img = blur_outside(plain, mask, style.blur_sigma)
    _paint_overlay(img, centerline, style)
    return img


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"))
