"""Georeferenced RGB rasters: GeoTIFF loading, pixel/map transforms, tiling."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile

from .errors import (
    MissingGeoreference,
    ProjectionMismatch,
    ProjectionNotProjected,
    UnsupportedEncoding,
)
from .utm import ProjectedPoint, parse_utm_epsg

# GeoTIFF tag and key ids
TAG_PIXEL_SCALE = 33550
TAG_TIEPOINT = 33922
TAG_TRANSFORMATION = 34264
TAG_GEOKEYS = 34735
KEY_MODEL_TYPE = 1024
KEY_RASTER_TYPE = 1025
KEY_PROJECTED_CRS = 3072

MODEL_PROJECTED = 1
MODEL_GEOGRAPHIC = 2
RASTER_PIXEL_IS_POINT = 2

# none, LZW, deflate, adobe deflate, packbits
SUPPORTED_COMPRESSION = {1, 5, 8, 32946, 32773}


@dataclass(frozen=True)
class PixelWindow:
    x0: int
    y0: int
    size: int

    def __post_init__(self) -> None:
        if self.size <= 0 or self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"invalid window {self}")

    def fits(self, width: int, height: int) -> bool:
        return self.x0 + self.size <= width and self.y0 + self.size <= height

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.size]


@dataclass(frozen=True, eq=False)
class GeoRaster:
    """An immutable north-up RGB raster in a UTM projection.

    ``pixels`` has shape ``(height, width, 3)`` and dtype uint8 and is marked
    read-only. ``origin`` is the map coordinate of the upper-left corner of
    pixel (0, 0); ``pixel_size`` is ``(x, y)`` in metres, both positive.
    """

    pixels: np.ndarray
    pixel_size: tuple[float, float]
    origin: tuple[float, float]
    epsg: int
    digest: str = field(default="")

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"pixels must be (H, W, 3) uint8, got {px.shape} {px.dtype}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("raster must be non-empty")
        if not (self.pixel_size[0] > 0 and self.pixel_size[1] > 0):
            raise ValueError(f"pixel size must be positive, got {self.pixel_size}")
        if parse_utm_epsg(self.epsg) is None:
            raise ProjectionNotProjected(f"EPSG:{self.epsg} is not a UTM projection")
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
            object.__setattr__(self, "pixels", px)
        if not self.digest:
            h = hashlib.sha256()
            h.update(repr((px.shape, self.pixel_size, self.origin, self.epsg)).encode())
            h.update(np.ascontiguousarray(px).tobytes())
            object.__setattr__(self, "digest", h.hexdigest())

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]


def load_raster(path: str | Path) -> GeoRaster:
    path = Path(path)
    data = path.read_bytes()
    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        tags = page.tags

        compression = int(page.compression)
        if compression not in SUPPORTED_COMPRESSION:
            raise UnsupportedEncoding(f"{path}: TIFF compression {compression} not supported")
        if page.dtype != np.uint8:
            raise UnsupportedEncoding(f"{path}: sample format {page.dtype} (need 8-bit unsigned)")

        if TAG_TRANSFORMATION in tags:
            matrix = tags[TAG_TRANSFORMATION].value
            if matrix[1] != 0 or matrix[4] != 0:
                raise UnsupportedEncoding(f"{path}: rotated geotransform not supported")
        if TAG_PIXEL_SCALE not in tags or TAG_TIEPOINT not in tags:
            raise MissingGeoreference(f"{path}: pixel-scale or tie-point tag missing")
        if TAG_GEOKEYS not in tags:
            raise MissingGeoreference(f"{path}: GeoKeyDirectory tag missing")

        scale = tags[TAG_PIXEL_SCALE].value
        tie = tags[TAG_TIEPOINT].value
        keys = _geokeys(tags[TAG_GEOKEYS].value)

        try:
            pixels = page.asarray()
        except (KeyError, ValueError, NotImplementedError) as exc:
            raise UnsupportedEncoding(f"{path}: cannot decode image data ({exc})") from exc

    model = keys.get(KEY_MODEL_TYPE)
    if model == MODEL_GEOGRAPHIC:
        raise ProjectionNotProjected(f"{path}: geographic CRS, need a projected UTM CRS")
    epsg = keys.get(KEY_PROJECTED_CRS)
    if epsg is None:
        raise MissingGeoreference(f"{path}: no ProjectedCSTypeGeoKey")
    if parse_utm_epsg(epsg) is None:
        raise ProjectionNotProjected(f"{path}: EPSG:{epsg} is not a UTM zone")

    if len(tie) != 6:
        raise UnsupportedEncoding(f"{path}: {len(tie) // 6} tie-points, expected exactly one")
    sx, sy = float(scale[0]), float(scale[1])
    if not (sx > 0 and sy > 0):
        raise MissingGeoreference(f"{path}: non-positive pixel scale {sx}, {sy}")
    i, j, _, x, y, _ = (float(v) for v in tie)
    if keys.get(KEY_RASTER_TYPE) == RASTER_PIXEL_IS_POINT:
        # tie-point addresses the pixel centre, which sits half a pixel in
        i += 0.5
        j += 0.5
    origin = (x - i * sx, y + j * sy)

    pixels = _to_rgb(pixels, path)
    return GeoRaster(
        pixels=pixels,
        pixel_size=(sx, sy),
        origin=origin,
        epsg=int(epsg),
        digest=hashlib.sha256(data).hexdigest(),
    )


def _geokeys(directory) -> dict[int, int]:
    values = [int(v) for v in directory]
    if len(values) < 4:
        raise MissingGeoreference("GeoKeyDirectory is truncated")
    count = values[3]
    keys: dict[int, int] = {}
    for k in range(count):
        key_id, location, n, value = values[4 + 4 * k : 8 + 4 * k]
        if location == 0 and n == 1:
            keys[key_id] = value
    return keys


def _to_rgb(pixels: np.ndarray, path: Path) -> np.ndarray:
    if pixels.ndim == 3 and pixels.shape[0] in (3, 4) and pixels.shape[2] not in (3, 4):
        pixels = np.moveaxis(pixels, 0, -1)
    if pixels.ndim != 3 or pixels.shape[2] < 3:
        raise UnsupportedEncoding(f"{path}: need at least 3 bands, got shape {pixels.shape}")
    # extra bands (alpha, NIR) are dropped
    return np.ascontiguousarray(pixels[:, :, :3])


def write_geotiff(
    path: str | Path,
    pixels: np.ndarray,
    origin: tuple[float, float],
    pixel_size: tuple[float, float] = (1.0, 1.0),
    epsg: int = 32616,
    *,
    model_type: int = MODEL_PROJECTED,
    include_tiepoint: bool = True,
    compression: str | None = None,
) -> None:
    """Write an RGB GeoTIFF with pixel-scale, tie-point and CRS geokeys."""
    geokeys = [1, 1, 0, 3, KEY_MODEL_TYPE, 0, 1, model_type, KEY_RASTER_TYPE, 0, 1, 1]
    crs_key = KEY_PROJECTED_CRS if model_type == MODEL_PROJECTED else 2048
    geokeys += [crs_key, 0, 1, epsg]
    extratags = [
        (TAG_PIXEL_SCALE, "d", 3, (pixel_size[0], pixel_size[1], 0.0), True),
        (TAG_GEOKEYS, "H", len(geokeys), tuple(geokeys), True),
    ]
    if include_tiepoint:
        extratags.append((TAG_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, origin[0], origin[1], 0.0), True))
    tifffile.imwrite(
        path, pixels, photometric="rgb", compression=compression, extratags=extratags
    )


def pixel_to_projected(raster: GeoRaster, px: float, py: float) -> ProjectedPoint:
    return ProjectedPoint(
        raster.origin[0] + px * raster.pixel_size[0],
        raster.origin[1] - py * raster.pixel_size[1],
        raster.epsg,
    )


def projected_to_pixel(raster: GeoRaster, p: ProjectedPoint) -> tuple[float, float]:
    if p.epsg != raster.epsg:
        raise ProjectionMismatch(f"point in EPSG:{p.epsg}, raster in EPSG:{raster.epsg}")
    return (
        (p.easting - raster.origin[0]) / raster.pixel_size[0],
        (raster.origin[1] - p.northing) / raster.pixel_size[1],
    )


def enumerate_windows(raster: GeoRaster, size: int = 256, stride: int | None = None) -> list[PixelWindow]:
    """Every ``size``-square window fully inside the raster, row-major."""
    stride = size if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if size < 1 or size > min(raster.width_px, raster.height_px):
        raise ValueError(f"window size {size} does not fit a {raster.width_px}x{raster.height_px} raster")
    return [
        PixelWindow(x0, y0, size)
        for y0 in range(0, raster.height_px - size + 1, stride)
        for x0 in range(0, raster.width_px - size + 1, stride)
    ]


def window_count(width: int, height: int, size: int, stride: int) -> int:
    return ((width - size) // stride + 1) * ((height - size) // stride + 1)


def windows_containing(raster: GeoRaster, px: float, py: float, size: int, stride: int) -> list[PixelWindow]:
    """Grid windows (as produced by :func:`enumerate_windows`) containing a pixel coordinate."""
    out = []
    nx = (raster.width_px - size) // stride + 1
    ny = (raster.height_px - size) // stride + 1
    for iy in range(max(0, math.ceil((py - size) / stride)), min(ny, math.floor(py / stride) + 1)):
        for ix in range(max(0, math.ceil((px - size) / stride)), min(nx, math.floor(px / stride) + 1)):
            w = PixelWindow(ix * stride, iy * stride, size)
            if w.x0 <= px < w.x0 + size and w.y0 <= py < w.y0 + size:
                out.append(w)
    return out
