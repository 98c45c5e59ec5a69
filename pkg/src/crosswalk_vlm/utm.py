"""WGS84 <-> UTM conversion using the Krüger series to sixth order in n.

The series (as arranged by Karney, 2011) is accurate to a few nanometres
within the zone envelope enforced here, which is far tighter than the
centimetre budget the raster alignment needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutOfZone, ProjectionNotProjected

WGS84_A = 6378137.0
WGS84_F = 1 / 298.257223563
GRS80_F = 1 / 298.257222101

SCALE = 0.9996
FALSE_EASTING = 500_000.0
FALSE_NORTHING_SOUTH = 10_000_000.0

# Degrees of longitude from the central meridian we are willing to project.
ZONE_HALF_WIDTH = 3.5
MIN_LAT, MAX_LAT = -80.0, 84.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid geographic coordinate ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class ProjectedPoint:
    easting: float
    northing: float
    epsg: int


class _Ellipsoid:
    def __init__(self, a: float, f: float) -> None:
        n = f / (2 - f)
        self.e = math.sqrt(f * (2 - f))
        self.e2 = f * (2 - f)
        n2, n3, n4, n5, n6 = n**2, n**3, n**4, n**5, n**6
        self.A = a / (1 + n) * (1 + n2 / 4 + n4 / 64 + n6 / 256)
        self.alpha = (
            n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
            13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
            61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
            49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
            34729 * n5 / 80640 - 3418889 * n6 / 1995840,
            212378941 * n6 / 319334400,
        )
        self.beta = (
            n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
            n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
            17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
            4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
            4583 * n5 / 161280 - 108847 * n6 / 3991680,
            20648693 * n6 / 638668800,
        )


_WGS84 = _Ellipsoid(WGS84_A, WGS84_F)
_GRS80 = _Ellipsoid(WGS84_A, GRS80_F)


def utm_epsg(zone: int, hemisphere: str) -> int:
    if not 1 <= zone <= 60:
        raise OutOfZone(f"UTM zone {zone} outside 1..60")
    if hemisphere not in ("N", "S"):
        raise ValueError(f"hemisphere must be 'N' or 'S', got {hemisphere!r}")
    return (32600 if hemisphere == "N" else 32700) + zone


def parse_utm_epsg(epsg: int) -> tuple[int, str] | None:
    """Return ``(zone, hemisphere)`` for a UTM EPSG code, or None.

    Accepts WGS84 UTM (326zz / 327zz) and NAD83 UTM (269zz, northern zones
    1-23); the NAD83/WGS84 datum offset (~1 m) is below patch resolution.
    """
    if 32601 <= epsg <= 32660:
        return epsg - 32600, "N"
    if 32701 <= epsg <= 32760:
        return epsg - 32700, "S"
    if 26901 <= epsg <= 26923:
        return epsg - 26900, "N"
    return None


def central_meridian(zone: int) -> float:
    return -183.0 + 6.0 * zone


def _ellipsoid_for(epsg: int) -> _Ellipsoid:
    return _GRS80 if 26901 <= epsg <= 26923 else _WGS84


def _check_envelope(lat: float, dlon: float) -> None:
    if not MIN_LAT <= lat <= MAX_LAT:
        raise OutOfZone(f"latitude {lat} outside UTM coverage [{MIN_LAT}, {MAX_LAT}]")
    if abs(dlon) > ZONE_HALF_WIDTH:
        raise OutOfZone(
            f"longitude is {abs(dlon):.3f} deg from the central meridian (limit {ZONE_HALF_WIDTH})"
        )


def wgs84_to_utm(g: GeoPoint, zone: int, hemisphere: str) -> ProjectedPoint:
    epsg = utm_epsg(zone, hemisphere)
    return _forward(g, zone, hemisphere, _WGS84, epsg)


def geo_to_projected(g: GeoPoint, epsg: int) -> ProjectedPoint:
    """Project onto the UTM zone identified by ``epsg``."""
    parsed = parse_utm_epsg(epsg)
    if parsed is None:
        raise ProjectionNotProjected(f"EPSG:{epsg} is not a supported UTM zone")
    zone, hemi = parsed
    return _forward(g, zone, hemi, _ellipsoid_for(epsg), epsg)


def _forward(g: GeoPoint, zone: int, hemisphere: str, ell: _Ellipsoid, epsg: int) -> ProjectedPoint:
    dlon = g.lon - central_meridian(zone)
    dlon = (dlon + 180.0) % 360.0 - 180.0
    _check_envelope(g.lat, dlon)

    phi = math.radians(g.lat)
    lam = math.radians(dlon)
    e = ell.e
    sphi = math.sin(phi)
    # conformal latitude via tau' = tan(chi)
    t = math.sinh(math.atanh(sphi) - e * math.atanh(e * sphi))
    xi_p = math.atan2(t, math.cos(lam))
    eta_p = math.atanh(math.sin(lam) / math.sqrt(1 + t * t))

    xi, eta = xi_p, eta_p
    for j, a in enumerate(ell.alpha, start=1):
        xi += a * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += a * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    easting = FALSE_EASTING + SCALE * ell.A * eta
    northing = SCALE * ell.A * xi
    if hemisphere == "S":
        northing += FALSE_NORTHING_SOUTH
    return ProjectedPoint(easting, northing, epsg)


def utm_to_wgs84(p: ProjectedPoint) -> GeoPoint:
    parsed = parse_utm_epsg(p.epsg)
    if parsed is None:
        raise ProjectionNotProjected(f"EPSG:{p.epsg} is not a supported UTM zone")
    zone, hemisphere = parsed
    ell = _ellipsoid_for(p.epsg)

    northing = p.northing - (FALSE_NORTHING_SOUTH if hemisphere == "S" else 0.0)
    xi = northing / (SCALE * ell.A)
    eta = (p.easting - FALSE_EASTING) / (SCALE * ell.A)

    xi_p, eta_p = xi, eta
    for j, b in enumerate(ell.beta, start=1):
        xi_p -= b * math.sin(2 * j * xi) * math.cosh(2 * j * eta)
        eta_p -= b * math.cos(2 * j * xi) * math.sinh(2 * j * eta)

    tau_p = math.sin(xi_p) / math.hypot(math.sinh(eta_p), math.cos(xi_p))
    lam = math.atan2(math.sinh(eta_p), math.cos(xi_p))
    tau = _tau_from_conformal(tau_p, ell)

    lat = math.degrees(math.atan(tau))
    lon = central_meridian(zone) + math.degrees(lam)
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon)


def _tau_from_conformal(tau_p: float, ell: _Ellipsoid) -> float:
    e, e2 = ell.e, ell.e2
    tau = tau_p
    for _ in range(8):
        s1 = math.sqrt(1 + tau * tau)
        sigma = math.sinh(e * math.atanh(e * tau / s1))
        tau_i = tau * math.sqrt(1 + sigma * sigma) - sigma * s1
        dtau = (
            (tau_p - tau_i)
            / math.sqrt(1 + tau_i * tau_i)
            * (1 + (1 - e2) * tau * tau)
            / ((1 - e2) * s1)
        )
        tau += dtau
        if abs(dtau) < 1e-15 * max(1.0, abs(tau)):
            break
    return tau
