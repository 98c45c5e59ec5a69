"""OSM road graphs, intersections, per-direction approaches and their labels."""

from __future__ import annotations

import io
import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable

from .errors import DanglingReference, MalformedXml, OutsideWindow
from .georaster import (
    GeoRaster,
    PixelWindow,
    pixel_to_projected,
    projected_to_pixel,
    windows_containing,
)
from .utm import GeoPoint, ProjectedPoint, geo_to_projected

log = logging.getLogger(__name__)

ROAD_CLASSES = frozenset(
    {
        "motorway", "motorway_link",
        "trunk", "trunk_link",
        "primary", "primary_link",
        "secondary", "secondary_link",
        "tertiary", "tertiary_link",
        "residential", "service", "unclassified",
    }
)
CROSSING_WAY_CLASSES = frozenset({"footway", "path"})

CROSSWALK = "crosswalk"
NOT_CROSSWALK = "not-crosswalk"
LABELS = (CROSSWALK, NOT_CROSSWALK)

CROSSING_TOLERANCE_M = 5.0
MIN_CENTERLINE_PX = 32.0
DIRECTION_MERGE_RAD = 1e-6


@dataclass(frozen=True)
class Way:
    id: int
    highway: str
    nodes: tuple[int, ...]
    tags: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def is_crossing(self) -> bool:
        return self.highway in CROSSING_WAY_CLASSES

    @property
    def is_road(self) -> bool:
        return self.highway in ROAD_CLASSES


@dataclass
class RoadGraph:
    nodes: dict[int, GeoPoint]
    ways: list[Way]
    node_tags: dict[int, dict[str, str]] = field(default_factory=dict)

    def crossing_nodes(self) -> list[int]:
        return sorted(n for n, t in self.node_tags.items() if t.get("highway") == "crossing")

    def road_ways(self) -> list[Way]:
        return [w for w in self.ways if w.is_road]


def _keep_way(tags: dict[str, str]) -> bool:
    highway = tags.get("highway", "")
    if highway in ROAD_CLASSES:
        return True
    if highway in CROSSING_WAY_CLASSES:
        return tags.get("footway") == "crossing" or "crossing" in tags
    return False


def parse_osm(stream: BinaryIO | bytes | str | Path) -> RoadGraph:
    """Parse OSM XML into a :class:`RoadGraph`.

    Only road-class highway ways (plus footways/paths mapped as crossings) are
    kept. Nodes are pruned to those referenced by kept ways, except that
    standalone ``highway=crossing`` nodes survive because labels depend on them.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)

    all_nodes: dict[int, GeoPoint] = {}
    all_node_tags: dict[int, dict[str, str]] = {}
    ways: list[Way] = []
    try:
        for _, elem in ET.iterparse(stream, events=("end",)):
            if elem.tag == "node":
                nid = int(elem.get("id"))
                all_nodes[nid] = GeoPoint(float(elem.get("lat")), float(elem.get("lon")))
                tags = {t.get("k"): t.get("v") for t in elem.iter("tag")}
                if tags:
                    all_node_tags[nid] = tags
                elem.clear()
            elif elem.tag == "way":
                tags = {t.get("k"): t.get("v") for t in elem.iter("tag")}
                refs = tuple(int(nd.get("ref")) for nd in elem.iter("nd"))
                if _keep_way(tags) and len(refs) >= 2:
                    ways.append(Way(int(elem.get("id")), tags["highway"], refs, tags))
                elem.clear()
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise MalformedXml(f"bad attribute: {exc}") from exc

    referenced = {n for w in ways for n in w.nodes}
    missing = referenced - all_nodes.keys()
    if missing:
        way = next(w for w in ways if missing & set(w.nodes))
        raise DanglingReference(
            f"way {way.id} references missing node(s) {sorted(missing & set(way.nodes))[:5]}"
        )
    keep = referenced | {
        n for n, t in all_node_tags.items() if t.get("highway") == "crossing"
    }
    nodes = {n: all_nodes[n] for n in sorted(keep)}
    node_tags = {n: all_node_tags[n] for n in sorted(keep) if n in all_node_tags}
    ways.sort(key=lambda w: w.id)
    return RoadGraph(nodes=nodes, ways=ways, node_tags=node_tags)


@dataclass(frozen=True)
class Arm:
    """One road direction leaving an intersection."""

    way_id: int
    toward: int
    direction: tuple[float, float]
    polyline: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Intersection:
    node_id: int
    location: ProjectedPoint
    geo: GeoPoint
    incident: tuple[Arm, ...]


def _project_nodes(g: RoadGraph, epsg: int) -> dict[int, tuple[float, float]]:
    out = {}
    for nid, geo in g.nodes.items():
        p = geo_to_projected(geo, epsg)
        out[nid] = (p.easting, p.northing)
    return out


def _arm(way: Way, start: int, step: int, xy: dict[int, tuple[float, float]]) -> Arm | None:
    origin = xy[way.nodes[start]]
    poly = [origin]
    direction = None
    toward = None
    k = start + step
    while 0 <= k < len(way.nodes):
        p = xy[way.nodes[k]]
        if p != poly[-1]:
            poly.append(p)
            if direction is None:
                dx, dy = p[0] - origin[0], p[1] - origin[1]
                norm = math.hypot(dx, dy)
                direction = (dx / norm, dy / norm)
                toward = way.nodes[k]
        k += step
    if direction is None:
        return None
    return Arm(way.id, toward, direction, tuple(poly))


def node_incidences(g: RoadGraph) -> dict[int, list[tuple[Way, int]]]:
    """Map node id -> list of (road way, position) occurrences."""
    occ: dict[int, list[tuple[Way, int]]] = {}
    for way in g.road_ways():
        for pos, nid in enumerate(way.nodes):
            occ.setdefault(nid, []).append((way, pos))
    return occ


def _is_closing_vertex(way: Way, pos: int) -> bool:
    return pos == len(way.nodes) - 1 and way.nodes[0] == way.nodes[-1]


def find_intersections(g: RoadGraph, epsg: int) -> list[Intersection]:
    """Nodes shared by two or more road ways, or repeated within one way.

    Crossing footways are ignored: they meet the carriageway at the crossing
    itself and would otherwise turn every crosswalk into an intersection.
    """
    occ = node_incidences(g)
    xy = _project_nodes(g, epsg)
    out = []
    for nid in sorted(occ):
        uses = occ[nid]
        if len(uses) < 2:
            continue
        arms = []
        for way, pos in uses:
            # the closing vertex of a ring is the same place as its first vertex
            if _is_closing_vertex(way, pos):
                candidates = [_arm(way, pos, -1, xy)]
            elif pos == 0 and way.nodes[0] == way.nodes[-1]:
                candidates = [_arm(way, pos, +1, xy)]
            else:
                candidates = [_arm(way, pos, -1, xy), _arm(way, pos, +1, xy)]
            arms.extend(a for a in candidates if a is not None)
        if len(arms) < 2:
            continue
        e, n = xy[nid]
        out.append(Intersection(nid, ProjectedPoint(e, n, epsg), g.nodes[nid], tuple(arms)))
    return out


@dataclass(frozen=True)
class Approach:
    node_id: int
    way_id: int
    toward: int
    orientation: tuple[float, float]
    centerline: tuple[tuple[float, float], ...]
    window: PixelWindow
    location: GeoPoint
    epsg: int
    truth_label: str | None = None
    truth_source: str = "unlabeled"

    @property
    def key(self) -> str:
        return f"{self.node_id}:{self.way_id}:{self.toward}"

    def pixel_centerline(self, raster: GeoRaster) -> list[tuple[float, float]]:
        """Centerline in window-local fractional pixel coordinates."""
        pts = []
        for e, n in self.centerline:
            px, py = projected_to_pixel(raster, ProjectedPoint(e, n, self.epsg))
            pts.append((px - self.window.x0, py - self.window.y0))
        return pts


def _clip_to_box(poly: list[tuple[float, float]], size: float) -> list[tuple[float, float]]:
    """Truncate a polyline starting inside ``[0, size]^2`` at its first exit."""
    out = [poly[0]]
    for (x0, y0), (x1, y1) in zip(poly, poly[1:]):
        dx, dy = x1 - x0, y1 - y0
        t_exit = 1.0
        for p, q in ((-dx, x0), (dx, size - x0), (-dy, y0), (dy, size - y0)):
            if p > 0:
                t_exit = min(t_exit, q / p)
        if t_exit < 1.0:
            out.append((x0 + t_exit * dx, y0 + t_exit * dy))
            return out
        out.append((x1, y1))
    return out


def _length(poly: Iterable[tuple[float, float]]) -> float:
    pts = list(poly)
    return sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))


def enumerate_approaches(
    i: Intersection,
    window: PixelWindow,
    raster: GeoRaster,
    *,
    min_length_px: float = MIN_CENTERLINE_PX,
    merge_tol_rad: float = DIRECTION_MERGE_RAD,
) -> list[Approach]:
    px, py = projected_to_pixel(raster, i.location)
    lx, ly = px - window.x0, py - window.y0
    if not (0 <= lx < window.size and 0 <= ly < window.size):
        raise OutsideWindow(f"intersection {i.node_id} at pixel ({px:.1f}, {py:.1f}) not in {window}")

    kept: list[Arm] = []
    merged = 0
    for arm in i.incident:
        if any(_angle(arm.direction, k.direction) < merge_tol_rad for k in kept):
            merged += 1
            continue
        kept.append(arm)
    if merged:
        log.info("intersection %d: merged %d duplicate direction(s)", i.node_id, merged)

    out = []
    for arm in kept:
        local = []
        for e, n in arm.polyline:
            qx, qy = projected_to_pixel(raster, ProjectedPoint(e, n, raster.epsg))
            local.append((qx - window.x0, qy - window.y0))
        clipped = _clip_to_box(local, window.size)
        if _length(clipped) < min_length_px:
            continue
        proj = [arm.polyline[0]]
        for qx, qy in clipped[1:]:
            p = pixel_to_projected(raster, qx + window.x0, qy + window.y0)
            proj.append((p.easting, p.northing))
        out.append(
            Approach(
                node_id=i.node_id,
                way_id=arm.way_id,
                toward=arm.toward,
                orientation=arm.direction,
                centerline=tuple(reversed(proj)),
                window=window,
                location=i.geo,
                epsg=raster.epsg,
            )
        )
    return out


def _angle(u: tuple[float, float], v: tuple[float, float]) -> float:
    return abs(math.atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1]))


def point_segment_distance(p, a, b) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def point_polyline_distance(p, poly) -> float:
    if len(poly) == 1:
        return math.dist(p, poly[0])
    return min(point_segment_distance(p, a, b) for a, b in zip(poly, poly[1:]))


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    return (orient(a, b, c) * orient(a, b, d) < 0) and (orient(c, d, a) * orient(c, d, b) < 0)


def polyline_distance(p1, p2) -> float:
    for a, b in zip(p1, p1[1:]):
        for c, d in zip(p2, p2[1:]):
            if _segments_cross(a, b, c, d):
                return 0.0
    return min(
        min(point_polyline_distance(p, p2) for p in p1),
        min(point_polyline_distance(p, p1) for p in p2),
    )


def load_overrides(path: str | Path) -> list[dict]:
    """Read an override manifest: a JSON array of {intersection_node_id, way_id, label}."""
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise ValueError(f"{path}: override manifest must be a JSON array")
    for e in entries:
        if e.get("label") not in LABELS:
            raise ValueError(f"{path}: bad label in override {e}")
    return entries


def derive_truth(
    g: RoadGraph,
    approaches: list[Approach],
    overrides: list[dict] | None = None,
    *,
    tolerance_m: float = CROSSING_TOLERANCE_M,
) -> list[Approach]:
    """Attach ground-truth labels.

    Precedence: manual override for the (intersection, way) pair, then OSM
    crossing evidence within ``tolerance_m`` of the centerline, else negative.
    An override keyed on a way that passes through the intersection applies to
    both of its directions. Entries matching no approach are logged and skipped.
    """
    known = {(a.node_id, a.way_id) for a in approaches}
    known_nodes = {a.node_id for a in approaches}
    table: dict[tuple[int, int], str] = {}
    ignored = 0
    for e in overrides or []:
        pair = (int(e["intersection_node_id"]), int(e["way_id"]))
        if pair[0] not in known_nodes:
            log.warning("override ignored: unknown intersection %d", pair[0])
            ignored += 1
        elif pair not in known:
            log.warning("override ignored: way %d has no approach at intersection %d", pair[1], pair[0])
            ignored += 1
        else:
            table[pair] = e["label"]
    if ignored:
        log.warning("%d override entr%s ignored", ignored, "y" if ignored == 1 else "ies")

    projected: dict[int, dict[int, tuple[float, float]]] = {}

    def xy(node: int, epsg: int) -> tuple[float, float]:
        cache = projected.setdefault(epsg, {})
        if node not in cache:
            p = geo_to_projected(g.nodes[node], epsg)
            cache[node] = (p.easting, p.northing)
        return cache[node]

    crossing_nodes = g.crossing_nodes()
    crossing_ways = [w for w in g.ways if w.is_crossing]

    out = []
    for a in approaches:
        label = table.get((a.node_id, a.way_id))
        if label is not None:
            out.append(replace(a, truth_label=label, truth_source="manual-override"))
            continue
        hit = any(
            point_polyline_distance(xy(n, a.epsg), a.centerline) <= tolerance_m
            for n in crossing_nodes
        ) or any(
            polyline_distance([xy(n, a.epsg) for n in w.nodes], a.centerline) <= tolerance_m
            for w in crossing_ways
        )
        out.append(replace(a, truth_label=CROSSWALK if hit else NOT_CROSSWALK, truth_source="osm-tag"))
    return out


def best_window(
    raster: GeoRaster, i: Intersection, size: int, stride: int
) -> PixelWindow | None:
    """The tiling window containing the intersection whose centre lies closest to it."""
    px, py = projected_to_pixel(raster, i.location)
    cands = windows_containing(raster, px, py, size, stride)
    if not cands:
        return None
    half = size / 2
    return min(cands, key=lambda w: (math.hypot(w.x0 + half - px, w.y0 + half - py), w.y0, w.x0))
