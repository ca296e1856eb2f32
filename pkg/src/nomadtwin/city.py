"""City model: map ingestion, building blocks, tile grid, stations and LOS."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np
import shapely
from shapely import STRtree
from shapely.geometry import LineString, Polygon, box

from . import geom
from .geom import Point2D
from .radio import Los

log = logging.getLogger(__name__)

EARTH_RADIUS = 6371000.0
LANE_WIDTH = 3.5
DEFAULT_LANES = 2
NARROW_WAYS = {"footway", "path", "pedestrian", "steps", "cycleway", "track"}
NARROW_WIDTH = 2.0


class InputError(ValueError):
    """Malformed or inconsistent input data; reported with exit code 2."""


class BuildingType(enum.Enum):
    HOTEL = "Hotel"
    SCHOOL = "School"
    RESIDENTIAL = "Residential"
    OFFICE = "Office"
    SMALL_BUSINESS = "SmallBusiness"
    HOSPITAL = "Hospital"
    MALL = "Mall"


# OSM building=* value -> type; anything else maps to Residential
BUILDING_TAGS = {
    "hotel": BuildingType.HOTEL, "hostel": BuildingType.HOTEL, "guest_house": BuildingType.HOTEL,
    "school": BuildingType.SCHOOL, "university": BuildingType.SCHOOL,
    "college": BuildingType.SCHOOL, "kindergarten": BuildingType.SCHOOL,
    "residential": BuildingType.RESIDENTIAL, "house": BuildingType.RESIDENTIAL,
    "apartments": BuildingType.RESIDENTIAL, "detached": BuildingType.RESIDENTIAL,
    "terrace": BuildingType.RESIDENTIAL, "dormitory": BuildingType.RESIDENTIAL,
    "office": BuildingType.OFFICE, "commercial": BuildingType.OFFICE,
    "government": BuildingType.OFFICE,
    "retail": BuildingType.SMALL_BUSINESS, "shop": BuildingType.SMALL_BUSINESS,
    "kiosk": BuildingType.SMALL_BUSINESS, "service": BuildingType.SMALL_BUSINESS,
    "hospital": BuildingType.HOSPITAL, "clinic": BuildingType.HOSPITAL,
    "mall": BuildingType.MALL, "supermarket": BuildingType.MALL,
}


def building_type_for(tag: str) -> BuildingType:
    kind = BUILDING_TAGS.get(tag.strip().lower())
    if kind is None:
        log.debug("unmapped building tag %r treated as Residential", tag)
        return BuildingType.RESIDENTIAL
    return kind


class TileKind(enum.IntEnum):
    VOID = 0
    OUTDOOR = 1
    INDOOR = 2


class StationKind(enum.Enum):
    LTE = "LTE"
    NN = "NN"


# --------------------------------------------------------------------------
# Raw map extract

@dataclass
class RawWay:
    id: int
    coords: list[tuple[float, float]]  # (lat, lon)
    tags: dict[str, str]
    kind: BuildingType | None = None


@dataclass
class RawExtract:
    bounds: tuple[float, float, float, float]  # minlat, minlon, maxlat, maxlon
    buildings: list[RawWay]
    roads: list[RawWay]
    parks: list[RawWay]


def parse_map_extract(document: bytes | str) -> RawExtract:
    """Read an OSM-style XML extract into buildings, roads and parks."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise InputError(f"malformed map extract: {exc}") from None

    nodes: dict[int, tuple[float, float]] = {}
    for n in root.iter("node"):
        try:
            nodes[int(n.get("id"))] = (float(n.get("lat")), float(n.get("lon")))
        except (TypeError, ValueError):
            raise InputError(f"node {n.get('id')!r}: missing or non-numeric id/lat/lon") from None

    buildings, roads, parks = [], [], []
    for w in root.iter("way"):
        wid = int(w.get("id"))
        tags = {t.get("k"): t.get("v") for t in w.iter("tag")}
        refs = [int(nd.get("ref")) for nd in w.iter("nd")]
        is_building = "building" in tags
        is_road = "highway" in tags
        is_park = tags.get("leisure") == "park"
        if not (is_building or is_road or is_park):
            continue
        missing = [r for r in refs if r not in nodes]
        if missing:
            raise InputError(f"way {wid}: references unknown node {missing[0]}")
        coords = [nodes[r] for r in refs]
        if is_building or is_park:
            if len(refs) < 4 or refs[0] != refs[-1]:
                raise InputError(f"way {wid}: ring does not close")
        if is_building:
            buildings.append(RawWay(wid, coords, tags, building_type_for(tags["building"])))
        elif is_park:
            parks.append(RawWay(wid, coords, tags))
        elif len(coords) >= 2:
            roads.append(RawWay(wid, coords, tags))
    if not buildings:
        raise InputError("map extract contains no buildings")

    b = root.find("bounds")
    if b is not None:
        bounds = tuple(float(b.get(k)) for k in ("minlat", "minlon", "maxlat", "maxlon"))
    else:
        lats = [c[0] for c in nodes.values()]
        lons = [c[1] for c in nodes.values()]
        bounds = (min(lats), min(lons), max(lats), max(lons))
    return RawExtract(bounds, buildings, roads, parks)


def project_to_local(lat: float, lon: float, origin: tuple[float, float]) -> Point2D:
    """Equirectangular offset (metres) of ``(lat, lon)`` from ``origin``."""
    if abs(lat) > 90 or abs(lon) > 180:
        raise InputError(f"coordinate out of range: {lat}, {lon}")
    lat0, lon0 = origin
    x = EARTH_RADIUS * math.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS * math.radians(lat - lat0)
    return Point2D(x, y)


@dataclass(frozen=True)
class Projection:
    """Maps lat/lon onto ``[0, width] x [0, height]`` about the bounding-box centre."""

    lat0: float
    lon0: float
    width: float
    height: float

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Projection":
        minlat, minlon, maxlat, maxlon = bounds
        origin = ((minlat + maxlat) / 2, (minlon + maxlon) / 2)
        corner = project_to_local(maxlat, maxlon, origin)
        return cls(origin[0], origin[1], 2 * corner.x, 2 * corner.y)

    def to_local(self, lat: float, lon: float) -> Point2D:
        p = project_to_local(lat, lon, (self.lat0, self.lon0))
        return Point2D(p.x + self.width / 2, p.y + self.height / 2)

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        lat = self.lat0 + math.degrees((y - self.height / 2) / EARTH_RADIUS)
        lon = self.lon0 + math.degrees(
            (x - self.width / 2) / (EARTH_RADIUS * math.cos(math.radians(self.lat0))))
        return lat, lon


# --------------------------------------------------------------------------
# City map

@dataclass(frozen=True)
class Building:
    id: int
    footprint: Polygon
    height: float
    kind: BuildingType
    centre: Point2D


@dataclass(frozen=True)
class Tile:
    index: tuple[int, int]
    centre: Point2D
    kind: TileKind
    host_building: int | None


@dataclass(frozen=True, eq=False)
class CityMap:
    width: float
    height: float
    tile_size: float
    buildings: tuple[Building, ...]
    roads: object  # shapely (Multi)Polygon
    open_areas: object
    tile_kind: np.ndarray  # (rows, cols) TileKind values
    tile_host: np.ndarray  # (rows, cols) building id or -1
    projection: Projection | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.tile_kind.shape

    @cached_property
    def tile_x(self) -> np.ndarray:
        return (np.arange(self.shape[1]) + 0.5) * self.tile_size

    @cached_property
    def tile_y(self) -> np.ndarray:
        return (np.arange(self.shape[0]) + 0.5) * self.tile_size

    def tile_centres(self, mask: np.ndarray | None = None) -> np.ndarray:
        """``(k, 2)`` centres of tiles selected by ``mask`` in row-major order."""
        xx, yy = np.meshgrid(self.tile_x, self.tile_y)
        if mask is None:
            return np.column_stack([xx.ravel(), yy.ravel()])
        return np.column_stack([xx[mask], yy[mask]])

    @property
    def outdoor(self) -> np.ndarray:
        return self.tile_kind == TileKind.OUTDOOR

    @property
    def indoor(self) -> np.ndarray:
        return self.tile_kind == TileKind.INDOOR

    @property
    def non_void(self) -> np.ndarray:
        return self.tile_kind != TileKind.VOID

    def tile(self, row: int, col: int) -> Tile:
        host = int(self.tile_host[row, col])
        return Tile((row, col), Point2D(float(self.tile_x[col]), float(self.tile_y[row])),
                    TileKind(int(self.tile_kind[row, col])), host if host >= 0 else None)

    def tiles(self) -> Iterator[Tile]:
        rows, cols = self.shape
        for r in range(rows):
            for c in range(cols):
                yield self.tile(r, c)

    @cached_property
    def _building_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buildings)}

    def building(self, building_id: int) -> Building:
        return self.buildings[self._building_index[building_id]]

    @cached_property
    def building_centres(self) -> np.ndarray:
        return np.array([b.centre for b in self.buildings], dtype=float).reshape(-1, 2)

    @cached_property
    def building_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buildings], dtype=int)

    @cached_property
    def footprint_tree(self) -> STRtree:
        return STRtree([b.footprint for b in self.buildings])

    def building_at(self, pt: Sequence[float]) -> int | None:
        """Id of the building whose footprint strictly contains ``pt``."""
        for i in self.footprint_tree.query(shapely.Point(pt), predicate="within"):
            return self.buildings[int(i)].id
        return None

    def counts(self) -> dict[str, int]:
        return {
            "buildings": len(self.buildings),
            "tiles": int(self.tile_kind.size),
            "indoor": int(self.indoor.sum()),
            "outdoor": int(self.outdoor.sum()),
            "void": int((self.tile_kind == TileKind.VOID).sum()),
        }

    def without_building(self, building_id: int) -> "CityMap":
        """Copy with one building removed; its tiles become Void or Outdoor."""
        keep = tuple(b for b in self.buildings if b.id != building_id)
        kind, host = _classify_tiles(self.shape, self.tile_size, keep, self.roads, self.open_areas)
        return CityMap(self.width, self.height, self.tile_size, keep, self.roads,
                       self.open_areas, kind, host, self.projection)


@dataclass(frozen=True)
class CityConfig:
    tile_size: float = 4.0
    height_range: tuple[float, float] = (5.0, 15.0)
    seed: int = 0
    gap: float = geom.DEFAULT_GAP


def _ring(coords, projection: Projection) -> list[Point2D]:
    return [projection.to_local(lat, lon) for lat, lon in coords]


def _road_width(tags: Mapping[str, str]) -> float:
    for key in ("width", "est_width"):
        if key in tags:
            try:
                w = float(tags[key].split()[0])
                if w > 0:
                    return w
            except ValueError:
                pass
    if "lanes" in tags:
        try:
            return max(1, int(float(tags["lanes"]))) * LANE_WIDTH
        except ValueError:
            pass
    if tags.get("highway") in NARROW_WAYS:
        return NARROW_WIDTH
    return DEFAULT_LANES * LANE_WIDTH


def road_polygon(way: RawWay, projection: Projection):
    line = LineString(_ring(way.coords, projection))
    return line.buffer(_road_width(way.tags) / 2, cap_style="flat", join_style="mitre")


def _parse_height(tags: Mapping[str, str]) -> float | None:
    raw = tags.get("height")
    if raw is None:
        return None
    try:
        h = float(raw.replace("m", "").strip())
    except ValueError:
        return None
    return h if h > 0 else None


def _classify_tiles(shape, tile_size, buildings, roads, open_areas):
    rows, cols = shape
    xs = (np.arange(cols) + 0.5) * tile_size
    ys = (np.arange(rows) + 0.5) * tile_size
    kind = np.zeros(shape, dtype=np.int8)
    host = np.full(shape, -1, dtype=np.int64)
    for b in buildings:
        minx, miny, maxx, maxy = b.footprint.bounds
        c0, c1 = np.searchsorted(xs, [minx, maxx])
        r0, r1 = np.searchsorted(ys, [miny, maxy])
        if c0 >= c1 or r0 >= r1:
            continue
        gx, gy = np.meshgrid(xs[c0:c1], ys[r0:r1])
        inside = shapely.contains_xy(b.footprint, gx, gy)
        window = kind[r0:r1, c0:c1]
        window[inside] = TileKind.INDOOR
        host[r0:r1, c0:c1][inside] = b.id
    outdoor_geom = shapely.union(roads, open_areas)
    if not outdoor_geom.is_empty:
        shapely.prepare(outdoor_geom)
        gx, gy = np.meshgrid(xs, ys)
        out = shapely.contains_xy(outdoor_geom, gx, gy) & (kind == TileKind.VOID)
        kind[out] = TileKind.OUTDOOR
    kind.setflags(write=False)
    host.setflags(write=False)
    return kind, host


def build_city(raw: RawExtract, config: CityConfig = CityConfig(),
               projection: Projection | None = None) -> CityMap:
    """Union building parts into blocks, assign heights and types, and tessellate."""
    if config.tile_size <= 0:
        raise InputError("tile_size must be positive")
    lo, hi = config.height_range
    if not 0 < lo <= hi:
        raise InputError(f"invalid height range {config.height_range}")
    if not raw.buildings:
        raise InputError("no buildings to build a city from")
    projection = projection or Projection.from_bounds(raw.bounds)
    width, height = projection.width, projection.height
    if width <= 0 or height <= 0:
        raise InputError("map extent must be positive")
    frame = box(0, 0, width, height)

    parts: list[tuple[RawWay, Polygon]] = []
    for way in raw.buildings:
        poly = Polygon(_ring(way.coords, projection))
        try:
            geom.validate_polygon(poly)
        except geom.GeometryError as exc:
            log.warning("dropping building way %s: %s", way.id, exc)
            continue
        parts.append((way, poly))
    if not parts:
        raise InputError("no valid building footprints")

    merged = geom.polygon_union([p for _, p in parts], gap=config.gap)
    merged = [m for m in merged if frame.contains(m.representative_point())]
    tree = STRtree([p for _, p in parts])
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x4B1D]))
    sampled = rng.uniform(lo, hi, size=len(merged))

    buildings = []
    for bid, poly in enumerate(merged):
        members = [parts[int(i)] for i in tree.query(poly, predicate="intersects")]
        members = [m for m in members if m[1].intersection(poly).area > 0.5 * m[1].area]
        if not members:
            continue
        counts: dict[BuildingType, int] = {}
        largest: dict[BuildingType, float] = {}
        for way, p in members:
            counts[way.kind] = counts.get(way.kind, 0) + 1
            largest[way.kind] = max(largest.get(way.kind, 0.0), p.area)
        kind = max(counts, key=lambda k: (counts[k], largest[k]))
        tagged = [h for h in (_parse_height(w.tags) for w, _ in members) if h is not None]
        h_b = max(tagged) if tagged else float(sampled[bid])
        buildings.append(Building(bid, poly, h_b, kind, geom.representative_point(poly)))

    road_polys = [road_polygon(w, projection) for w in raw.roads]
    roads = shapely.unary_union(road_polys).intersection(frame) if road_polys else shapely.Polygon()
    park_polys = []
    for way in raw.parks:
        poly = Polygon(_ring(way.coords, projection))
        if poly.is_valid and poly.area > 0:
            park_polys.append(poly)
        else:
            log.warning("dropping invalid park way %s", way.id)
    parks = shapely.unary_union(park_polys).intersection(frame) if park_polys else shapely.Polygon()

    shape = (math.ceil(height / config.tile_size - 1e-9), math.ceil(width / config.tile_size - 1e-9))
    kind, host = _classify_tiles(shape, config.tile_size, buildings, roads, parks)
    return CityMap(width, height, config.tile_size, tuple(buildings), roads, parks,
                   kind, host, projection)


# --------------------------------------------------------------------------
# Base stations

@dataclass(frozen=True)
class StationRecord:
    id: int
    position: Point2D
    provider: str
    kind: StationKind = StationKind.LTE


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: StationKind
    position: Point2D
    antenna_height: float
    radio: str
    host_building: int
    provider: str = ""


def load_base_stations(data: bytes | str, projection: Projection | None = None,
                       local_coords: bool = False) -> list[StationRecord]:
    """Parse an LTE inventory CSV (``id,lat,lon,provider,kind`` or ``id,x,y,...``)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.DictReader(io.StringIO(data))
    coord_cols = ("x", "y") if local_coords else ("lat", "lon")
    required = ("id", *coord_cols, "provider", "kind")
    if reader.fieldnames is None:
        raise InputError("no base stations")
    header = [h.strip() for h in reader.fieldnames]
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"station file is missing column(s): {', '.join(missing)}")
    if not local_coords and projection is None:
        raise InputError("lat/lon station file needs the map projection")
    records = []
    for lineno, row in enumerate(reader, start=2):
        row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
        kind = row["kind"].upper()
        if kind != "LTE":
            raise InputError(f"line {lineno}: station kind must be LTE, got {row['kind']!r}")
        try:
            sid = int(row["id"])
            a, b = float(row[coord_cols[0]]), float(row[coord_cols[1]])
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric id or coordinates") from None
        pos = Point2D(a, b) if local_coords else projection.to_local(a, b)
        records.append(StationRecord(sid, pos, row["provider"], StationKind.LTE))
    if not records:
        raise InputError("no base stations")
    return records


def nearest_building(citymap: CityMap, pt: Sequence[float], exclude=()) -> Building:
    """Building with the nearest centre; ties (within 1e-9 m) go to the lowest id."""
    centres = citymap.building_centres
    d = np.hypot(centres[:, 0] - pt[0], centres[:, 1] - pt[1])
    if exclude:
        d = np.where(np.isin(citymap.building_ids, list(exclude)), np.inf, d)
    best = np.flatnonzero(d <= d.min() + geom.EPS)
    i = best[np.argmin(citymap.building_ids[best])]
    return citymap.buildings[int(i)]


def snap_to_buildings(records, citymap: CityMap, radio: str = "lte") -> list[BaseStation]:
    if not citymap.buildings:
        raise InputError("no buildings in map")
    out: list[BaseStation] = []
    used: dict[int, int] = {}
    for rec in records:
        b = nearest_building(citymap, rec.position)
        if b.id in used:
            log.warning("station %s snaps to building %s already hosting station %s; dropped",
                        rec.id, b.id, used[b.id])
            continue
        used[b.id] = rec.id
        kind = rec.kind if isinstance(rec.kind, StationKind) else StationKind(rec.kind)
        out.append(BaseStation(rec.id, kind, b.centre, b.height, radio, b.id,
                               getattr(rec, "provider", "")))
    return out


def candidate_nn_positions(citymap: CityMap, lte_stations: Sequence[BaseStation]) -> dict[int, Point2D]:
    """Building id -> centre for every building not hosting an LTE station."""
    hosts = {s.host_building for s in lte_stations}
    return {b.id: b.centre for b in citymap.buildings if b.id not in hosts}


def classify_los(point: Sequence[float], user_height: float, bs: BaseStation,
                 citymap: CityMap, indoor: bool | None = None) -> Los:
    """LOS iff an outdoor point sees the station without crossing another footprint.

    Obstruction is tested in 2D; ``user_height`` only matters for distance.
    """
    if indoor is None:
        indoor = citymap.building_at(point) is not None
    if indoor:
        return Los.NLOS
    seg = LineString([tuple(point), tuple(bs.position)])
    for i in citymap.footprint_tree.query(seg, predicate="intersects"):
        if citymap.buildings[int(i)].id != bs.host_building:
            return Los.NLOS
    return Los.LOS


def los_mask(points: np.ndarray, bs: BaseStation, citymap: CityMap) -> np.ndarray:
    """Vectorised :func:`classify_los` for outdoor points: True where LOS."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    los = np.ones(len(points), dtype=bool)
    if not len(points) or not citymap.buildings:
        return los
    coords = np.empty((len(points), 2, 2))
    coords[:, 0] = points
    coords[:, 1] = bs.position
    lines = shapely.linestrings(coords)
    seg_idx, poly_idx = citymap.footprint_tree.query(lines, predicate="intersects")
    blocking = citymap.building_ids[poly_idx] != bs.host_building
    los[seg_idx[blocking]] = False
    return los
