"""Shared fixtures: a tiny XML map builder and the bundled scenario."""

from __future__ import annotations

import sys
from xml.etree import ElementTree as ET

import pytest

from nomadtwin.city import (CityConfig, Projection, build_city, load_base_stations,
                            parse_map_extract, snap_to_buildings)
from nomadtwin.cli import bundled_paths

ORIGIN = (27.7, 85.3)


def rect(x0, y0, w, h):
    return [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]


def make_extract(width, height, buildings=(), roads=(), parks=()) -> bytes:
    """OSM XML for shapes given in local metres on a ``width`` x ``height`` map.

    ``buildings`` holds (ring, tags) pairs, ``roads`` (polyline, tags), ``parks`` rings.
    """
    proj = Projection(ORIGIN[0], ORIGIN[1], width, height)
    root = ET.Element("osm", version="0.6")
    minlat, minlon = proj.to_latlon(0, 0)
    maxlat, maxlon = proj.to_latlon(width, height)
    ET.SubElement(root, "bounds", minlat=repr(minlat), minlon=repr(minlon),
                  maxlat=repr(maxlat), maxlon=repr(maxlon))
    ways = []
    counter = iter(range(1, 10**6))

    def add(pts, tags, closed):
        refs = []
        for x, y in pts:
            nid = next(counter)
            lat, lon = proj.to_latlon(x, y)
            ET.SubElement(root, "node", id=str(nid), lat=repr(lat), lon=repr(lon))
            refs.append(nid)
        if closed:
            refs.append(refs[0])
        ways.append((refs, tags))

    for ring, tags in buildings:
        add(ring, tags, True)
    for line, tags in roads:
        add(line, tags, False)
    for ring in parks:
        add(ring, {"leisure": "park"}, True)
    for wid, (refs, tags) in enumerate(ways, start=1):
        w = ET.SubElement(root, "way", id=str(wid))
        for r in refs:
            ET.SubElement(w, "nd", ref=str(r))
        for k, v in tags.items():
            ET.SubElement(w, "tag", k=k, v=v)
    return ET.tostring(root)


def make_city(width, height, buildings=(), roads=(), parks=(), tile_size=4.0, seed=0):
    raw = parse_map_extract(make_extract(width, height, buildings, roads, parks))
    proj = Projection(ORIGIN[0], ORIGIN[1], width, height)
    return build_city(raw, CityConfig(tile_size=tile_size, seed=seed), proj)


def stations_at(citymap, points):
    """Snap LTE stations given as local (x, y) to the nearest buildings."""
    rows = ["id,x,y,provider,kind"] + [f"{i},{x},{y},P,LTE" for i, (x, y) in enumerate(points, 1)]
    recs = load_base_stations("\n".join(rows), local_coords=True)
    return snap_to_buildings(recs, citymap)


@pytest.fixture(scope="session")
def bundled():
    map_path, bs_path = bundled_paths()
    raw = parse_map_extract(map_path.read_bytes())
    citymap = build_city(raw, CityConfig())
    recs = load_base_stations(bs_path.read_bytes(), citymap.projection)
    return citymap, snap_to_buildings(recs, citymap)


TOY_LTE = [(8, 8), (104, 8), (56, 104)]
TOY_CANDIDATES = [(30, 30), (60, 40), (80, 26), (45, 70), (72, 66), (18, 60), (95, 58), (56, 10)]


def toy_instance(seed=0):
    """120 m square (30 x 30 tiles): three LTE hosts in a triangle and eight small buildings."""
    blds = [(rect(x, y, 8, 8), {"building": "office"}) for x, y in TOY_LTE]
    blds += [(rect(x, y, 6, 6), {"building": "residential"}) for x, y in TOY_CANDIDATES]
    city = make_city(120, 120, blds, parks=[rect(0, 0, 120, 120)], seed=seed)
    lte = stations_at(city, [(x + 4, y + 4) for x, y in TOY_LTE])
    return city, lte


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.line(line)
