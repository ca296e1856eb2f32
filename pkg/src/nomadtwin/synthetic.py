"""Procedural grid city used as the bundled scenario.

Streets run every 100 m on a 1.2 x 1.0 km map. Each block holds a park, one
building, a pair of tangent buildings (which merge), two separate buildings,
or four wings around a courtyard. Twelve LTE stations sit near the buildings
closest to a 4 x 3 lattice, with a few metres of reported-position error.
"""

from __future__ import annotations

from pathlib import Path
from xml.etree import ElementTree as ET

import numpy as np

from .city import Projection

WIDTH, HEIGHT = 1200.0, 1000.0
BLOCK = 100.0
ORIGIN = (27.7100, 85.3200)  # central Kathmandu
ARTERIAL_EVERY = 3  # every third street is a four-lane road

KIND_WEIGHTS = [
    ("residential", 0.40), ("apartments", 0.10), ("yes", 0.05), ("office", 0.12),
    ("retail", 0.15), ("school", 0.06), ("hotel", 0.07), ("commercial", 0.05),
]
LTE_TARGETS = [(x, y) for y in (170.0, 500.0, 830.0) for x in (150.0, 450.0, 750.0, 1050.0)]


class _Doc:
    def __init__(self, proj: Projection):
        self.proj = proj
        self.root = ET.Element("osm", version="0.6", generator="nomadtwin-synthetic")
        minlat, minlon = proj.to_latlon(0.0, 0.0)
        maxlat, maxlon = proj.to_latlon(WIDTH, HEIGHT)
        ET.SubElement(self.root, "bounds", minlat=f"{minlat:.9f}", minlon=f"{minlon:.9f}",
                      maxlat=f"{maxlat:.9f}", maxlon=f"{maxlon:.9f}")
        self.nodes: list[ET.Element] = []
        self.ways: list[ET.Element] = []
        self.next_node = 1
        self.next_way = 1

    def node(self, x: float, y: float) -> int:
        lat, lon = self.proj.to_latlon(x, y)
        nid = self.next_node
        self.next_node += 1
        self.nodes.append(ET.Element("node", id=str(nid), lat=f"{lat:.9f}", lon=f"{lon:.9f}"))
        return nid

    def way(self, pts, tags: dict[str, str], closed: bool) -> int:
        ids = [self.node(x, y) for x, y in pts]
        if closed:
            ids.append(ids[0])
        wid = self.next_way
        self.next_way += 1
        w = ET.Element("way", id=str(wid))
        for i in ids:
            ET.SubElement(w, "nd", ref=str(i))
        for k, v in tags.items():
            ET.SubElement(w, "tag", k=k, v=v)
        self.ways.append(w)
        return wid

    def tostring(self) -> bytes:
        self.root.extend(self.nodes)
        self.root.extend(self.ways)
        ET.indent(self.root)
        return ET.tostring(self.root, encoding="utf-8", xml_declaration=True) + b"\n"


def _rect(x0, y0, w, h):
    return [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]


def _street_half_width(index: int) -> float:
    return 7.0 if index % ARTERIAL_EVERY == 0 else 3.5


def generate(seed: int = 7) -> tuple[bytes, bytes, list[tuple[float, float]]]:
    """Return (map XML, station CSV, building centres in local metres)."""
    rng = np.random.default_rng(seed)
    proj = Projection(ORIGIN[0], ORIGIN[1], WIDTH, HEIGHT)
    doc = _Doc(proj)

    nx, ny = int(WIDTH // BLOCK), int(HEIGHT // BLOCK)
    for i in range(nx + 1):
        x = min(max(i * BLOCK, 1.0), WIDTH - 1.0)
        lanes = "4" if i % ARTERIAL_EVERY == 0 else "2"
        doc.way([(x, 0.0), (x, HEIGHT)], {"highway": "residential" if lanes == "2" else "primary",
                                          "lanes": lanes}, closed=False)
    for j in range(ny + 1):
        y = min(max(j * BLOCK, 1.0), HEIGHT - 1.0)
        lanes = "4" if j % ARTERIAL_EVERY == 0 else "2"
        doc.way([(0.0, y), (WIDTH, y)], {"highway": "residential" if lanes == "2" else "primary",
                                         "lanes": lanes}, closed=False)

    names = [k for k, _ in KIND_WEIGHTS]
    probs = np.array([p for _, p in KIND_WEIGHTS])
    probs /= probs.sum()
    special = {(2, 7): "hospital", (9, 2): "hospital", (5, 4): "mall", (10, 8): "mall"}
    centres: list[tuple[float, float]] = []

    def building(pts, tag, height=None):
        tags = {"building": tag}
        if height is not None:
            tags["height"] = f"{height:.1f}"
        doc.way(pts, tags, closed=True)

    for bi in range(nx):
        for bj in range(ny):
            x0 = bi * BLOCK + _street_half_width(bi) + 3.1
            x1 = (bi + 1) * BLOCK - _street_half_width(bi + 1) - 3.1
            y0 = bj * BLOCK + _street_half_width(bj) + 3.1
            y1 = (bj + 1) * BLOCK - _street_half_width(bj + 1) - 3.1
            bw, bh = x1 - x0, y1 - y0
            tag = special.get((bi, bj)) or str(rng.choice(names, p=probs))
            height = float(rng.uniform(8, 14)) if rng.random() < 0.08 else None
            roll = rng.random()
            if (bi, bj) not in special and roll < 0.08:
                doc.way(_rect(x0 + 1.3, y0 + 1.3, bw - 2.6, bh - 2.6), {"leisure": "park"}, closed=True)
                continue
            if (bi, bj) in special or roll < 0.45:
                w = rng.uniform(0.35, 0.8) * bw
                h = rng.uniform(0.35, 0.8) * bh
                bx = x0 + rng.uniform(0, bw - w)
                by = y0 + rng.uniform(0, bh - h)
                building(_rect(bx, by, w, h), tag, height)
                centres.append((bx + w / 2, by + h / 2))
            elif roll < 0.70:
                # two tangent parts sharing an edge
                w1 = rng.uniform(0.2, 0.4) * bw
                w2 = rng.uniform(0.2, 0.4) * bw
                h = rng.uniform(0.35, 0.7) * bh
                bx = x0 + rng.uniform(0, bw - w1 - w2)
                by = y0 + rng.uniform(0, bh - h)
                building(_rect(bx, by, w1, h), tag, height)
                building(_rect(bx + w1, by, w2, h), str(rng.choice(names, p=probs)))
                centres.append((bx + (w1 + w2) / 2, by + h / 2))
            elif roll < 0.95:
                # two detached buildings on opposite sides of the block
                w = rng.uniform(0.25, 0.4) * bw
                h1 = rng.uniform(0.3, 0.8) * bh
                h2 = rng.uniform(0.3, 0.8) * bh
                ya = y0 + rng.uniform(0, bh - h1)
                yb = y0 + rng.uniform(0, bh - h2)
                building(_rect(x0, ya, w, h1), tag, height)
                building(_rect(x1 - w, yb, w, h2), str(rng.choice(names, p=probs)))
                centres += [(x0 + w / 2, ya + h1 / 2), (x1 - w / 2, yb + h2 / 2)]
            else:
                # four wings around a courtyard
                t = 0.25 * min(bw, bh)
                building(_rect(x0, y0, bw, t), tag, height)
                building(_rect(x0, y1 - t, bw, t), tag)
                building(_rect(x0, y0 + t, t, bh - 2 * t), tag)
                building(_rect(x1 - t, y0 + t, t, bh - 2 * t), tag)
                centres.append(((x0 + x1) / 2, (y0 + y1) / 2))

    xy = np.array(centres)
    rows = ["id,lat,lon,provider,kind"]
    for sid, (tx, ty) in enumerate(LTE_TARGETS, start=1):
        d2 = ((xy - (tx, ty)) ** 2).sum(axis=1)
        cx, cy = xy[int(np.argmin(d2))]
        jx, jy = rng.normal(0.0, 3.0, 2)
        lat, lon = proj.to_latlon(cx + jx, cy + jy)
        provider = "NCell" if sid % 2 else "NTCell"
        rows.append(f"{sid},{lat:.7f},{lon:.7f},{provider},LTE")
    return doc.tostring(), ("\n".join(rows) + "\n").encode(), centres


def write_bundled(outdir: str | Path, seed: int = 7) -> tuple[Path, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    xml, stations, _ = generate(seed)
    map_path = outdir / "bundled_city.osm"
    bs_path = outdir / "bundled_stations.csv"
    map_path.write_bytes(xml)
    bs_path.write_bytes(stations)
    return map_path, bs_path


if __name__ == "__main__":
    import sys

    print(*write_bundled(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data"))
