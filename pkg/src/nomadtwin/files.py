"""City artifact (versioned JSON) and CSV exports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from .city import (BaseStation, Building, BuildingType, CityConfig, CityMap, InputError,
                   Projection, StationKind)
from .geom import Point2D
from .placement import PlacementResult
from .sim import SimulationReport
from .traffic import TrafficSnapshot

FORMAT = "nomadtwin-city"
VERSION = 1
TILE_CHARS = ".OI"  # indexed by TileKind


def fmt(v: float) -> str:
    """Four decimals; blank for NaN."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return f"{v:.4f}"


def _writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


# --------------------------------------------------------------------------
# city artifact

def _station_dict(s: BaseStation) -> dict:
    return {"id": s.id, "kind": s.kind.value, "x": s.position.x, "y": s.position.y,
            "antenna_height": s.antenna_height, "radio": s.radio,
            "host_building": s.host_building, "provider": s.provider}


def _station_from(d: dict) -> BaseStation:
    return BaseStation(int(d["id"]), StationKind(d["kind"]), Point2D(d["x"], d["y"]),
                       float(d["antenna_height"]), d["radio"], int(d["host_building"]),
                       d.get("provider", ""))


def city_to_json(citymap: CityMap, stations: Sequence[BaseStation], build: CityConfig) -> str:
    proj = citymap.projection
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "build": {"tile_size": build.tile_size, "height_range": list(build.height_range),
                  "seed": build.seed, "gap": build.gap},
        "width": citymap.width,
        "height": citymap.height,
        "tile_size": citymap.tile_size,
        "projection": None if proj is None else
        {"lat0": proj.lat0, "lon0": proj.lon0, "width": proj.width, "height": proj.height},
        "buildings": [
            {"id": b.id, "kind": b.kind.value, "height": b.height,
             "centre": list(b.centre), "footprint": [list(c) for c in b.footprint.exterior.coords]}
            for b in citymap.buildings
        ],
        "roads": shapely.to_wkb(citymap.roads, hex=True),
        "open_areas": shapely.to_wkb(citymap.open_areas, hex=True),
        "tiles": {
            "kind": ["".join(TILE_CHARS[k] for k in row) for row in citymap.tile_kind.tolist()],
            "host": citymap.tile_host.tolist(),
        },
        "stations": [_station_dict(s) for s in stations],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_city(path: str | Path, citymap: CityMap, stations: Sequence[BaseStation],
              build: CityConfig) -> None:
    Path(path).write_text(city_to_json(citymap, stations, build), encoding="utf-8", newline="\n")


def load_city(path: str | Path) -> tuple[CityMap, list[BaseStation], CityConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a city artifact ({exc})") from None
    if doc.get("format") != FORMAT:
        raise InputError(f"{path}: not a city artifact")
    if doc.get("version") != VERSION:
        raise InputError(f"{path}: unsupported artifact version {doc.get('version')}")
    proj = doc["projection"]
    buildings = tuple(
        Building(b["id"], Polygon(b["footprint"]), b["height"], BuildingType(b["kind"]),
                 Point2D(*b["centre"]))
        for b in doc["buildings"]
    )
    kind = np.array([[TILE_CHARS.index(c) for c in row] for row in doc["tiles"]["kind"]],
                    dtype=np.int8)
    host = np.array(doc["tiles"]["host"], dtype=np.int64).reshape(kind.shape)
    kind.setflags(write=False)
    host.setflags(write=False)
    citymap = CityMap(doc["width"], doc["height"], doc["tile_size"], buildings,
                      shapely.from_wkb(doc["roads"]), shapely.from_wkb(doc["open_areas"]),
                      kind, host, None if proj is None else Projection(**proj))
    b = doc["build"]
    build = CityConfig(b["tile_size"], tuple(b["height_range"]), b["seed"], b["gap"])
    return citymap, [_station_from(s) for s in doc["stations"]], build


# --------------------------------------------------------------------------
# placement outputs

def write_placement(path: Path, result: PlacementResult | None) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["iteration", "building_id", "x", "y", "mean_rss_before"])
        for p in (result.placed if result else []):
            w.writerow([p.iteration, p.building_id, fmt(p.position.x), fmt(p.position.y),
                        fmt(p.mean_rss_before)])


INVENTORY_HEADER = ["id", "x", "y", "provider", "kind", "building_id", "antenna_height"]


def write_inventory(path: Path, stations: Iterable[BaseStation]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(INVENTORY_HEADER)
        for s in stations:
            w.writerow([s.id, repr(s.position.x), repr(s.position.y), s.provider, s.kind.value,
                        s.host_building, repr(s.antenna_height)])


def load_inventory(path: str | Path, citymap: CityMap) -> list[BaseStation]:
    """Read a deployment written by :func:`write_inventory` (LTE and NN rows)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    reader = csv.DictReader(text.splitlines())
    missing = [c for c in INVENTORY_HEADER if c not in (reader.fieldnames or [])]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            kind = StationKind(row["kind"])
            bid = int(row["building_id"])
            b = citymap.building(bid)
        except (ValueError, KeyError):
            raise InputError(f"{path}:{lineno}: bad station row") from None
        out.append(BaseStation(int(row["id"]), kind, b.centre, float(row["antenna_height"]),
                               kind.value.lower(), bid, row["provider"]))
    if not out:
        raise InputError(f"{path}: no base stations")
    return out


# --------------------------------------------------------------------------
# simulation report

def write_report(outdir: Path, report: SimulationReport) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for k, var in report.variants.items():
        fld = var.field
        path = outdir / f"rss_field_{k}.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(["tile_row", "tile_col", "best_prx_dbm", "server_id", "server_kind"])
            rows, cols = np.nonzero(fld.engine.tile_mask)
            server = fld.server[: fld.n_tiles]
            for r, c, prx, srv in zip(rows.tolist(), cols.tolist(), fld.tile_best.tolist(),
                                      server.tolist()):
                st = fld.stations[srv] if srv >= 0 else None
                w.writerow([r, c, fmt(prx), st.id if st else "", st.kind.value if st else ""])
        written.append(path)

        path = outdir / f"cdf_{k}.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(["rss_dbm"])
            for v in fld.rss_samples().tolist():
                w.writerow([fmt(v)])
        written.append(path)

    path = outdir / "datarate_timeseries.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["timestep", "variant", "tech", "mean_mbps"])
        for k, var in report.variants.items():
            for tech, series in var.means.items():
                for i, v in enumerate(series.tolist()):
                    w.writerow([i, k, tech, fmt(v / 1e6)])
    written.append(path)

    path = outdir / "ks_tests.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["variant_a", "variant_b", "D", "p"])
        for a, b, d, p in report.ks:
            w.writerow([a, b, f"{d:.6f}", f"{p:.6g}"])
    written.append(path)

    path = outdir / "summary.txt"
    path.write_text(summary_text(report), encoding="utf-8", newline="\n")
    written.append(path)
    return written


def summary_rows(report: SimulationReport) -> list[dict]:
    ks = {b: p for a, b, _, p in report.ks}
    rows = []
    for k, var in report.variants.items():
        all_mean = var.means["ALL"]
        finite = all_mean[~np.isnan(all_mean)]
        rows.append({
            "variant": k,
            "stations": len(var.field.stations),
            "mean_mbps": float(finite.mean() / 1e6) if finite.size else math.nan,
            "median_rss_dbm": float(np.median(var.field.rss_samples())),
            "ks_p_vs_baseline": ks.get(k, math.nan),
        })
    return rows


def summary_text(report: SimulationReport) -> str:
    lines = [f"{'variant':>7} {'stations':>8} {'mean_mbps':>10} {'median_rss_dbm':>15} {'ks_p':>10}"]
    for r in summary_rows(report):
        p = "" if math.isnan(r["ks_p_vs_baseline"]) else f"{r['ks_p_vs_baseline']:.3g}"
        lines.append(f"{r['variant']:>7} {r['stations']:>8} {fmt(r['mean_mbps']):>10} "
                     f"{fmt(r['median_rss_dbm']):>15} {p:>10}")
    lines.append("mean over timesteps of the per-station D*_BS average; idle stations excluded")
    return "\n".join(lines) + "\n"


def write_traffic(outdir: Path, snapshots: Sequence[TrafficSnapshot], citymap: CityMap) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    roads = outdir / "traffic_roads.csv"
    fh, w = _writer(roads)
    with fh:
        w.writerow(["t", "tile_row", "tile_col", "users"])
        for snap in snapshots:
            rows, cols = np.nonzero(snap.road_users)
            for r, c in zip(rows.tolist(), cols.tolist()):
                w.writerow([fmt(snap.t), r, c, int(snap.road_users[r, c])])
    bldg = outdir / "traffic_buildings.csv"
    fh, w = _writer(bldg)
    with fh:
        w.writerow(["t", "building_id", "users"])
        for snap in snapshots:
            for b, u in zip(citymap.buildings, snap.building_users.tolist()):
                w.writerow([fmt(snap.t), b.id, u])
    return [roads, bldg]
