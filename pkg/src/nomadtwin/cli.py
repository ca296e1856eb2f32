"""Command-line entry point: build-city, place, run, export-traffic."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import config as config_mod
from . import files
from .city import (InputError, build_city, candidate_nn_positions, load_base_stations,
                   parse_map_extract, snap_to_buildings)
from .geom import GeometryError
from .placement import PlacementError, place_nns
from .sim import RssEngine, run_scenario, timestep_hours
from .traffic import TrafficGenerator

log = logging.getLogger("nomadtwin")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2


def bundled_paths() -> tuple[Path, Path]:
    data = resources.files("nomadtwin") / "data"
    return Path(str(data / "bundled_city.osm")), Path(str(data / "bundled_stations.csv"))


def _read(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except IsADirectoryError:
        raise InputError(f"{path}: is a directory") from None


def _scenario(args) -> config_mod.ScenarioConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.local_coords:
        cfg = replace(cfg, stations=replace(cfg.stations, local_coords=True))
    return cfg


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def cmd_build_city(args) -> int:
    cfg = _scenario(args)
    if args.bundled:
        map_path, bs_path = bundled_paths()
        map_path = Path(args.map) if args.map else map_path
        bs_path = Path(args.stations) if args.stations else bs_path
    else:
        if not args.map or not args.stations:
            raise InputError("build-city needs MAP and STATIONS paths (or --bundled)")
        map_path, bs_path = Path(args.map), Path(args.stations)
    map_bytes, bs_bytes = _read(map_path), _read(bs_path)
    try:
        raw = parse_map_extract(map_bytes)
    except InputError as exc:
        raise InputError(f"{map_path}: {exc}") from None
    build = cfg.city_config()
    citymap = build_city(raw, build)
    try:
        records = load_base_stations(bs_bytes, citymap.projection, cfg.stations.local_coords)
    except InputError as exc:
        raise InputError(f"{bs_path}: {exc}") from None
    stations = snap_to_buildings(records, citymap, radio="lte")
    files.save_city(args.output, citymap, stations, build)
    c = citymap.counts()
    print(f"buildings={c['buildings']} indoor_tiles={c['indoor']} outdoor_tiles={c['outdoor']} "
          f"void_tiles={c['void']} lte={len(stations)} "
          f"nn_candidates={len(candidate_nn_positions(citymap, stations))}")
    print(f"wrote {args.output}")
    return EXIT_OK


def _load(args):
    citymap, stations, _ = files.load_city(args.city)
    lte = [s for s in stations if s.kind.value == "LTE"]
    return citymap, lte


def cmd_place(args) -> int:
    cfg = _scenario(args)
    citymap, lte = _load(args)
    if args.nn_count < 0:
        raise InputError("--nn-count must be non-negative")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    result = None
    stations = list(lte)
    if args.nn_count > 0:
        available = len(candidate_nn_positions(citymap, lte))
        if args.nn_count > available:
            log.warning("requested %d nodes but only %d candidate buildings exist",
                        args.nn_count, available)
        engine = RssEngine(citymap, cfg.radios, cfg.sim.seed, cfg.sim.user_height, _threads(args))
        engine.precompute(lte)
        pcfg = replace(cfg.placement, max_total=len(lte) + args.nn_count)
        result = place_nns(citymap, lte, engine, pcfg)
        stations = result.final_stations
        if len(result.placed) < args.nn_count:
            log.warning("placed %d of %d requested nodes", len(result.placed), args.nn_count)
    files.write_placement(out / "placement.csv", result)
    files.write_inventory(out / "inventory.csv", stations)
    print(f"placed {0 if result is None else len(result.placed)} nodes; wrote {out}")
    return EXIT_OK


def _variants(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad variant list {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("variants must be non-negative integers")
    return vals


def cmd_run(args) -> int:
    cfg = _scenario(args)
    if args.variants:
        cfg = replace(cfg, sim=replace(cfg.sim, variants=args.variants))
    citymap, lte = _load(args)
    inventory = files.load_inventory(args.inventory, citymap) if args.inventory else None
    report = run_scenario(cfg, citymap, lte, threads=_threads(args), inventory=inventory)
    out = Path(args.output)
    files.write_report(out, report)
    print(files.summary_text(report), end="")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_export_traffic(args) -> int:
    cfg = _scenario(args)
    citymap, _ = _load(args)
    gen = TrafficGenerator(citymap, cfg.traffic, cfg.sim.seed)
    hours = timestep_hours(cfg.sim.timesteps, cfg.sim.hours, cfg.sim.start_hour)
    snaps = [gen.snapshot(float(t)) for t in hours]
    paths = files.write_traffic(Path(args.output), snaps, citymap)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (defaults built in)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--local-coords", action="store_true",
                        help="station CSV uses local x,y metres instead of lat,lon")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nomadtwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-city", parents=[common], help="map extract + stations -> city artifact")
    p.add_argument("map", nargs="?", help="OSM XML extract")
    p.add_argument("stations", nargs="?", help="LTE inventory CSV")
    p.add_argument("-o", "--output", required=True, help="city artifact path (JSON)")
    p.add_argument("--bundled", action="store_true", help="use the bundled synthetic city")
    p.set_defaults(func=cmd_build_city)

    p = sub.add_parser("place", parents=[common], help="greedy nomadic-node placement")
    p.add_argument("city")
    p.add_argument("--nn-count", type=int, required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("run", parents=[common], help="evaluate deployments over the day")
    p.add_argument("city")
    p.add_argument("--variants", type=_variants, help="comma-separated NN counts, e.g. 0,5,10")
    p.add_argument("--inventory", help="evaluate a fixed deployment from `place`")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export-traffic", parents=[common], help="dump traffic snapshots")
    p.add_argument("city")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_export_traffic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, GeometryError, PlacementError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
