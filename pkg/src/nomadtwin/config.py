"""Scenario configuration stored as TOML.

Every section and key has a default; unknown keys are rejected so typos fail
loudly. Frequencies are written in MHz and converted to Hz on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .city import BuildingType, CityConfig, InputError
from .placement import PlacementConfig
from .radio import LTE_DEFAULT, NN_DEFAULT, RadioConfig
from .traffic import (DEFAULT_CURVES, DEFAULT_RANGES, OccupancyProfile, SpatialField,
                      TemporalModel, TrafficConfig)

SECTIONS = ("map", "stations", "radio", "traffic", "placement", "sim")


@dataclass(frozen=True)
class MapConfig:
    tile_size: float = 4.0
    height_min: float = 5.0
    height_max: float = 15.0
    gap_tolerance: float = 0.25


@dataclass(frozen=True)
class StationsConfig:
    local_coords: bool = False


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    timesteps: int = 50
    hours: float = 50.0
    start_hour: float = 0.0
    beta: float = 0.25
    user_height: float = 1.5
    variants: tuple[int, ...] = (0, 5, 10, 15, 20)

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise InputError("sim.beta must lie in [0, 1]")
        if self.timesteps < 1:
            raise InputError("sim.timesteps must be >= 1")
        if self.hours <= 0:
            raise InputError("sim.hours must be positive")
        if not self.variants or any(v < 0 for v in self.variants):
            raise InputError("sim.variants must be non-negative node counts")


@dataclass(frozen=True)
class ScenarioConfig:
    map: MapConfig = MapConfig()
    stations: StationsConfig = StationsConfig()
    lte: RadioConfig = LTE_DEFAULT
    nn: RadioConfig = NN_DEFAULT
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    placement: PlacementConfig = PlacementConfig()
    sim: SimConfig = SimConfig()

    @property
    def radios(self) -> dict[str, RadioConfig]:
        return {"lte": self.lte, "nn": self.nn}

    def city_config(self) -> CityConfig:
        return CityConfig(self.map.tile_size, (self.map.height_min, self.map.height_max),
                          self.sim.seed, self.map.gap_tolerance)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, sim=replace(self.sim, seed=seed))


# --------------------------------------------------------------------------
# dict <-> dataclass

RADIO_KEYS = {
    # toml key: (attribute, scale)
    "ptx_dbm": ("ptx_dbm", 1.0),
    "gtx_dbi": ("gtx_dbi", 1.0),
    "grx_dbi": ("grx_dbi", 1.0),
    "fc_mhz": ("fc_hz", 1e6),
    "band_min_mhz": ("band_min_hz", 1e6),
    "band_max_mhz": ("band_max_hz", 1e6),
    "bandwidth_mhz": ("bandwidth_hz", 1e6),
    "beamwidth_deg": ("beamwidth_deg", 1.0),
    "overhead": ("overhead", 1.0),
    "antenna_streams": ("antenna_streams", None),
    "thresholds_dbm": ("thresholds_dbm", None),
}

TRAFFIC_KEYS = {
    "max_users_per_tile": ("temporal", "max_users_per_tile"),
    "field_terms": ("spatial", "terms"),
    "omega_max": ("spatial", "omega_max"),
    "sigma": ("spatial", "sigma"),
    "mu": ("spatial", "mu"),
    "hotspots": ("spatial", "hotspots"),
    "hotspot_area_m2": ("spatial", "hotspot_area"),
}


def _check_keys(section: str, given: Mapping[str, Any], allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise InputError(f"[{section}] unknown key(s): {', '.join(unknown)}")


def _coerce(section: str, key: str, value, default):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in value)
    except (TypeError, ValueError):
        raise InputError(f"[{section}] {key}: invalid value {value!r}") from None
    return value


def _section(cls, name: str, data: Mapping[str, Any]):
    defaults = cls()
    names = [f.name for f in fields(cls)]
    _check_keys(name, data, names)
    kwargs = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in data.items()}
    try:
        return replace(defaults, **kwargs)
    except ValueError as exc:
        raise InputError(f"[{name}] {exc}") from None


def _radio(name: str, data: Mapping[str, Any], default: RadioConfig) -> RadioConfig:
    _check_keys(f"radio.{name}", data, RADIO_KEYS)
    kwargs = {}
    for key, value in data.items():
        attr, scale = RADIO_KEYS[key]
        current = getattr(default, attr)
        value = _coerce(f"radio.{name}", key, value, current if scale is None else 1.0)
        kwargs[attr] = value * scale if scale is not None else value
    try:
        return replace(default, prb=None, **kwargs)
    except ValueError as exc:
        raise InputError(f"[radio.{name}] {exc}") from None


def _radio_dict(cfg: RadioConfig) -> dict[str, Any]:
    out = {}
    for key, (attr, scale) in RADIO_KEYS.items():
        value = getattr(cfg, attr)
        if scale is None:
            out[key] = list(value) if isinstance(value, tuple) else value
        else:
            out[key] = round(value / scale, 9)
    return out


def _occupancy(data: Mapping[str, Any]) -> OccupancyProfile:
    by_name = {k.value: k for k in BuildingType}
    _check_keys("traffic.occupancy", data, by_name)
    ranges = dict(DEFAULT_RANGES)
    curves = dict(DEFAULT_CURVES)
    for name, entry in data.items():
        kind = by_name[name]
        _check_keys(f"traffic.occupancy.{name}", entry, ("users", "curve"))
        try:
            if "users" in entry:
                u1, u2 = entry["users"]
                ranges[kind] = (int(u1), int(u2))
            if "curve" in entry:
                curves[kind] = tuple(float(v) for v in entry["curve"])
        except (TypeError, ValueError):
            raise InputError(f"[traffic.occupancy.{name}] invalid entry") from None
    try:
        return OccupancyProfile(ranges, curves)
    except ValueError as exc:
        raise InputError(f"[traffic.occupancy] {exc}") from None


def _traffic(data: Mapping[str, Any]) -> TrafficConfig:
    _check_keys("traffic", data, [*TRAFFIC_KEYS, "occupancy"])
    temporal, spatial = TemporalModel(), SpatialField()
    t_kw, s_kw = {}, {}
    for key, value in data.items():
        if key == "occupancy":
            continue
        part, attr = TRAFFIC_KEYS[key]
        if key == "hotspots":
            value = _coerce("traffic", key, value, 0)
            s_kw[attr] = value if value > 0 else None
            continue
        target = temporal if part == "temporal" else spatial
        value = _coerce("traffic", key, value, getattr(target, attr))
        (t_kw if part == "temporal" else s_kw)[attr] = value
    if t_kw.get("max_users_per_tile", 1) < 1:
        raise InputError("[traffic] max_users_per_tile must be >= 1")
    if s_kw.get("terms", 1) < 1:
        raise InputError("[traffic] field_terms must be >= 1")
    occupancy = _occupancy(data.get("occupancy", {}))
    return TrafficConfig(replace(temporal, **t_kw), replace(spatial, **s_kw), occupancy)


def _traffic_dict(cfg: TrafficConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, (part, attr) in TRAFFIC_KEYS.items():
        value = getattr(cfg.temporal if part == "temporal" else cfg.spatial, attr)
        out[key] = 0 if value is None else value
    out["occupancy"] = {
        k.value: {"users": list(cfg.occupancy.ranges[k]), "curve": list(cfg.occupancy.curves[k])}
        for k in BuildingType
    }
    return out


def from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    _check_keys("top level", data, SECTIONS)
    radio = data.get("radio", {})
    _check_keys("radio", radio, ("lte", "nn"))
    return ScenarioConfig(
        map=_section(MapConfig, "map", data.get("map", {})),
        stations=_section(StationsConfig, "stations", data.get("stations", {})),
        lte=_radio("lte", radio.get("lte", {}), LTE_DEFAULT),
        nn=_radio("nn", radio.get("nn", {}), NN_DEFAULT),
        traffic=_traffic(data.get("traffic", {})),
        placement=_section(PlacementConfig, "placement", data.get("placement", {})),
        sim=_section(SimConfig, "sim", data.get("sim", {})),
    )


def _plain(obj) -> dict[str, Any]:
    return {f.name: (list(v) if isinstance(v := getattr(obj, f.name), tuple) else v)
            for f in fields(obj)}


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return {
        "map": _plain(cfg.map),
        "stations": _plain(cfg.stations),
        "radio": {"lte": _radio_dict(cfg.lte), "nn": _radio_dict(cfg.nn)},
        "traffic": _traffic_dict(cfg.traffic),
        "placement": _plain(cfg.placement),
        "sim": _plain(cfg.sim),
    }


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"config is not valid TOML: {exc}") from None
    return from_dict(data)


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text(encoding="utf-8"))
