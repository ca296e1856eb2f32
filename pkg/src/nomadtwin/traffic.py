"""Spatio-temporal user demand for roads and buildings.

Road users follow a daily third-order sinusoid scaled into ``[1, max_u]``
and spread across outdoor tiles by a log-normal random field. Building users
follow a per-type occupancy curve times a per-building capacity draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .city import Building, BuildingType, CityMap

FIELD_STREAM = 0xF1E1D
OCCUPANCY_STREAM = 0x0CC

HOURS = 24.0


@dataclass(frozen=True)
class TemporalModel:
    base: float = 173.29
    amplitudes: tuple[float, ...] = (89.83, 52.6, 16.68)
    frequencies: tuple[float, ...] = (math.pi / 12, math.pi / 6, math.pi / 4)
    phases: tuple[float, ...] = (3.08, 2.08, 1.13)
    shift: float = 0.0
    max_users_per_tile: int = 10

    def raw(self, t_prime):
        t = np.asarray(t_prime, dtype=float)
        v = self.base + sum(a * np.sin(w * t + p)
                            for a, w, p in zip(self.amplitudes, self.frequencies, self.phases))
        return float(v) if v.ndim == 0 else v

    def __call__(self, t):
        """Aligned volume: the raw curve evaluated at ``t + shift``."""
        return self.raw(np.asarray(t, dtype=float) + self.shift)

    @property
    def extrema(self) -> tuple[float, float]:
        lo, _ = _refine(self, minimize=True)
        hi, _ = _refine(self, minimize=False)
        return float(self(lo)), float(self(hi))


def temporal_volume(t_prime, model: TemporalModel = TemporalModel()):
    return model.raw(t_prime)


def _refine(model: TemporalModel, minimize: bool, step: float = 0.01) -> tuple[float, float]:
    grid = np.arange(0.0, HOURS, step)
    vals = model(grid) if minimize else -model(grid)
    t0 = float(grid[int(np.argmin(vals))])
    sign = 1.0 if minimize else -1.0
    res = minimize_scalar(lambda t: sign * model(t), bounds=(t0 - step, t0 + step),
                          method="bounded", options={"xatol": 1e-8})
    return float(res.x) % HOURS, sign * float(res.fun)


def align_to_4am(model: TemporalModel, target: float = 4.0) -> float:
    """Shift (hours) to add to ``model.shift`` so the daily minimum falls at ``target``."""
    t_min, _ = _refine(model, minimize=True)
    delta = (t_min - target) % HOURS
    return delta - HOURS if delta > HOURS / 2 else delta


def aligned(model: TemporalModel, target: float = 4.0) -> TemporalModel:
    return replace(model, shift=model.shift + align_to_4am(model, target))


def normalize_volume(v: float, vmin: float, vmax: float, max_u: int) -> int:
    if not vmin < vmax:
        raise ValueError("normalisation needs vmin < vmax")
    if max_u < 1:
        raise ValueError("max_u must be >= 1")
    n = round(1 + (v - vmin) / (vmax - vmin) * (max_u - 1))
    return int(min(max(n, 1), max_u))


@dataclass(frozen=True)
class SpatialField:
    terms: int = 500
    omega_max: float = 0.05
    sigma: float = 1.0
    mu: float = 0.0
    hotspots: int | None = None  # None -> derived from the map area
    hotspot_area: float = 420.0

    def hotspot_count(self, width: float, height: float) -> int:
        if self.hotspots is not None:
            return self.hotspots
        return max(1, math.ceil(width * height / self.hotspot_area))


def field_terms(params: SpatialField, seed: int):
    """Frequencies and phases of the sum-of-sinusoids field."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, FIELD_STREAM]))
    i = rng.uniform(0.0, params.omega_max, params.terms)
    j = rng.uniform(0.0, params.omega_max, params.terms)
    phi = rng.uniform(0.0, 2 * math.pi, params.terms)
    psi = rng.uniform(0.0, 2 * math.pi, params.terms)
    return i, j, phi, psi


def gaussian_field(params: SpatialField, xy: np.ndarray, seed: int, chunk: int = 4096) -> np.ndarray:
    """Unit-variance random field ``r`` at each ``(x, y)`` row."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    i, j, phi, psi = field_terms(params, seed)
    out = np.empty(len(xy))
    scale = 2.0 / math.sqrt(params.terms)
    for s in range(0, len(xy), chunk):
        x = xy[s:s + chunk, :1]
        y = xy[s:s + chunk, 1:]
        out[s:s + chunk] = scale * np.sum(np.cos(i * x + phi) * np.cos(j * y + psi), axis=1)
    return out


def generate_field(params: SpatialField, xy: np.ndarray, seed: int) -> np.ndarray:
    """Log-normal traffic density ``exp(sigma * r + mu)`` at each point."""
    return np.exp(params.sigma * gaussian_field(params, xy, seed) + params.mu)


def apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``.

    Remainder ties go to the lower index.
    """
    weights = np.asarray(weights, dtype=float)
    if total <= 0 or weights.size == 0:
        return np.zeros(weights.shape, dtype=np.int64)
    quota = total * weights / weights.sum()
    base = np.floor(quota).astype(np.int64)
    left = int(total - base.sum())
    if left > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:left]] += 1
    return base


def road_budget(norm_volume: int, density: np.ndarray, hotspots: int) -> int:
    density = np.asarray(density, dtype=float)
    return int(round(density.sum() / hotspots * norm_volume / density.mean()))


def road_users(norm_volume: int, density: np.ndarray, hotspots: int, max_users: int) -> np.ndarray:
    """Per-tile road users: budget apportioned by density, then capped per tile."""
    density = np.asarray(density, dtype=float)
    if density.size == 0:
        raise ValueError("no outdoor tiles to place road users on")
    users = apportion(road_budget(norm_volume, density, hotspots), density)
    return np.minimum(users, max_users)


def _flat(values):
    return tuple(float(v) for v in values)


# Default hourly occupancy fractions, hour 0..23
DEFAULT_CURVES: dict[BuildingType, tuple[float, ...]] = {
    BuildingType.HOTEL: _flat([.85] * 7 + [.7, .55, .45, .4, .4, .45, .45, .4, .4, .45, .55, .65, .75, .8, .85, .85, .85]),
    BuildingType.SCHOOL: _flat([0] * 7 + [.2, .85, .95, .95, .9, .8, .9, .9, .6, .25, .1, .05, 0, 0, 0, 0, 0]),
    BuildingType.RESIDENTIAL: _flat([.95] * 6 + [.9, .75, .5, .35, .3, .3, .35, .3, .3, .35, .45, .6, .75, .85, .9, .95, .95, .95]),
    BuildingType.OFFICE: _flat([.02] * 7 + [.15, .55, .9, .95, .9, .7, .85, .9, .85, .6, .3, .12, .05, .03, .02, .02, .02]),
    BuildingType.SMALL_BUSINESS: _flat([0] * 7 + [.2, .5, .7, .75, .8, .85, .75, .7, .75, .8, .85, .7, .45, .2, 0, 0, 0]),
    BuildingType.HOSPITAL: _flat([.8] * 7 + [.85, .9, .95, .95, .95, .95, .95, .95, .95, .9, .9, .85, .85, .8, .8, .8, .8]),
    BuildingType.MALL: _flat([0] * 9 + [.1, .35, .5, .65, .6, .55, .6, .7, .85, .95, .9, .6, .2, 0, 0]),
}

DEFAULT_RANGES: dict[BuildingType, tuple[int, int]] = {
    BuildingType.HOTEL: (50, 200),
    BuildingType.SCHOOL: (100, 200),
    BuildingType.RESIDENTIAL: (10, 50),
    BuildingType.OFFICE: (25, 75),
    BuildingType.SMALL_BUSINESS: (5, 30),
    BuildingType.HOSPITAL: (200, 450),
    BuildingType.MALL: (500, 1000),
}


@dataclass(frozen=True)
class OccupancyProfile:
    ranges: Mapping[BuildingType, tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    curves: Mapping[BuildingType, Sequence[float]] = field(default_factory=lambda: dict(DEFAULT_CURVES))

    def __post_init__(self):
        for kind in BuildingType:
            if kind not in self.ranges or kind not in self.curves:
                raise ValueError(f"occupancy profile lacks building type {kind.value}")
            u1, u2 = self.ranges[kind]
            if not 1 <= u1 <= u2:
                raise ValueError(f"{kind.value}: user range must satisfy 1 <= u1 <= u2")
            curve = self.curves[kind]
            if len(curve) != 24 or any(not 0 <= r <= 1 for r in curve):
                raise ValueError(f"{kind.value}: occupancy curve needs 24 fractions in [0, 1]")

    def rate(self, kind: BuildingType, t: float) -> float:
        return float(self.curves[kind][int(math.floor(t)) % 24])


def max_occupancy(building: Building, profile: OccupancyProfile, seed: int) -> int:
    u1, u2 = profile.ranges[building.kind]
    rng = np.random.default_rng(np.random.SeedSequence([seed, OCCUPANCY_STREAM, building.id]))
    return int(rng.integers(u1, u2 + 1))


def building_users(t: float, building: Building, profile: OccupancyProfile, seed: int) -> int:
    return int(round(profile.rate(building.kind, t) * max_occupancy(building, profile, seed)))


@dataclass(frozen=True)
class TrafficSnapshot:
    t: float
    road_users: np.ndarray  # (rows, cols), zero off the outdoor tiles
    building_users: np.ndarray  # aligned with CityMap.buildings


@dataclass(frozen=True)
class TrafficConfig:
    temporal: TemporalModel = TemporalModel()
    spatial: SpatialField = SpatialField()
    occupancy: OccupancyProfile = field(default_factory=OccupancyProfile)


class TrafficGenerator:
    """Snapshots for one city and seed; the spatial density is drawn once."""

    def __init__(self, citymap: CityMap, config: TrafficConfig, seed: int):
        self.citymap = citymap
        self.config = config
        self.seed = seed
        self.temporal = aligned(config.temporal)
        self.vmin, self.vmax = self.temporal.extrema
        self.outdoor = citymap.outdoor
        self.density = generate_field(config.spatial, citymap.tile_centres(self.outdoor), seed)
        self.hotspots = config.spatial.hotspot_count(citymap.width, citymap.height)
        self.capacity = np.array(
            [max_occupancy(b, config.occupancy, seed) for b in citymap.buildings], dtype=np.int64)

    def norm_volume(self, t: float) -> int:
        return normalize_volume(self.temporal(t), self.vmin, self.vmax,
                                self.temporal.max_users_per_tile)

    def snapshot(self, t: float) -> TrafficSnapshot:
        grid = np.zeros(self.citymap.shape, dtype=np.int64)
        if self.density.size:
            grid[self.outdoor] = road_users(self.norm_volume(t), self.density, self.hotspots,
                                            self.temporal.max_users_per_tile)
        occ = self.config.occupancy
        rates = np.array([occ.rate(b.kind, t) for b in self.citymap.buildings])
        users = np.rint(rates * self.capacity).astype(np.int64)
        return TrafficSnapshot(t, grid, users)
