"""RSS fields, cell loads, TDMA datarates, the multi-timestep day and KS tests."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .city import BaseStation, CityMap, StationKind, los_mask
from .placement import PlacementResult, place_nns
from .radio import (LTE_DEFAULT, NN_DEFAULT, SIGMA_LOS_DB, SIGMA_NLOS_DB,
                    RadioConfig, build_mcs_table, max_concurrent_users, path_loss,
                    received_power)
from .traffic import TrafficGenerator, TrafficSnapshot

log = logging.getLogger(__name__)

SHADOW_STREAM = 0x5F
KIND_CODE = {StationKind.LTE: 1, StationKind.NN: 2}
TECHS = ("LTE", "NN", "ALL")
TIE_DB = 1e-9


@dataclass(frozen=True)
class StationLink:
    """One station's received power at every entity (non-Void tiles, then buildings)."""

    station: BaseStation
    prx: np.ndarray
    los: np.ndarray


class RssEngine:
    """Per-station link evaluation over a fixed city, cached by station.

    Shadow fading for an (entity, station) pair comes from a stream keyed by the
    scenario seed and the station's kind and host building, so a station sees
    the same draws no matter when or on which thread it is evaluated.
    """

    def __init__(self, citymap: CityMap, radios: Mapping[str, RadioConfig] | None = None,
                 seed: int = 0, user_height: float = 1.5, threads: int | None = None,
                 shadow_fading: bool = True):
        self.citymap = citymap
        self.radios = dict(radios or {"lte": LTE_DEFAULT, "nn": NN_DEFAULT})
        self.tables = {k: build_mcs_table(v) for k, v in self.radios.items()}
        self.seed = seed
        self.user_height = user_height
        self.threads = threads
        self.shadow_fading = shadow_fading
        self.tile_mask = citymap.non_void
        self.tile_xy = citymap.tile_centres(self.tile_mask)
        self.tile_outdoor = citymap.outdoor[self.tile_mask]
        self.outdoor_xy = self.tile_xy[self.tile_outdoor]
        self.n_tiles = len(self.tile_xy)
        self.entity_xy = np.vstack([self.tile_xy, citymap.building_centres])
        self.entity_outdoor = np.concatenate(
            [self.tile_outdoor, np.zeros(len(citymap.buildings), dtype=bool)])
        self._cache: dict[tuple, StationLink] = {}
        citymap.footprint_tree  # build the cached STRtree before worker threads share it

    @staticmethod
    def _key(bs: BaseStation) -> tuple:
        return (bs.kind, bs.host_building, bs.radio, bs.antenna_height)

    def shadow_normals(self, bs: BaseStation) -> np.ndarray:
        seq = np.random.SeedSequence([self.seed, SHADOW_STREAM, KIND_CODE[bs.kind], bs.host_building])
        return np.random.default_rng(seq).standard_normal(len(self.entity_xy))

    def _compute(self, bs: BaseStation) -> StationLink:
        cfg = self.radios[bs.radio]
        los = np.zeros(len(self.entity_xy), dtype=bool)
        out_idx = np.flatnonzero(self.entity_outdoor)
        los[out_idx] = los_mask(self.entity_xy[out_idx], bs, self.citymap)
        d2 = ((self.entity_xy - np.asarray(bs.position)) ** 2).sum(axis=1)
        d = np.sqrt(d2 + (bs.antenna_height - self.user_height) ** 2)
        sf = 0.0
        if self.shadow_fading:
            sf = self.shadow_normals(bs) * np.where(los, SIGMA_LOS_DB, SIGMA_NLOS_DB)
        pl = path_loss(d, cfg.fc_ghz, los, bs.antenna_height, self.user_height, sf)
        prx = received_power(cfg, pl)
        prx.setflags(write=False)
        return StationLink(bs, prx, los)

    def link(self, bs: BaseStation) -> StationLink:
        key = self._key(bs)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self._compute(bs)
        return hit

    def precompute(self, stations: Sequence[BaseStation]) -> None:
        todo = [s for s in stations if self._key(s) not in self._cache]
        if not todo:
            return
        if self.threads == 1 or len(todo) == 1:
            links = [self._compute(s) for s in todo]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                links = list(pool.map(self._compute, todo))
        for s, link in zip(todo, links):
            self._cache.setdefault(self._key(s), link)

    def outdoor_prx(self, bs: BaseStation) -> np.ndarray:
        return self.link(bs).prx[: self.n_tiles][self.tile_outdoor]

    def field(self, stations: Sequence[BaseStation]) -> "RssField":
        stations = tuple(sorted(stations, key=lambda s: s.id))
        self.precompute(stations)
        n_ent = len(self.entity_xy)
        if not stations:
            best = np.full(n_ent, -np.inf)
            none = np.full(n_ent, -1, dtype=np.int64)
            return RssField(self, stations, best, none, best.copy())
        prx = np.vstack([self.link(s).prx for s in stations])
        floor = np.array([self.tables[s.radio].lowest_sensitivity for s in stations])
        eligible = prx >= floor[:, None]
        masked = np.where(eligible, prx, -np.inf)
        # lowest station id among those within TIE_DB of the best eligible power
        server = np.argmax(masked >= masked.max(axis=0) - TIE_DB, axis=0)
        served = eligible.any(axis=0)
        server = np.where(served, server, -1)
        cols = np.arange(n_ent)
        server_prx = np.where(served, masked[np.clip(server, 0, None), cols], -np.inf)
        return RssField(self, stations, prx.max(axis=0), server, server_prx)


@dataclass(frozen=True, eq=False)
class RssField:
    engine: RssEngine
    stations: tuple[BaseStation, ...]
    best_prx: np.ndarray  # max over stations, per entity
    server: np.ndarray  # index into stations, -1 when unserved
    server_prx: np.ndarray

    @property
    def n_tiles(self) -> int:
        return self.engine.n_tiles

    @property
    def tile_best(self) -> np.ndarray:
        return self.best_prx[: self.n_tiles]

    @property
    def building_best(self) -> np.ndarray:
        return self.best_prx[self.n_tiles:]

    def best_grid(self) -> np.ndarray:
        grid = np.full(self.engine.citymap.shape, np.nan)
        grid[self.engine.tile_mask] = self.tile_best
        return grid

    def server_grid(self) -> np.ndarray:
        grid = np.full(self.engine.citymap.shape, -1, dtype=np.int64)
        grid[self.engine.tile_mask] = self.server[: self.n_tiles]
        return grid

    def rss_samples(self) -> np.ndarray:
        """Best received power over non-Void tiles, sorted ascending."""
        return np.sort(self.tile_best)

    @property
    def entity_rates(self) -> np.ndarray:
        """Datarate each entity would get alone on its server (0 when unserved)."""
        rates = np.zeros(len(self.server))
        for i, s in enumerate(self.stations):
            sel = self.server == i
            rates[sel] = self.engine.tables[s.radio].rates(self.server_prx[sel])
        return rates

    def entity_users(self, snapshot: TrafficSnapshot) -> np.ndarray:
        return np.concatenate([snapshot.road_users[self.engine.tile_mask],
                               snapshot.building_users]).astype(float)

    def capacities(self) -> np.ndarray:
        return np.array([max_concurrent_users(self.engine.radios[s.radio]) for s in self.stations])


def compute_rss_field(citymap: CityMap, stations: Sequence[BaseStation], seed: int,
                      radios: Mapping[str, RadioConfig] | None = None,
                      user_height: float = 1.5, shadow_fading: bool = True) -> RssField:
    return RssEngine(citymap, radios, seed, user_height, shadow_fading=shadow_fading).field(stations)


@dataclass(frozen=True)
class CellLoad:
    station_id: int
    u_bs: float
    u_rat: int
    served: np.ndarray  # entity indices


def cell_loads(field: RssField, snapshot: TrafficSnapshot, beta: float) -> list[CellLoad]:
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    users = field.entity_users(snapshot)
    caps = field.capacities()
    loads = []
    for i, s in enumerate(field.stations):
        served = np.flatnonzero(field.server == i)
        loads.append(CellLoad(s.id, float(beta * users[served].sum()), int(caps[i]), served))
    return loads


def per_user_datarate(load: CellLoad, field: RssField, snapshot: TrafficSnapshot,
                      beta: float) -> float | None:
    """Mean per-user rate of one cell, shared by TDMA past capacity; None if idle."""
    if load.u_bs <= 0:
        return None
    weights = beta * field.entity_users(snapshot)[load.served]
    rates = field.entity_rates[load.served]
    mean = float((weights * rates).sum() / weights.sum())
    if load.u_bs > load.u_rat:
        mean *= load.u_rat / load.u_bs
    return mean


def station_datarates(field: RssField, users: np.ndarray, beta: float,
                      rates: np.ndarray | None = None) -> np.ndarray:
    """Vectorised per-station D*_BS (bit/s); NaN for idle stations."""
    n = len(field.stations)
    if n == 0:
        return np.empty(0)
    rates = field.entity_rates if rates is None else rates
    sel = field.server >= 0
    w = beta * users[sel]
    srv = field.server[sel]
    u_bs = np.bincount(srv, weights=w, minlength=n)
    total = np.bincount(srv, weights=w * rates[sel], minlength=n)
    caps = field.capacities()
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / u_bs
        share = np.minimum(1.0, caps / u_bs)
    return np.where(u_bs > 0, mean * share, np.nan)


def tech_means(field: RssField, station_rates: np.ndarray) -> dict[str, float]:
    """Mean D*_BS over loaded stations, per technology and combined (NaN if none)."""
    kinds = np.array([s.kind.value for s in field.stations])
    out = {}
    for tech in TECHS:
        sel = (kinds == tech) if tech != "ALL" else np.ones(len(kinds), dtype=bool)
        vals = station_rates[sel]
        vals = vals[~np.isnan(vals)]
        out[tech] = float(vals.mean()) if vals.size else math.nan
    return out


def ks_two_sample(a: Sequence[float], b: Sequence[float], tol: float = 1e-12) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    n_e = a.size * b.size / (a.size + b.size)
    lam = math.sqrt(n_e) * d
    if lam == 0:
        return d, 1.0
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        if term < tol:
            break
        total += term if k % 2 else -term
        k += 1
    return d, min(1.0, max(0.0, 2.0 * total))


# --------------------------------------------------------------------------
# Scenario

@dataclass
class VariantResult:
    nn_count: int
    field: RssField
    station_rates: np.ndarray  # (timesteps, stations), bit/s, NaN when idle
    means: dict[str, np.ndarray]  # tech -> (timesteps,), bit/s


@dataclass
class SimulationReport:
    hours: np.ndarray
    variants: dict[int, VariantResult]
    placement: PlacementResult | None
    ks: list[tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def baseline(self) -> int:
        return min(self.variants)

    def rss_samples(self, variant: int) -> np.ndarray:
        return self.variants[variant].field.rss_samples()


def timestep_hours(timesteps: int, sim_hours: float, start_hour: float) -> np.ndarray:
    step = sim_hours / timesteps
    return (start_hour + step * np.arange(timesteps)) % 24.0


def evaluate_deployment(field: RssField, snapshots: Sequence[TrafficSnapshot],
                        beta: float) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    rates = field.entity_rates
    per_station = np.vstack([station_datarates(field, field.entity_users(s), beta, rates)
                             for s in snapshots]) if snapshots else np.empty((0, len(field.stations)))
    means = {tech: np.array([tech_means(field, row)[tech] for row in per_station]) for tech in TECHS}
    return per_station, means


def run_scenario(cfg, citymap: CityMap, lte_stations: Sequence[BaseStation],
                 threads: int | None = None, inventory: Sequence[BaseStation] | None = None
                 ) -> SimulationReport:
    """Place nodes for the largest variant, then evaluate every variant over the day.

    Variant ``k`` uses the first ``k`` placed nodes: the greedy loop is
    deterministic and stopping at ``k`` yields exactly that prefix. With
    ``inventory`` a fixed deployment is evaluated as the only variant.
    """
    sim = cfg.sim
    engine = RssEngine(citymap, cfg.radios, sim.seed, sim.user_height, threads)
    placement = None
    if inventory is not None:
        n_nn = sum(1 for s in inventory if s.kind is StationKind.NN)
        deployments = {n_nn: list(inventory)}
    else:
        kmax = max(sim.variants)
        nn: list[BaseStation] = []
        if kmax > 0:
            engine.precompute(lte_stations)
            pcfg = replace(cfg.placement, max_total=len(lte_stations) + kmax)
            placement = place_nns(citymap, lte_stations, engine, pcfg)
            nn = placement.nn_stations
            if len(nn) < kmax:
                log.warning("only %d of %d requested nodes could be placed", len(nn), kmax)
        deployments = {k: list(lte_stations) + nn[:k] for k in sorted(set(sim.variants))}

    hours = timestep_hours(sim.timesteps, sim.hours, sim.start_hour)
    gen = TrafficGenerator(citymap, cfg.traffic, sim.seed)
    snapshots = [gen.snapshot(float(t)) for t in hours]

    variants = {}
    for k, stations in deployments.items():
        fld = engine.field(stations)
        per_station, means = evaluate_deployment(fld, snapshots, sim.beta)
        variants[k] = VariantResult(k, fld, per_station, means)

    report = SimulationReport(hours, variants, placement)
    base = report.baseline
    for k in variants:
        if k != base:
            d, p = ks_two_sample(report.rss_samples(base), report.rss_samples(k))
            report.ks.append((base, k, d, p))
    return report
