"""Greedy nomadic-node placement over Delaunay in-centres of the deployment."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geom
from .city import BaseStation, CityMap, StationKind, candidate_nn_positions
from .geom import Point2D

log = logging.getLogger(__name__)


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class PlacementConfig:
    d_p: float = 100.0
    n_tiles: int = 1000
    max_total: int = 50

    def __post_init__(self):
        if self.d_p <= 0:
            raise ValueError("d_p must be positive")
        if self.n_tiles < 1:
            raise ValueError("n_tiles must be >= 1")
        if self.max_total < 1:
            raise ValueError("max_total must be >= 1")


@dataclass(frozen=True)
class PlacedNode:
    iteration: int
    building_id: int
    position: Point2D
    mean_rss_before: float
    incentres: tuple[Point2D, ...]  # surviving in-centres that led to this building


@dataclass
class PlacementResult:
    placed: list[PlacedNode]
    final_stations: list[BaseStation]
    lte_count: int

    @property
    def per_iteration_metric(self) -> list[float]:
        return [p.mean_rss_before for p in self.placed]

    @property
    def nn_stations(self) -> list[BaseStation]:
        return self.final_stations[self.lte_count:]


def surviving_incentres(positions: Sequence[Sequence[float]], d_p: float) -> list[Point2D]:
    """In-centres of the Delaunay triangles lying farther than ``d_p`` from every position."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    tris = geom.delaunay(pts)
    if not tris:
        log.warning("no triangulation of %d station positions (fewer than 3 or collinear)", len(pts))
        return []
    out = []
    for t in tris:
        ic = geom.triangle_incentre(t)
        nearest = np.sqrt(((pts - ic) ** 2).sum(axis=1)).min()
        if nearest > d_p:
            out.append(ic)
    return out


def nearest_tiles(pos: Sequence[float], n: int, tile_xy: np.ndarray) -> np.ndarray:
    """Indices of the ``n`` tiles closest to ``pos``; equal distances keep index order."""
    d2 = (tile_xy[:, 0] - pos[0]) ** 2 + (tile_xy[:, 1] - pos[1]) ** 2
    return np.argsort(d2, kind="stable")[:n]


def region_mean_rss(pos: Sequence[float], n: int, tile_xy: np.ndarray, tile_rss: np.ndarray) -> float:
    """Mean best-server RSS of the ``n`` eligible tiles nearest to ``pos``."""
    if len(tile_xy) == 0:
        raise PlacementError("no eligible tiles for the region RSS")
    return float(np.mean(tile_rss[nearest_tiles(pos, n, tile_xy)]))


def _nearest_candidate(ic: Point2D, cand_ids: np.ndarray, cand_xy: np.ndarray) -> int:
    d = np.hypot(cand_xy[:, 0] - ic.x, cand_xy[:, 1] - ic.y)
    best = np.flatnonzero(d <= d.min() + geom.EPS)
    return int(cand_ids[best].min())


def candidate_regions(positions, candidates: dict[int, Point2D], d_p: float) -> dict[int, list[Point2D]]:
    """Candidate building id -> in-centres that picked it, for one iteration."""
    if not candidates:
        return {}
    ids = np.fromiter(candidates.keys(), dtype=int)
    xy = np.array([candidates[i] for i in ids], dtype=float)
    regions: dict[int, list[Point2D]] = {}
    for ic in surviving_incentres(positions, d_p):
        regions.setdefault(_nearest_candidate(ic, ids, xy), []).append(ic)
    return dict(sorted(regions.items()))


def place_nns(citymap: CityMap, lte_stations: Sequence[BaseStation], engine,
              cfg: PlacementConfig, nn_radio: str = "nn") -> PlacementResult:
    """Add nomadic nodes one at a time where the local mean RSS is worst.

    ``engine`` must provide ``outdoor_xy`` (outdoor tile centres) and
    ``outdoor_prx(station)``, the station's received power on those tiles.
    """
    stations = list(lte_stations)
    if len(stations) < 3:
        raise PlacementError(
            f"placement needs at least 3 seed stations to triangulate, got {len(stations)}")
    tile_xy = engine.outdoor_xy
    best = np.full(len(tile_xy), -np.inf)
    for s in stations:
        best = np.maximum(best, engine.outdoor_prx(s))

    candidates = candidate_nn_positions(citymap, stations)
    next_id = max(s.id for s in stations) + 1
    placed: list[PlacedNode] = []
    iteration = 0
    while len(stations) < cfg.max_total and candidates:
        iteration += 1
        positions = [s.position for s in stations]
        regions = candidate_regions(positions, candidates, cfg.d_p)
        if not regions:
            log.info("placement stopped after %d nodes: no in-centre beyond d_p", len(placed))
            break
        scores = {bid: region_mean_rss(candidates[bid], cfg.n_tiles, tile_xy, best)
                  for bid in regions}
        chosen = min(scores, key=lambda bid: (scores[bid], bid))
        b = citymap.building(chosen)
        nn = BaseStation(next_id, StationKind.NN, b.centre, b.height, nn_radio, b.id)
        next_id += 1
        stations.append(nn)
        del candidates[chosen]
        best = np.maximum(best, engine.outdoor_prx(nn))
        placed.append(PlacedNode(iteration, chosen, b.centre, scores[chosen],
                                 tuple(regions[chosen])))
    if len(stations) < cfg.max_total and not candidates:
        log.info("placement stopped: no candidate buildings left")
    return PlacementResult(placed, stations, len(lte_stations))
