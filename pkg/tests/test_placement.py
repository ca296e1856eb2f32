import logging
import math

import numpy as np
import pytest

from conftest import toy_instance
from nomadtwin.city import StationKind, candidate_nn_positions
from nomadtwin.placement import (PlacementConfig, PlacementError, candidate_regions,
                                 nearest_tiles, place_nns, region_mean_rss, surviving_incentres)
from nomadtwin.sim import RssEngine


class FlatEngine:
    """Stand-in engine with a constant field per station."""

    def __init__(self, tile_xy, level=-80.0):
        self.outdoor_xy = np.asarray(tile_xy, dtype=float)
        self.level = level

    def outdoor_prx(self, bs):
        return np.full(len(self.outdoor_xy), self.level)


def incentre_oracle(a, b, c):
    la, lb, lc = math.dist(b, c), math.dist(a, c), math.dist(a, b)
    s = la + lb + lc
    return ((la * a[0] + lb * b[0] + lc * c[0]) / s, (la * a[1] + lb * b[1] + lc * c[1]) / s)


def test_equilateral_incentre_survival_follows_exact_distance():
    side = 300.0
    pts = [(0, 0), (side, 0), (side / 2, side * math.sqrt(3) / 2)]
    ic = incentre_oracle(*pts)
    nearest = min(math.dist(ic, p) for p in pts)
    assert nearest == pytest.approx(side / math.sqrt(3))
    out = surviving_incentres(pts, 100.0)
    assert (len(out) == 1) == (nearest > 100.0)
    assert out[0] == pytest.approx(ic)


def test_surviving_incentres_edge_cases(caplog):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 500, (15, 2))
    assert len(surviving_incentres(pts, 0.0)) == len(surviving_incentres(pts, 1e-12)) > 0
    with caplog.at_level(logging.WARNING):
        assert surviving_incentres([(0, 0), (1, 1), (2, 2)], 0.0) == []
    assert "no triangulation" in caplog.text


def test_region_mean_rss():
    xy = np.array([[i, 0.0] for i in range(10)])
    assert region_mean_rss((3, 0), 4, xy, np.full(10, -70.0)) == pytest.approx(-70.0)
    rss = np.arange(10, dtype=float) * -1.0
    assert region_mean_rss((6.2, 0), 1, xy, rss) == -6.0
    pos = (2.7, 0.4)
    order = sorted(range(10), key=lambda i: (math.dist(pos, xy[i]), i))[:5]
    assert region_mean_rss(pos, 5, xy, rss) == pytest.approx(np.mean(rss[order]))
    assert nearest_tiles((0, 0), 20, xy).size == 10
    with pytest.raises(PlacementError):
        region_mean_rss((0, 0), 3, np.empty((0, 2)), np.empty(0))


def test_needs_three_stations():
    city, lte = toy_instance()
    with pytest.raises(PlacementError, match="at least 3"):
        place_nns(city, lte[:2], FlatEngine([[0, 0]]), PlacementConfig(d_p=10))


def test_config_validation():
    with pytest.raises(ValueError):
        PlacementConfig(d_p=0)
    with pytest.raises(ValueError):
        PlacementConfig(n_tiles=0)


def engine_for(city):
    return RssEngine(city, seed=1, threads=1)


def test_single_candidate_near_incentre_selected():
    city, lte = toy_instance()
    ic = surviving_incentres([s.position for s in lte], 20.0)
    assert len(ic) == 1
    cands = candidate_nn_positions(city, lte)
    nearest = min(cands, key=lambda b: (math.dist(cands[b], ic[0]), b))
    res = place_nns(city, lte, engine_for(city), PlacementConfig(d_p=20, n_tiles=50, max_total=4))
    assert [p.building_id for p in res.placed] == [nearest]
    assert res.placed[0].iteration == 1


def test_huge_dp_places_nothing():
    city, lte = toy_instance()
    res = place_nns(city, lte, engine_for(city), PlacementConfig(d_p=1e6, max_total=10))
    assert res.placed == [] and res.final_stations == lte


def test_cap_places_exactly_one():
    city, lte = toy_instance()
    res = place_nns(city, lte, engine_for(city), PlacementConfig(d_p=5, n_tiles=50, max_total=4))
    assert len(res.placed) == 1
    nn = res.nn_stations[0]
    assert nn.kind is StationKind.NN and nn.radio == "nn"
    assert nn.id == max(s.id for s in lte) + 1
    assert nn.position == city.building(nn.host_building).centre


def test_runs_until_candidates_exhausted():
    city, lte = toy_instance()
    res = place_nns(city, lte, engine_for(city), PlacementConfig(d_p=1, n_tiles=20, max_total=50))
    ids = [p.building_id for p in res.placed]
    assert len(ids) == len(set(ids))
    assert len(res.final_stations) <= 50
    assert not set(ids) & {s.host_building for s in lte}


def test_candidate_regions_dedupe():
    city, lte = toy_instance()
    regions = candidate_regions([s.position for s in lte], candidate_nn_positions(city, lte), 1.0)
    assert sum(len(v) for v in regions.values()) == len(surviving_incentres(
        [s.position for s in lte], 1.0))
    assert list(regions) == sorted(regions)


def test_deterministic():
    city, lte = toy_instance()
    cfg = PlacementConfig(d_p=5, n_tiles=50, max_total=8)
    a = place_nns(city, lte, engine_for(city), cfg)
    b = place_nns(city, lte, RssEngine(city, seed=1, threads=4), cfg)
    assert [(p.building_id, p.mean_rss_before) for p in a.placed] == \
        [(p.building_id, p.mean_rss_before) for p in b.placed]
