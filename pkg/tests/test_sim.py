import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import kolmogorov

from conftest import make_city, rect, stations_at
from nomadtwin.config import ScenarioConfig
from nomadtwin.radio import LTE_DEFAULT, build_mcs_table
from nomadtwin.sim import (CellLoad, RssEngine, cell_loads, compute_rss_field, ks_two_sample,
                           per_user_datarate, run_scenario, station_datarates, tech_means,
                           timestep_hours)
from nomadtwin.traffic import TrafficGenerator, TrafficSnapshot, TrafficConfig

DX = math.sqrt(100**2 - 8.5**2)  # 2D offset giving a 3D distance of exactly 100 m


def one_link_city():
    # open ground, one 10 m building whose centre sits DX east of tile (row 12, col 0)
    cx, cy = 2.0 + DX, 50.0
    return make_city(200, 100, [(rect(cx - 4, cy - 4, 8, 8), {"building": "yes", "height": "10"})],
                     parks=[rect(0, 0, 200, 100)])


def tile_index(city, row, col):
    """Entity index of a non-Void tile (row-major over non-Void tiles)."""
    return int(np.flatnonzero(city.non_void.ravel())
               .tolist().index(row * city.shape[1] + col))


def test_zero_stations_unserved(bundled):
    city, _ = bundled
    f = compute_rss_field(city, [], seed=0)
    assert np.all(f.server == -1)
    assert np.all(np.isneginf(f.best_prx))


def test_single_los_link_hand_value():
    city = one_link_city()
    lte = stations_at(city, [(2 + DX, 50)])
    assert lte[0].antenna_height == 10
    f = compute_rss_field(city, lte, seed=0, shadow_fading=False)
    i = tile_index(city, 12, 0)
    assert f.engine.link(lte[0]).los[i]
    assert f.tile_best[i] == pytest.approx(-27.92, abs=0.01)
    assert f.server[i] == 0


def test_equidistant_tie_goes_to_lower_id():
    city = make_city(200, 100, [(rect(16, 46, 8, 8), {"building": "yes", "height": "10"}),
                                (rect(176, 46, 8, 8), {"building": "yes", "height": "10"})],
                     parks=[rect(0, 0, 200, 100)])
    lte = stations_at(city, [(20, 50), (180, 50)])
    f = compute_rss_field(city, lte, seed=0, shadow_fading=False)
    # columns 24 and 25 mirror each other about x = 100
    a, b = tile_index(city, 12, 24), tile_index(city, 12, 25)
    assert f.best_prx[a] == pytest.approx(f.best_prx[b], abs=1e-9)
    assert f.server[a] == 0 and f.server[b] == 1
    # identical station under a higher id: every entity ties and the lower id serves
    twin = replace(lte[0], id=9)
    tied = RssEngine(city, seed=0, shadow_fading=False).field([twin, lte[0]])
    served = tied.server[tied.server >= 0]
    assert served.size and all(tied.stations[i].id == lte[0].id for i in served)


def test_server_is_argmax(bundled):
    city, lte = bundled
    f = compute_rss_field(city, lte, seed=3)
    prx = np.vstack([f.engine.link(s).prx for s in f.stations])
    served = f.server >= 0
    chosen = prx[f.server[served], np.flatnonzero(served)]
    assert np.all(chosen >= prx[:, served].max(axis=0) - 1e-9)
    floor = build_mcs_table(LTE_DEFAULT).lowest_sensitivity
    assert np.all(prx[:, ~served] < floor)


def test_shadow_draws_frozen_per_pair(bundled):
    city, lte = bundled
    e1, e2 = RssEngine(city, seed=5, threads=1), RssEngine(city, seed=5, threads=3)
    e2.precompute(lte[::-1])
    for s in lte[:3]:
        assert np.array_equal(e1.link(s).prx, e2.link(s).prx)
    assert not np.array_equal(RssEngine(city, seed=6).link(lte[0]).prx, e1.link(lte[0]).prx)


def snapshot_for(field, tile_users, building_users):
    """Snapshot with given users on the first non-Void tiles and first buildings."""
    city = field.engine.citymap
    grid = np.zeros(city.shape, dtype=np.int64)
    rows, cols = np.nonzero(field.engine.tile_mask)
    for k, u in enumerate(tile_users):
        grid[rows[k], cols[k]] = u
    b = np.zeros(len(city.buildings), dtype=np.int64)
    b[: len(building_users)] = building_users
    return TrafficSnapshot(0.0, grid, b)


def test_cell_load_examples():
    city = one_link_city()
    lte = stations_at(city, [(2 + DX, 50)])
    f = compute_rss_field(city, lte, seed=0, shadow_fading=False)
    assert np.all(f.server == 0)
    snap = snapshot_for(f, [10, 10], [20])
    assert cell_loads(f, snap, 0.25)[0].u_bs == pytest.approx(10.0)
    assert cell_loads(f, snap, 0.0)[0].u_bs == 0
    assert cell_loads(f, snap, 1.0)[0].u_bs == pytest.approx(40.0)
    assert cell_loads(f, snap, 1.0)[0].u_rat == 15
    with pytest.raises(ValueError):
        cell_loads(f, snap, 1.5)


def fake(rates, users):
    rates = np.asarray(rates, dtype=float)
    users = np.asarray(users, dtype=float)
    return SimpleNamespace(entity_rates=rates, entity_users=lambda snap: users)


def test_per_user_datarate_examples():
    d = 18.9e6
    f = fake([d, d], [4, 4])
    load = CellLoad(1, 8.0, 15, np.array([0, 1]))
    assert per_user_datarate(load, f, None, 1.0) == pytest.approx(d)
    over = CellLoad(1, 30.0, 15, np.array([0, 1]))
    assert per_user_datarate(over, fake([d, d], [15, 15]), None, 1.0) == pytest.approx(d / 2)
    mixed = fake([18.9e6, 56.7e6], [3, 3])
    assert per_user_datarate(CellLoad(1, 6.0, 15, np.array([0, 1])), mixed, None, 1.0) == \
        pytest.approx(37.8e6)
    assert per_user_datarate(CellLoad(1, 0.0, 15, np.array([], dtype=int)), f, None, 1.0) is None


def test_tdma_continuous_at_capacity():
    f = fake([20e6], [15])
    at = per_user_datarate(CellLoad(1, 15.0, 15, np.array([0])), f, None, 1.0)
    just = per_user_datarate(CellLoad(1, 15.0 + 1e-9, 15, np.array([0])), f, None, 1.0)
    assert at == pytest.approx(just, rel=1e-9)


def test_vectorised_rates_match_scalar(bundled):
    city, lte = bundled
    f = compute_rss_field(city, lte, seed=2)
    gen = TrafficGenerator(city, TrafficConfig(), 2)
    snap = gen.snapshot(12.0)
    vec = station_datarates(f, f.entity_users(snap), 0.25)
    for load, v in zip(cell_loads(f, snap, 0.25), vec):
        s = per_user_datarate(load, f, snap, 0.25)
        assert (s is None and math.isnan(v)) or s == pytest.approx(v, rel=1e-12)
    caps = np.array([build_mcs_table(LTE_DEFAULT).max_rate] * len(vec))
    assert np.all(vec[~np.isnan(vec)] <= caps[~np.isnan(vec)])
    assert np.all(vec[~np.isnan(vec)] >= 0)


def test_tech_means_exclude_idle(bundled):
    city, lte = bundled
    f = compute_rss_field(city, lte[:3], seed=0)
    rates = np.array([10.0, np.nan, 20.0])
    m = tech_means(f, rates)
    assert m["LTE"] == 15.0 and m["ALL"] == 15.0 and math.isnan(m["NN"])


def test_timestep_hours():
    h = timestep_hours(50, 50, 0)
    assert h.tolist() == [i % 24 for i in range(50)]
    assert timestep_hours(4, 2, 23).tolist() == [23, 23.5, 0, 0.5]


def brute_ks(a, b):
    pts = sorted(set(a) | set(b))
    return max(abs(sum(x <= p for x in a) / len(a) - sum(x <= p for x in b) / len(b)) for p in pts)


def test_ks_examples():
    assert ks_two_sample([1, 2, 3], [3, 2, 1]) == (0.0, 1.0)
    d, p = ks_two_sample([1, 2], [5, 6, 7])
    assert d == 1.0 and 0 <= p < 1
    a, b = [1, 2, 3], [1.5, 2.5, 3.5]
    assert ks_two_sample(a, b)[0] == pytest.approx(brute_ks(a, b), abs=1e-12)
    with pytest.raises(ValueError):
        ks_two_sample([], [1])


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=15),
       st.lists(st.integers(-20, 20), min_size=1, max_size=15))
@settings(max_examples=100, deadline=None)
def test_ks_matches_oracles(a, b):
    d, p = ks_two_sample(a, b)
    assert d == pytest.approx(brute_ks(a, b), abs=1e-12)
    lam = math.sqrt(len(a) * len(b) / (len(a) + len(b))) * d
    assert p == pytest.approx(min(1.0, float(kolmogorov(lam))) if lam > 0 else 1.0, abs=1e-9)
    # invariant under a common strictly increasing map
    assert ks_two_sample(np.exp(np.asarray(a) / 5.0), np.exp(np.asarray(b) / 5.0))[0] == \
        pytest.approx(d, abs=1e-12)


def small_cfg(**sim):
    base = ScenarioConfig()
    return replace(base, sim=replace(base.sim, **sim))


def test_run_scenario_no_load(bundled):
    city, lte = bundled
    rep = run_scenario(small_cfg(timesteps=1, beta=0.0, variants=(0,)), city, lte, threads=2)
    var = rep.variants[0]
    assert np.all(np.isnan(var.station_rates))
    assert all(np.isnan(v).all() for v in var.means.values())
    assert var.field.rss_samples().size == city.non_void.sum()
    assert rep.ks == []


def test_run_scenario_variants(bundled):
    city, lte = bundled
    cfg = small_cfg(timesteps=6, variants=(0, 3, 6))
    rep = run_scenario(cfg, city, lte, threads=2)
    again = run_scenario(cfg, city, lte, threads=1)
    assert np.array_equal(rep.variants[0].field.best_prx, again.variants[0].field.best_prx)
    assert [p.building_id for p in rep.placement.placed] == \
        [p.building_id for p in again.placement.placed]
    base = rep.variants[0].field.tile_best
    prev = base
    for k in (3, 6):
        cur = rep.variants[k].field.tile_best
        assert np.all(cur >= prev)
        prev = cur
    assert [(a, b) for a, b, _, _ in rep.ks] == [(0, 3), (0, 6)]
    assert len(rep.variants[6].field.stations) == len(lte) + 6
