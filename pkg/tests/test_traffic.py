import math
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nomadtwin.city import Building, BuildingType
from nomadtwin.geom import Point2D
from nomadtwin.traffic import (DEFAULT_CURVES, DEFAULT_RANGES, OccupancyProfile, SpatialField,
                               TemporalModel, TrafficConfig, TrafficGenerator, align_to_4am,
                               aligned, apportion, building_users, gaussian_field, generate_field,
                               max_occupancy, normalize_volume, road_budget, road_users,
                               temporal_volume)
from shapely.geometry import box

GRID = np.arange(0.0, 24.0, 0.01)


def v_oracle(t):
    return (173.29 + 89.83 * math.sin(math.pi / 12 * t + 3.08) + 52.6 * math.sin(math.pi / 6 * t + 2.08)
            + 16.68 * math.sin(math.pi / 4 * t + 1.13))


def test_temporal_value_at_zero():
    # hand evaluation: 173.29 + 5.5294 + 45.9166 + 15.0856
    assert temporal_volume(0.0) == pytest.approx(239.83, abs=0.01)
    assert temporal_volume(0.0) == pytest.approx(v_oracle(0.0), abs=1e-12)


@given(st.floats(-100, 100))
def test_temporal_periodic(t):
    assert temporal_volume(t) == pytest.approx(temporal_volume(t + 24), abs=1e-9)


def test_temporal_period_mean():
    t = np.arange(0, 24, 24 / 4800)
    assert temporal_volume(t).mean() == pytest.approx(173.29, abs=1e-6)


def test_alignment_puts_minimum_at_4():
    m = aligned(TemporalModel())
    vals = m(GRID)
    assert GRID[np.argmin(vals)] == pytest.approx(4.0, abs=0.01)
    assert m(4.0) <= vals.min() + 1e-12
    assert align_to_4am(m) == pytest.approx(0.0, abs=0.01)


def test_alignment_agrees_with_brute_force():
    raw = temporal_volume(GRID)
    t_raw = GRID[np.argmin(raw)]
    shift = align_to_4am(TemporalModel())
    assert (4.0 + shift) % 24 == pytest.approx(t_raw, abs=0.01)


def test_normalize_volume():
    assert normalize_volume(10, 10, 20, 5) == 1
    assert normalize_volume(20, 10, 20, 5) == 5
    assert normalize_volume(15, 10, 20, 5) == 3
    # 1 + 0.25 * 2 = 1.5 rounds half to even
    assert normalize_volume(12.5, 10, 20, 3) == 2
    with pytest.raises(ValueError):
        normalize_volume(1, 2, 2, 5)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 50))
def test_normalize_bounded_monotone(a, b, max_u):
    lo, hi = sorted((a, b))
    na, nb = normalize_volume(lo, 0, 1, max_u), normalize_volume(hi, 0, 1, max_u)
    assert 1 <= na <= nb <= max_u


def grid_xy(n, spacing=4.0):
    xs = (np.arange(n) + 0.5) * spacing
    gx, gy = np.meshgrid(xs, xs)
    return np.column_stack([gx.ravel(), gy.ravel()])


def test_field_sigma_zero_constant():
    f = generate_field(SpatialField(terms=50, sigma=0.0, mu=0.7), grid_xy(20), 3)
    assert np.allclose(f, math.exp(0.7), rtol=0, atol=1e-12)


def test_field_bounded_and_seeded():
    p = SpatialField(terms=100)
    r = gaussian_field(p, grid_xy(50), 1)
    assert np.all(np.abs(r) <= 2 * math.sqrt(100))
    assert np.array_equal(r, gaussian_field(p, grid_xy(50), 1))
    assert not np.array_equal(r, gaussian_field(p, grid_xy(50), 2))
    assert np.all(generate_field(p, grid_xy(10), 1) > 0)


def test_hotspot_count():
    assert SpatialField().hotspot_count(100, 100) == math.ceil(10000 / 420)
    assert SpatialField(hotspots=3).hotspot_count(100, 100) == 3


def test_apportion_uniform_and_conservation():
    out = apportion(103, np.ones(10))
    assert out.sum() == 103
    assert set(out.tolist()) <= {10, 11}
    w = np.random.default_rng(0).uniform(0.1, 5, 37)
    assert apportion(999, w).sum() == 999


def test_apportion_double_weight():
    w = np.array([2.0] + [1.0] * 9)
    out = apportion(55, w)
    assert abs(out[0] - 2 * out[1]) <= 1


def test_road_users_cap_discards_overflow():
    dens = np.array([100.0, 1, 1, 1])
    uncapped = apportion(road_budget(10, dens, 1), dens)
    capped = road_users(10, dens, 1, max_users=5)
    assert capped.max() <= 5
    assert capped.sum() < uncapped.sum()
    with pytest.raises(ValueError):
        road_users(3, np.array([]), 1, 5)


def test_road_budget_formula():
    dens = np.array([1.0, 2, 3, 4])
    assert road_budget(6, dens, 2) == round(10 / 2 * 6 / 2.5)


def bld(kind, bid=1):
    return Building(bid, box(0, 0, 10, 10), 10.0, kind, Point2D(5, 5))


def test_building_users_rules():
    zero = {k: (0.0,) * 24 for k in BuildingType}
    one = {k: (1.0,) * 24 for k in BuildingType}
    fixed = {k: (50, 50) for k in BuildingType}
    assert building_users(3, bld(BuildingType.OFFICE), OccupancyProfile(fixed, zero), 0) == 0
    assert building_users(3, bld(BuildingType.OFFICE), OccupancyProfile(fixed, one), 0) == 50


def test_hospital_capacity_range():
    prof = OccupancyProfile()
    vals = {max_occupancy(bld(BuildingType.HOSPITAL, i), prof, 0) for i in range(300)}
    assert min(vals) >= 200 and max(vals) <= 450
    assert len(vals) > 50


def test_default_profile_is_valid():
    prof = OccupancyProfile()
    assert prof.ranges[BuildingType.HOTEL] == (50, 200)
    for k in BuildingType:
        assert len(DEFAULT_CURVES[k]) == 24 and k in DEFAULT_RANGES
    with pytest.raises(ValueError):
        OccupancyProfile({**DEFAULT_RANGES, BuildingType.MALL: (10, 5)})


def test_snapshot_invariants(bundled):
    city, _ = bundled
    cfg = TrafficConfig()
    gen = TrafficGenerator(city, cfg, seed=4)
    again = TrafficGenerator(city, cfg, seed=4)
    for t in (0, 4, 13.5, 23):
        s = gen.snapshot(t)
        assert np.array_equal(s.road_users, again.snapshot(t).road_users)
        assert s.road_users.min() >= 0
        assert s.road_users.max() <= cfg.temporal.max_users_per_tile
        assert np.all(s.road_users[~city.outdoor] == 0)
        assert np.all(s.building_users <= gen.capacity)
        assert np.all(s.building_users >= 0)
    # quietest road hour is 4 a.m.
    totals = [gen.snapshot(h).road_users.sum() for h in range(24)]
    assert totals[4] == min(totals)
