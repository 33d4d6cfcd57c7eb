import json
import math
import os

import numpy as np
import pytest

from app import cost_model as cm
from app import geo_pipeline as gp
from app.errors import ModelDomainError
from app.providers import csv_provider
from app.providers.geojson_provider import read_stations_geojson
from app.schemas import (
    Corridor,
    CorridorAxis,
    CostParams,
    DemandPoint,
    PipelineSettings,
    RouteForm,
    ServiceArea,
    Station,
)

PARAMS = CostParams(value_of_time=16.5, access_factor=2.0, waiting_factor=1.5, operating_cost=0.5, vehicle_cost=12.0)
SETTINGS = PipelineSettings(bins=8)


@pytest.fixture
def network(fixtures_dir):
    stations = csv_provider.read_stations(os.path.join(fixtures_dir, "stations.csv"))
    points = csv_provider.read_points(os.path.join(fixtures_dir, "points.csv"))
    return stations, points


@pytest.fixture
def result(network):
    stations, points = network
    return gp.run_pipeline(stations, points, PARAMS, SETTINGS, max_workers=1)


def point(pid, x, y, trips=1.0):
    return DemandPoint(id=pid, x=x, y=y, trips=trips)


# --- nearest station ------------------------------------------------------------

def test_nearest_station(network):
    stations, points = network
    membership = gp.assign_to_nearest_station(stations, points)
    assert {pid for pid, sid in membership.items() if sid == "1"} == {"p1", "p2", "p3", "p4", "p5"}
    assert {pid for pid, sid in membership.items() if sid == "2"} == {"q1", "q2", "q3"}
    assert membership["r1"] == "3"


def test_equidistant_point_goes_to_lowest_id():
    stations = [Station(id="10", x=2.0, y=0.0), Station(id="2", x=0.0, y=0.0)]
    assert gp.assign_to_nearest_station(stations, [point("a", 1.0, 0.0)]) == {"a": "2"}
    named = [Station(id="b", x=2.0, y=0.0), Station(id="a", x=0.0, y=0.0)]
    assert gp.assign_to_nearest_station(named, [point("m", 1.0, 0.0)]) == {"m": "a"}


def test_nearest_station_matches_brute_force():
    rng = np.random.default_rng(4)
    stations = [Station(id=str(i), x=x, y=y) for i, (x, y) in enumerate(rng.uniform(0, 30, size=(25, 2)))]
    points = [point(f"p{i}", x, y) for i, (x, y) in enumerate(rng.uniform(-5, 35, size=(1000, 2)))]
    membership = gp.assign_to_nearest_station(stations, points)
    coords = np.array([[s.x, s.y] for s in stations])
    for p in points:
        dist = np.hypot(coords[:, 0] - p.x, coords[:, 1] - p.y)
        assert membership[p.id] == stations[int(np.argmin(dist))].id


def test_duplicate_ids_rejected():
    with pytest.raises(ModelDomainError):
        gp.assign_to_nearest_station([Station(id="1", x=0, y=0), Station(id="1", x=1, y=0)], [])
    with pytest.raises(ModelDomainError):
        gp.assign_to_nearest_station([Station(id="1", x=0, y=0)], [point("a", 0, 0), point("a", 1, 1)])


def test_no_stations_rejected():
    with pytest.raises(ModelDomainError):
        gp.assign_to_nearest_station([], [point("a", 0, 0)])


def test_id_key_orders_numbers_numerically():
    assert sorted(["10", "2", "b", "1", "a"], key=gp.id_key) == ["1", "2", "10", "a", "b"]


# --- axis and projection --------------------------------------------------------

def test_axis_points_at_farthest_point():
    axis = gp.define_corridor_axis(Station(id="s", x=1.0, y=1.0),
                                   [point("a", 4.0, 5.0), point("b", 2.0, 1.0)])
    assert axis.length == pytest.approx(5.0)
    assert axis.direction == pytest.approx((0.6, 0.8))
    assert axis.far_point_id == "a"
    assert not axis.degenerate


def test_axis_tie_goes_to_lowest_point_id():
    axis = gp.define_corridor_axis(Station(id="s", x=0.0, y=0.0), [point("b", 0.0, 3.0), point("a", 3.0, 0.0)])
    assert axis.far_point_id == "a"


def test_all_points_at_station_is_degenerate():
    axis = gp.define_corridor_axis(Station(id="s", x=1.0, y=2.0), [point("a", 1.0, 2.0)])
    assert axis.degenerate
    assert axis.length == 0.0


def test_projection_oracle():
    rng = np.random.default_rng(9)
    for _ in range(200):
        theta = rng.uniform(-math.pi, math.pi)
        length = rng.uniform(1.0, 10.0)
        axis = CorridorAxis(station_id="s", origin=(2.0, -1.0), direction=(math.cos(theta), math.sin(theta)),
                            length=length)
        along, side = rng.uniform(0.0, length), rng.uniform(-2.0, 2.0)
        px = 2.0 + along * math.cos(theta) - side * math.sin(theta)
        py = -1.0 + along * math.sin(theta) + side * math.cos(theta)
        x, y = gp.project_point(axis, point("p", px, py))
        assert x == pytest.approx(length - along, abs=1e-9)
        assert y == pytest.approx(side, abs=1e-9)


def test_projection_clamps_to_the_axis():
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(1.0, 0.0), length=4.0)
    assert gp.project_point(axis, point("behind", -1.0, 0.5)) == (4.0, 0.5)
    assert gp.project_point(axis, point("beyond", 6.0, -0.5)) == (0.0, -0.5)


def test_split_by_side():
    axis = CorridorAxis(station_id="7", origin=(0.0, 0.0), direction=(1.0, 0.0), length=4.0)
    out = gp.project_and_split(axis, [point("on", 2.0, 0.0), point("left", 1.0, 0.3), point("right", 3.0, -1.5)],
                               max_width=2.0)
    assert [a.corridor_id for a in out] == ["7+", "7+", "7-"]
    assert [a.beyond_walk_coverage for a in out] == [False, False, True]


def test_directional_split():
    station = Station(id="s", x=0.0, y=0.0)
    pts = [point("e1", 5.0, 1.0), point("e2", 3.0, 0.8), point("w1", -4.0, 1.0), point("w2", -2.0, 0.4)]
    assert gp.split_directional(station, pts, 1) == [pts]
    groups = gp.split_directional(station, pts, 2)
    assert [sorted(p.id for p in g) for g in groups] == [["e1", "e2"], ["w1", "w2"]]


def test_project_lonlat():
    xy = gp.project_lonlat([(-87.6, 41.8), (-87.6, 41.81)], origin=(-87.6, 41.8))
    assert xy[0] == pytest.approx((0.0, 0.0))
    assert xy[1][1] == pytest.approx(1.112, abs=1e-3)
    east = gp.project_lonlat([(-87.59, 41.8)], origin=(-87.6, 41.8))
    assert east[0][0] == pytest.approx(1.112 * math.cos(math.radians(41.8)), abs=1e-3)
    assert gp.project_lonlat([]).shape == (0, 2)


def test_lonlat_stations_use_the_given_origin(tmp_path):
    path = tmp_path / "stations.geojson"
    path.write_text(json.dumps({"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"id": "0"}, "geometry": {"type": "Point", "coordinates": [-87.63, 41.88]}},
        {"type": "Feature", "properties": {"id": "1"}, "geometry": {"type": "Point", "coordinates": [-87.6264, 41.88]}},
    ]}), encoding="utf-8")
    stations = read_stations_geojson(str(path), origin=(-87.63, 41.88))
    assert (stations[0].x, stations[0].y) == pytest.approx((0.0, 0.0))
    assert stations[1].x == pytest.approx(0.298, abs=1e-3)
    # 80 m east of station 0, in km around the same origin
    assert gp.assign_to_nearest_station(stations, [point("a", 0.08, 0.0)]) == {"a": "0"}


# --- corridor parameters --------------------------------------------------------

def test_uniform_strip_recovers_width():
    rng = np.random.default_rng(12)
    width, length = 1.2, 6.0
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(1.0, 0.0), length=length)
    pts = [point(f"p{i}", x, y) for i, (x, y) in
           enumerate(zip(rng.uniform(0, length, 4000), rng.uniform(-width / 2, width / 2, 4000)))]
    demand, cross = gp.extract_corridor_parameters(gp.project_and_split(axis, pts), length, PipelineSettings())
    assert demand.total_demand == pytest.approx(4000.0)
    assert cross.mean_detour == pytest.approx(width / 3.0, rel=0.05)
    assert cross.mean_access_time == pytest.approx(width / 4.0 / 4.0, rel=0.05)


def test_catchment_width_is_capped():
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(1.0, 0.0), length=2.0)
    part = gp.project_and_split(axis, [point("far", 1.0, 3.0)])
    _, cross = gp.extract_corridor_parameters(part, 2.0, PipelineSettings())
    assert cross.mean_detour == pytest.approx(2.0 / 3.0)


def test_classify_fixed_labels_nothing():
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(1.0, 0.0), length=4.0)
    part = gp.project_and_split(axis, [point("a", 4.0, 0.5, 5.0), point("b", 2.0, 0.5, 5.0)])
    demand, cross = gp.extract_corridor_parameters(part, 4.0, PipelineSettings(bins=4))
    corridor = Corridor(route_length=4.0, vehicle_speed=30.0, layover_time=1 / 6, cross_section=cross)
    costly = PARAMS.model_copy(update={"operating_cost": 50.0})
    labelled, form, target, x_f = gp.classify_flexible(corridor, demand, costly, 0.25, part)
    assert form == RouteForm.FIXED
    assert (target, x_f) == (0.0, 0.0)
    assert all(a.service == ServiceArea.FIXED for a in labelled)


# --- full pipeline on the synthetic network ---------------------------------------

def test_corridor_inventory(result):
    assert [c.corridor_id for c in result.corridors] == ["1+", "1-", "2+", "2-", "3+"]
    by_id = {c.corridor_id: c for c in result.corridors}
    assert by_id["1+"].form == RouteForm.HYBRID
    assert by_id["2+"].form == RouteForm.FLEXIBLE
    assert by_id["2-"].form == RouteForm.FLEXIBLE
    assert by_id["1-"].empty
    assert by_id["3+"].degenerate
    assert by_id["3+"].passengers == 7.0


def test_hybrid_corridor(result):
    c = next(c for c in result.corridors if c.corridor_id == "1+")
    assert c.axis.length == pytest.approx(8.0)
    assert c.passengers == pytest.approx(60.0)
    assert c.cross_section.mean_detour == pytest.approx(5.0 / 9.0)
    assert c.cross_section.mean_access_time == pytest.approx(0.104167, rel=1e-4)
    assert c.flexible_demand == pytest.approx(35.545, rel=1e-4)
    assert c.x_f == pytest.approx(4.27727, rel=1e-4)
    assert c.flexible_points == 3


def test_point_labels(result):
    service = {a.point_id: a.service for a in result.assignments}
    flexible = {pid for pid, s in service.items() if s == ServiceArea.FLEXIBLE}
    assert flexible == {"p1", "p2", "p3", "q1", "q2", "q3"}
    assert [a.point_id for a in result.assignments] == ["p1", "p2", "p3", "p4", "p5", "q1", "q2", "q3", "r1"]
    q3 = next(a for a in result.assignments if a.point_id == "q3")
    assert q3.beyond_walk_coverage
    assert q3.corridor_id == "2-"


def test_summary_counts(result):
    s = result.summary
    assert (s.hybrid_routes, s.flexible_routes, s.fixed_routes) == (1, 2, 0)
    assert s.degenerate_zones == 1
    assert s.empty_corridors == 1
    assert s.flexible_demand_threshold == pytest.approx(35.5, rel=0.01)
    assert s.flexible_load_per_trip == pytest.approx(8.9, abs=0.05)
    assert (s.all_feeders.routes, s.all_feeders.points, s.all_feeders.passengers) == (3, 7, 75.0)
    assert s.semi_on_demand_feeders.routes == 3
    assert (s.flexible_area.routes, s.flexible_area.points) == (3, 6)
    assert s.flexible_area.passengers == pytest.approx(50.545, rel=1e-4)


def test_summary_totals_add_up_over_corridors(result):
    costed = [c for c in result.corridors if not c.empty and not c.degenerate]
    assert [c.corridor_id for c in costed] == ["1+", "2+", "2-"]
    by_id = {c.corridor_id: c for c in costed}
    for cid, fixed, semi in [("1+", 597.975, 549.71711), ("2+", 142.075, 114.075), ("2-", 90.5125, 75.366667)]:
        assert by_id[cid].fixed_route.total == pytest.approx(fixed, rel=1e-5)
        assert by_id[cid].semi_on_demand.total == pytest.approx(semi, rel=1e-5)

    feeders = result.summary.all_feeders
    for mode, expected in [
        (feeders.fixed_route, (268.125, 232.03125, 178.40625, 40.0, 112.0, 830.5625)),
        (feeders.semi_on_demand, (84.0625, 232.03125, 232.393307, 54.873737, 135.79798, 739.158774)),
    ]:
        got = (mode.total_access, mode.total_waiting, mode.total_riding, mode.total_operating,
               mode.total_vehicle, mode.total_generalized)
        assert got == pytest.approx(expected, rel=1e-5)
    assert feeders.fixed_route.avg_generalized_cost == pytest.approx(830.5625 / 75.0, rel=1e-5)


def test_corridor_costs_match_cost_model(result):
    for c in result.corridors:
        if c.empty or c.degenerate:
            continue
        corridor = Corridor(route_length=c.axis.length, vehicle_speed=30.0, layover_time=1 / 6,
                            cross_section=c.cross_section)
        fixed = cm.cost_breakdown(corridor, c.demand, PARAMS, 0.25, 0.0)
        semi = cm.cost_breakdown(corridor, c.demand, PARAMS, 0.25, c.x_f)
        assert c.fixed_route.total == pytest.approx(fixed.total)
        assert c.semi_on_demand.total == pytest.approx(semi.total)
        assert c.semi_on_demand.access == pytest.approx(semi.access)


def test_flexible_area_changes(result):
    area = result.summary.flexible_area
    assert area.semi_on_demand.total_access == 0.0
    assert area.percent_change["avg_access_time"] == pytest.approx(-100.0)
    assert area.percent_change["avg_waiting_time"] == pytest.approx(0.0, abs=1e-9)
    assert area.semi_on_demand.avg_riding_time > area.fixed_route.avg_riding_time
    assert area.fixed_route.total_operator is None


def test_semi_on_demand_beats_baseline_on_every_feeder(result):
    for c in result.corridors:
        if c.fixed_route is not None:
            assert c.semi_on_demand.total <= c.fixed_route.total + 1e-9


def test_hybrid_corridor_matches_cost_model(result):
    c = next(c for c in result.corridors if c.corridor_id == "1+")
    corridor = Corridor(route_length=c.axis.length, vehicle_speed=30.0, layover_time=1 / 6,
                        cross_section=c.cross_section)
    x_f, form = cm.optimal_flexible_portion(corridor, c.demand, PARAMS, 0.25)
    assert form == RouteForm.HYBRID
    assert c.x_f == pytest.approx(x_f)


def test_worker_count_does_not_change_results(network):
    stations, points = network
    serial = gp.run_pipeline(stations, points, PARAMS, SETTINGS, max_workers=1)
    threaded = gp.run_pipeline(stations, points, PARAMS, SETTINGS, max_workers=4)
    assert serial.model_dump() == threaded.model_dump()


def test_no_points(network):
    stations, _ = network
    out = gp.run_pipeline(stations, [], PARAMS, SETTINGS)
    assert out.corridors == []
    assert out.summary.all_feeders.routes == 0
    assert out.summary.all_feeders.fixed_route.avg_user_cost == 0.0


def test_directional_corridors_get_numbered_ids():
    station = Station(id="1", x=0.0, y=0.0)
    pts = [point("a", 6.0, 0.2, 10), point("b", 4.0, 0.3, 10), point("c", -5.0, 0.5, 10), point("d", -3.0, 0.2, 10)]
    settings = PipelineSettings(bins=5, max_corridors_per_subzone=2)
    _, results = gp.process_zone(station, pts, PARAMS, settings)
    assert sorted(r.corridor_id for r in results) == ["1+", "1+2"]


# --- properties on random networks -------------------------------------------------

def random_network(seed, n_stations=6, n_points=400):
    rng = np.random.default_rng(seed)
    stations = [Station(id=str(i + 1), x=x, y=y) for i, (x, y) in enumerate(rng.uniform(0, 40, (n_stations, 2)))]
    points = [point(f"m{i}", x, y, t) for i, ((x, y), t) in
              enumerate(zip(rng.uniform(0, 40, (n_points, 2)), rng.gamma(2.0, 3.0, n_points)))]
    return stations, points


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_network_invariants(seed):
    stations, points = random_network(seed)
    out = gp.run_pipeline(stations, points, PARAMS, PipelineSettings(bins=20), max_workers=2)
    assert sorted(a.point_id for a in out.assignments) == sorted(p.id for p in points)

    corridors = {c.corridor_id: c for c in out.corridors}
    by_corridor = {}
    for a in out.assignments:
        assert 0.0 <= a.x_along_axis <= corridors[a.corridor_id].axis.length + 1e-9
        by_corridor.setdefault(a.corridor_id, []).append(a)

    for cid, members in by_corridor.items():
        c = corridors[cid]
        if c.empty or c.degenerate:
            continue
        flexible = [a for a in members if a.service == ServiceArea.FLEXIBLE]
        fixed = [a for a in members if a.service == ServiceArea.FIXED]
        # flexible service covers the far end of the corridor
        if flexible and fixed:
            assert max(a.x_along_axis for a in flexible) <= min(a.x_along_axis for a in fixed)
        served = sum(a.trips for a in flexible)
        assert served >= c.flexible_demand - 1e-9
        if flexible and c.form != RouteForm.FLEXIBLE:
            assert served - max(a.trips for a in flexible) < c.flexible_demand + 1e-9


def test_expensive_operation_keeps_every_corridor_fixed():
    stations, points = random_network(5)
    costly = PARAMS.model_copy(update={"operating_cost": 50.0})
    out = gp.run_pipeline(stations, points, costly, PipelineSettings(bins=20))
    assert out.summary.hybrid_routes == out.summary.flexible_routes == 0
    assert out.summary.flexible_area.passengers == 0.0
    assert all(a.service == ServiceArea.FIXED for a in out.assignments)
    change = out.summary.all_feeders.percent_change
    assert change["total_generalized"] == pytest.approx(0.0, abs=1e-9)
    assert out.summary.semi_on_demand_feeders.routes == 0


def test_axis_length_is_the_largest_distance():
    rng = np.random.default_rng(23)
    for _ in range(50):
        station = Station(id="s", x=rng.uniform(-5, 5), y=rng.uniform(-5, 5))
        pts = [point(f"p{i}", x, y) for i, (x, y) in enumerate(rng.uniform(-10, 10, (30, 2)))]
        axis = gp.define_corridor_axis(station, pts)
        assert axis.length == pytest.approx(max(math.hypot(p.x - station.x, p.y - station.y) for p in pts))


def test_mirrored_points_land_in_opposite_corridors():
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(0.0, 1.0), length=5.0)
    left, right = gp.project_and_split(axis, [point("l", -0.7, 2.0), point("r", 0.7, 2.0)])
    assert {left.corridor_id, right.corridor_id} == {"s+", "s-"}
    assert left.x_along_axis == right.x_along_axis == pytest.approx(3.0)
    mid = gp.project_and_split(axis, [point("m", 0.0, 2.5)])[0]
    assert (mid.x_along_axis, mid.y_offset, mid.corridor_id) == (2.5, 0.0, "s+")


def test_single_point_corridor_has_one_loaded_bin():
    axis = CorridorAxis(station_id="s", origin=(0.0, 0.0), direction=(1.0, 0.0), length=5.0)
    part = gp.project_and_split(axis, [point("only", 5.0, 0.4, 3.0)])
    demand, _ = gp.extract_corridor_parameters(part, 5.0, PipelineSettings(bins=10))
    assert sum(m > 0 for m in demand.bin_mass) == 1
    assert demand.bin_mass[0] == 3.0
