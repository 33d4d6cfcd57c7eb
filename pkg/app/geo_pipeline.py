"""Station catchments to semi-on-demand corridors.

Steps: nearest-station partition, corridor axis per zone, projection onto the axis with a
split by side, per-corridor demand and cross-section, flexible/fixed labelling, and the
network-wide summary against an all-fixed baseline.
"""
import math
import re
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.spatial import cKDTree

from . import cost_model
from . import demand_model as dm
from .errors import ModelDomainError
from .runner import run_concurrently
from .schemas import (
    CaseStudySummary,
    Corridor,
    CorridorAssignment,
    CorridorAxis,
    CorridorResult,
    CostBreakdown,
    CostParams,
    CrossSection,
    DemandDistribution,
    DemandPoint,
    GroupSummary,
    ModeMetrics,
    PipelineResult,
    PipelineSettings,
    RouteForm,
    ServiceArea,
    Station,
)

logger = structlog.get_logger(__name__)

EARTH_RADIUS_KM = 6371.0088
_DIST_TOL = 1e-9  # km
_CORRIDOR_ID = re.compile(r"^(.*)([+-])(\d*)$")


def id_key(value: str) -> Tuple[int, object]:
    """Sort key: numeric ids in numeric order, before any other ids in string order."""
    return (0, int(value)) if value.isdigit() else (1, value)


def project_lonlat(lonlat: Sequence[Tuple[float, float]],
                   origin: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Equirectangular projection of (lon, lat) degrees to planar km around `origin`.

    `origin` defaults to the mean position. Good to a few metres over a metro area.
    """
    arr = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2))
    lon0, lat0 = origin if origin is not None else tuple(arr.mean(axis=0))
    rad = np.radians(arr - np.array([lon0, lat0]))
    x = EARTH_RADIUS_KM * rad[:, 0] * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_KM * rad[:, 1]
    return np.column_stack([x, y])


# --- step 1 -----------------------------------------------------------------

def assign_to_nearest_station(stations: Sequence[Station], points: Sequence[DemandPoint]) -> Dict[str, str]:
    """point id -> id of the Euclidean-nearest station; ties go to the lowest station id."""
    if not stations:
        raise ModelDomainError("at least one station is required")
    _unique_ids(stations, "station")
    _unique_ids(points, "demand point")
    if not points:
        return {}

    coords = np.array([[s.x, s.y] for s in stations])
    tree = cKDTree(coords)
    xy = np.array([[p.x, p.y] for p in points])
    dist, _ = tree.query(xy, k=1)
    out = {}
    for p, pxy, r in zip(points, xy, dist):
        ties = tree.query_ball_point(pxy, r=r * (1.0 + 1e-12) + 1e-12)
        out[p.id] = min((stations[i].id for i in ties), key=id_key)
    return out


# --- step 2 -----------------------------------------------------------------

def define_corridor_axis(station: Station, zone_points: Sequence[DemandPoint]) -> CorridorAxis:
    """Axis from the station toward its farthest point; ties go to the lowest point id."""
    if not zone_points:
        raise ModelDomainError(f"station {station.id} has no demand points")
    rel = np.array([[p.x - station.x, p.y - station.y] for p in zone_points])
    dist = np.hypot(rel[:, 0], rel[:, 1])
    far = dist.max()
    if far <= _DIST_TOL:
        logger.warning("degenerate_zone", station=station.id, points=len(zone_points))
        return CorridorAxis(station_id=station.id, origin=(station.x, station.y), direction=(1.0, 0.0),
                            length=0.0, far_point_id=None, degenerate=True)
    candidates = [i for i in range(len(zone_points)) if dist[i] >= far - _DIST_TOL * max(far, 1.0)]
    i = min(candidates, key=lambda j: id_key(zone_points[j].id))
    length = float(dist[i])
    return CorridorAxis(
        station_id=station.id,
        origin=(station.x, station.y),
        direction=(float(rel[i, 0] / length), float(rel[i, 1] / length)),
        length=length,
        far_point_id=zone_points[i].id,
    )


# --- step 3 -----------------------------------------------------------------

def project_point(axis: CorridorAxis, point: DemandPoint) -> Tuple[float, float]:
    """(x, y): x measured from the far end (x = L at the station), y signed to the left of the axis."""
    ux, uy = axis.direction
    dx, dy = point.x - axis.origin[0], point.y - axis.origin[1]
    along = dx * ux + dy * uy
    x = min(max(axis.length - along, 0.0), axis.length)
    y = ux * dy - uy * dx
    return x, y


def project_and_split(axis: CorridorAxis, zone_points: Sequence[DemandPoint],
                      max_width: Optional[float] = None) -> List[CorridorAssignment]:
    """Project points onto the axis; y >= 0 goes to corridor '<station>+', y < 0 to '<station>-'."""
    out = []
    for p in zone_points:
        x, y = project_point(axis, p)
        side = "+" if y >= 0 else "-"
        out.append(CorridorAssignment(
            point_id=p.id,
            station_id=axis.station_id,
            corridor_id=f"{axis.station_id}{side}",
            x_along_axis=x,
            y_offset=y,
            trips=p.trips,
            beyond_walk_coverage=max_width is not None and abs(y) > max_width / 2.0 + _DIST_TOL,
        ))
    return out


def split_directional(station: Station, points: Sequence[DemandPoint], max_corridors: int) -> List[List[DemandPoint]]:
    """Farthest-point splitting of one side of a zone into at most `max_corridors` directions.

    Seeds start with the farthest point; each next seed is the point at the widest angle from
    all seeds. Points join the seed with the smallest angle (earlier seed on ties).
    """
    if max_corridors <= 1 or len(points) <= 1:
        return [list(points)]
    rel = np.array([[p.x - station.x, p.y - station.y] for p in points])
    norm = np.hypot(rel[:, 0], rel[:, 1])
    bearing = np.arctan2(rel[:, 1], rel[:, 0])
    order = sorted(range(len(points)), key=lambda i: (-norm[i], id_key(points[i].id)))
    seeds = [order[0]]

    def gap(i, j):
        a = abs(bearing[i] - bearing[j]) % (2 * math.pi)
        return min(a, 2 * math.pi - a)

    while len(seeds) < max_corridors:
        spread = [(min(gap(i, s) for s in seeds), -norm[i], id_key(points[i].id), i)
                  for i in range(len(points)) if norm[i] > _DIST_TOL and i not in seeds]
        if not spread:
            break
        widest = max(spread, key=lambda t: (t[0], t[1]))
        if widest[0] <= 1e-9:
            break
        seeds.append(widest[3])

    groups: List[List[DemandPoint]] = [[] for _ in seeds]
    for i, p in enumerate(points):
        k = min(range(len(seeds)), key=lambda j: (gap(i, seeds[j]), j)) if norm[i] > _DIST_TOL else 0
        groups[k].append(p)
    return [g for g in groups if g]


# --- step 4 -----------------------------------------------------------------

def extract_corridor_parameters(assignments: Sequence[CorridorAssignment], route_length: float,
                                settings: Optional[PipelineSettings] = None) -> Tuple[DemandDistribution, CrossSection]:
    """Empirical x-demand and cross-section of one corridor.

    Catchment width W = 4 * trip-weighted mean |y| (both sides of the axis), capped at the
    walk-coverage width.
    """
    settings = settings or PipelineSettings()
    if not assignments:
        raise ModelDomainError("corridor has no assigned points")
    demand = dm.empirical(((a.x_along_axis, a.trips) for a in assignments), route_length, settings.bins)
    offsets = np.abs([a.y_offset for a in assignments])
    trips = np.array([a.trips for a in assignments])
    mean_offset = float(np.average(offsets, weights=trips)) if trips.sum() > 0 else float(offsets.mean())
    width = min(4.0 * mean_offset, settings.max_width)
    return demand, dm.cross_section_from_uniform_width(width, settings.walk_speed)


# --- step 5 -----------------------------------------------------------------

def classify_flexible(corridor: Corridor, demand: DemandDistribution, params: CostParams, H: float,
                      assignments: Sequence[CorridorAssignment]
                      ) -> Tuple[List[CorridorAssignment], RouteForm, float, float]:
    """Label points from the far end until their trips reach F*.

    Returns (labelled assignments, route form, F* clamped to [0, Λ], cutoff x_f).
    """
    lam = demand.total_demand
    form = cost_model.classify_route_form(corridor, demand, params, H)
    if form == RouteForm.FIXED:
        target, x_f = 0.0, 0.0
    elif form == RouteForm.FLEXIBLE:
        target, x_f = lam, corridor.route_length
    else:
        target = min(max(cost_model.optimal_flexible_demand(corridor, params, H), 0.0), lam)
        x_f = float(dm.inverse_cumulative(demand, target))

    labelled = []
    before = 0.0
    for a in sorted(assignments, key=lambda a: (a.x_along_axis, id_key(a.point_id))):
        flexible = form == RouteForm.FLEXIBLE or before < target
        labelled.append(a.model_copy(update={"service": ServiceArea.FLEXIBLE if flexible else ServiceArea.FIXED}))
        before += a.trips
    return labelled, form, target, x_f


# --- orchestration ----------------------------------------------------------

def process_zone(station: Station, zone_points: Sequence[DemandPoint], params: CostParams,
                 settings: PipelineSettings) -> Tuple[List[CorridorAssignment], List[CorridorResult]]:
    log = logger.bind(station=station.id)
    axis = define_corridor_axis(station, zone_points)
    if axis.degenerate:
        assignments = [
            CorridorAssignment(point_id=p.id, station_id=station.id, corridor_id=f"{station.id}+",
                               x_along_axis=0.0, y_offset=0.0, trips=p.trips)
            for p in zone_points
        ]
        result = CorridorResult(corridor_id=f"{station.id}+", station_id=station.id, axis=axis,
                                point_count=len(zone_points), passengers=sum(p.trips for p in zone_points),
                                degenerate=True)
        return assignments, [result]

    by_side: Dict[str, List[DemandPoint]] = defaultdict(list)
    lookup = {p.id: p for p in zone_points}
    for a in project_and_split(axis, zone_points):
        by_side[a.corridor_id].append(lookup[a.point_id])

    assignments: List[CorridorAssignment] = []
    results: List[CorridorResult] = []
    for side_id in sorted(by_side):
        groups = split_directional(station, by_side[side_id], settings.max_corridors_per_subzone)
        for k, group in enumerate(groups):
            corridor_id = side_id if k == 0 else f"{side_id}{k + 1}"
            sub_axis = axis if len(groups) == 1 else define_corridor_axis(station, group)
            if sub_axis.degenerate:
                sub_axis = axis
            part = [a.model_copy(update={"corridor_id": corridor_id})
                    for a in project_and_split(sub_axis, group, settings.max_width)]
            labelled, result = _process_corridor(corridor_id, station, sub_axis, part, params, settings)
            assignments.extend(labelled)
            results.append(result)
    log.debug("zone_processed", corridors=len(results), points=len(zone_points))
    return assignments, results


def run_pipeline(stations: Sequence[Station], points: Sequence[DemandPoint], params: CostParams,
                 settings: Optional[PipelineSettings] = None, max_workers: Optional[int] = None) -> PipelineResult:
    settings = settings or PipelineSettings()
    membership = assign_to_nearest_station(stations, points)
    zones: Dict[str, List[DemandPoint]] = defaultdict(list)
    for p in points:
        zones[membership[p.id]].append(p)
    by_id = {s.id: s for s in stations}
    work = [(by_id[sid], zones[sid]) for sid in sorted(zones, key=id_key)]
    logger.info("pipeline_started", stations=len(stations), points=len(points), zones=len(work))

    outputs = run_concurrently(lambda item: process_zone(item[0], item[1], params, settings), work,
                               max_workers=max_workers)
    assignments = sorted((a for out in outputs for a in out[0]), key=lambda a: id_key(a.point_id))
    corridors = sorted((c for out in outputs for c in out[1]), key=lambda c: _corridor_key(c.corridor_id))
    summary = summarize_case_study(corridors, assignments, params, settings)
    logger.info("pipeline_finished", corridors=len(corridors), hybrid=summary.hybrid_routes,
                flexible=summary.flexible_routes, fixed=summary.fixed_routes)
    return PipelineResult(assignments=assignments, corridors=corridors, summary=summary)


# --- summary ----------------------------------------------------------------

def summarize_case_study(corridors: Sequence[CorridorResult], assignments: Sequence[CorridorAssignment],
                         params: CostParams, settings: PipelineSettings) -> CaseStudySummary:
    """Totals and per-passenger averages, all-fixed baseline against semi-on-demand."""
    H = settings.headway
    costed = [c for c in corridors if not c.empty and not c.degenerate]
    points_by_corridor: Dict[str, int] = defaultdict(int)
    flexible_by_corridor: Dict[str, int] = defaultdict(int)
    for a in assignments:
        points_by_corridor[a.corridor_id] += 1
        if a.service == ServiceArea.FLEXIBLE:
            flexible_by_corridor[a.corridor_id] += 1

    def feeder_group(group: List[CorridorResult]) -> GroupSummary:
        base = _sum_breakdowns([c.fixed_route for c in group])
        semi = _sum_breakdowns([c.semi_on_demand for c in group])
        pax = sum(c.passengers for c in group)
        return _group(len(group), sum(points_by_corridor[c.corridor_id] for c in group), pax,
                      _mode_metrics(base, pax, params, operator=True),
                      _mode_metrics(semi, pax, params, operator=True))

    base_flex = dict.fromkeys(("access", "waiting", "riding"), 0.0)
    semi_flex = dict.fromkeys(("access", "waiting", "riding"), 0.0)
    flex_pax, flex_routes = 0.0, 0
    gt = params.value_of_time
    for c in costed:
        F = c.flexible_demand
        if F <= 0:
            continue
        flex_routes += 1
        flex_pax += F
        corridor = _corridor(c.axis.length, c.cross_section, settings)
        ride_h = ((c.axis.length - c.x_f) * F + dm.partial_riding_integral(c.demand, c.x_f)) / settings.vehicle_speed
        detour_h = H * c.cross_section.mean_detour * F ** 2 / (2.0 * corridor.vehicle_speed)
        base_flex["access"] += gt * params.access_factor * c.cross_section.mean_access_time * F
        base_flex["waiting"] += gt * params.waiting_factor * F * H / 2.0
        base_flex["riding"] += gt * ride_h
        semi_flex["waiting"] += gt * params.waiting_factor * F * H / 2.0
        semi_flex["riding"] += gt * (ride_h + detour_h)

    flex_points = sum(flexible_by_corridor[c.corridor_id] for c in costed)
    flexible_area = _group(flex_routes, flex_points, flex_pax,
                           _mode_metrics(base_flex, flex_pax, params, operator=False),
                           _mode_metrics(semi_flex, flex_pax, params, operator=False))

    # t_a/d is the same for every uniform-width catchment, so one reference corridor gives F*
    reference = _corridor(1.0, dm.cross_section_from_uniform_width(settings.max_width, settings.walk_speed), settings)
    threshold = cost_model.optimal_flexible_demand(reference, params, H)

    forms = [c.form for c in costed]
    return CaseStudySummary(
        headway=H,
        flexible_demand_threshold=threshold,
        flexible_load_per_trip=threshold * H,
        fixed_routes=forms.count(RouteForm.FIXED),
        hybrid_routes=forms.count(RouteForm.HYBRID),
        flexible_routes=forms.count(RouteForm.FLEXIBLE),
        degenerate_zones=len({c.station_id for c in corridors if c.degenerate}),
        empty_corridors=sum(1 for c in corridors if c.empty),
        all_feeders=feeder_group(costed),
        semi_on_demand_feeders=feeder_group([c for c in costed if c.x_f > 0]),
        flexible_area=flexible_area,
    )


def _process_corridor(corridor_id: str, station: Station, axis: CorridorAxis, part: List[CorridorAssignment],
                      params: CostParams, settings: PipelineSettings) -> Tuple[List[CorridorAssignment], CorridorResult]:
    demand, cross = extract_corridor_parameters(part, axis.length, settings)
    common = dict(corridor_id=corridor_id, station_id=station.id, axis=axis, point_count=len(part),
                  passengers=demand.total_demand, demand=demand, cross_section=cross)
    if demand.total_demand <= 0:
        logger.warning("empty_corridor", corridor=corridor_id, points=len(part))
        return part, CorridorResult(empty=True, **common)

    corridor = _corridor(axis.length, cross, settings)
    labelled, form, target, x_f = classify_flexible(corridor, demand, params, settings.headway, part)
    return labelled, CorridorResult(
        form=form,
        flexible_demand=target,
        x_f=x_f,
        flexible_points=sum(1 for a in labelled if a.service == ServiceArea.FLEXIBLE),
        fixed_route=cost_model.cost_breakdown(corridor, demand, params, settings.headway, 0.0),
        semi_on_demand=cost_model.cost_breakdown(corridor, demand, params, settings.headway, x_f),
        **common,
    )


def _corridor(length: float, cross: CrossSection, settings: PipelineSettings) -> Corridor:
    return Corridor(route_length=length, vehicle_speed=settings.vehicle_speed,
                    layover_time=settings.layover_time, cross_section=cross)


def _sum_breakdowns(items: Sequence[CostBreakdown]) -> Dict[str, float]:
    return {
        "access": sum(b.access for b in items),
        "waiting": sum(b.waiting for b in items),
        "riding": sum(b.riding_x + b.riding_y for b in items),
        "operating": sum(b.operating_x + b.operating_y for b in items),
        "vehicle": sum(b.vehicle for b in items),
    }


def _mode_metrics(totals: Dict[str, float], pax: float, params: CostParams, operator: bool) -> ModeMetrics:
    gt = params.value_of_time
    user = totals["access"] + totals["waiting"] + totals["riding"]

    def per_pax(value: float) -> float:
        return value / pax if pax > 0 else 0.0

    fields = dict(
        avg_access_time=per_pax(totals["access"] / (gt * params.access_factor)) * 60.0,
        avg_waiting_time=per_pax(totals["waiting"] / (gt * params.waiting_factor)) * 60.0,
        avg_riding_time=per_pax(totals["riding"] / gt) * 60.0,
        avg_user_cost=per_pax(user),
        total_access=totals["access"],
        total_waiting=totals["waiting"],
        total_riding=totals["riding"],
        total_user=user,
    )
    if operator:
        op = totals["operating"] + totals["vehicle"]
        fields.update(
            avg_operator_cost=per_pax(op),
            avg_generalized_cost=per_pax(user + op),
            total_operating=totals["operating"],
            total_vehicle=totals["vehicle"],
            total_operator=op,
            total_generalized=user + op,
        )
    return ModeMetrics(**fields)


def _group(routes: int, points: int, pax: float, base: ModeMetrics, semi: ModeMetrics) -> GroupSummary:
    change: Dict[str, Optional[float]] = {}
    for name, before in base.model_dump().items():
        after = getattr(semi, name)
        if before is None or after is None:
            continue
        change[name] = (after - before) / before * 100.0 if before != 0 else None
    return GroupSummary(routes=routes, points=points, passengers=pax,
                        fixed_route=base, semi_on_demand=semi, percent_change=change)


def _corridor_key(corridor_id: str) -> Tuple:
    m = _CORRIDOR_ID.match(corridor_id)
    if m is None:
        return id_key(corridor_id), "", 0
    return id_key(m.group(1)), m.group(2), int(m.group(3) or 1)


def _unique_ids(items, what: str) -> None:
    seen = set()
    for item in items:
        if item.id in seen:
            raise ModelDomainError(f"duplicate {what} id {item.id!r}")
        seen.add(item.id)
