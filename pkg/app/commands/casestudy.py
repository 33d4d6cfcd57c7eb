import argparse
import os

import pandas as pd
import structlog

from .. import geo_pipeline
from ..config import resolve_path
from ..errors import ConfigValidationError
from ..providers import csv_provider
from ..providers.geojson_provider import points_feature_collection, read_stations_geojson
from ..schemas import CaseStudySummary
from .common import common_flags, cost_params_from, load_config, print_table, settings_from, verify_totals

logger = structlog.get_logger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("casestudy", parents=[common_flags()],
                              help="station catchments to semi-on-demand corridors")
    p.add_argument("--stations", help="stations CSV (id,x_km,y_km) or GeoJSON points")
    p.add_argument("--points", help="demand CSV (id,x_km,y_km,trips_per_h)")
    p.add_argument("--lonlat", action="store_true",
                   help="GeoJSON station coordinates are lon/lat degrees, projected around "
                        "casestudy.origin_lon/origin_lat")
    p.add_argument("--no-geojson", action="store_true", help="skip points.geojson")
    p.set_defaults(handler=run)


def corridors_frame(corridors) -> pd.DataFrame:
    rows = []
    for c in corridors:
        row = {
            "corridor_id": c.corridor_id,
            "station_id": c.station_id,
            "length_km": c.axis.length,
            "points": c.point_count,
            "passengers": c.passengers,
            "form": c.form.value if c.form else None,
            "flexible_demand": c.flexible_demand,
            "x_f": c.x_f,
            "flexible_points": c.flexible_points,
            "mean_access_min": c.cross_section.mean_access_time * 60.0 if c.cross_section else None,
            "mean_detour_km": c.cross_section.mean_detour if c.cross_section else None,
            "empty": c.empty,
            "degenerate": c.degenerate,
            "fixed_route_total": c.fixed_route.total if c.fixed_route else None,
            "semi_on_demand_total": c.semi_on_demand.total if c.semi_on_demand else None,
        }
        rows.append(row)
    return pd.DataFrame(rows)


def summary_frame(summary: CaseStudySummary) -> pd.DataFrame:
    rows = []
    for name in ("all_feeders", "semi_on_demand_feeders", "flexible_area"):
        g = getattr(summary, name)
        for mode in ("fixed_route", "semi_on_demand"):
            m = getattr(g, mode)
            rows.append({"group": name, "mode": mode, "routes": g.routes, "passengers": g.passengers,
                         "access_min": m.avg_access_time, "waiting_min": m.avg_waiting_time,
                         "riding_min": m.avg_riding_time, "generalized": m.avg_generalized_cost,
                         "user": m.avg_user_cost})
    return pd.DataFrame(rows)


def check_summary(summary: CaseStudySummary) -> None:
    for name in ("all_feeders", "semi_on_demand_feeders", "flexible_area"):
        g = getattr(summary, name)
        for m in (g.fixed_route, g.semi_on_demand):
            verify_totals(pd.DataFrame([{
                "access": m.total_access, "waiting": m.total_waiting, "riding_x": m.total_riding,
                "riding_y": 0.0, "operating_x": m.total_operating or 0.0, "operating_y": 0.0,
                "vehicle_cost": m.total_vehicle or 0.0,
                "total": m.total_generalized if m.total_generalized is not None else m.total_user,
            }]))


def run(args: argparse.Namespace) -> int:
    extra = []
    if args.stations:
        extra.append({"casestudy": {"stations_file": os.path.abspath(args.stations)}})
    if args.points:
        extra.append({"casestudy": {"points_file": os.path.abspath(args.points)}})
    if args.no_geojson:
        extra.append({"casestudy": {"geojson": False}})
    config = load_config(args, extra)
    cs = config.casestudy
    if not cs.stations_file or not cs.points_file:
        raise ConfigValidationError("casestudy: stations_file and points_file are required")

    stations_path = resolve_path(config, cs.stations_file)
    if stations_path.endswith((".geojson", ".json")):
        origin = None
        if args.lonlat:
            if cs.origin_lon is None or cs.origin_lat is None:
                raise ConfigValidationError(
                    "casestudy: --lonlat needs casestudy.origin_lon and casestudy.origin_lat, "
                    "the origin the demand points were projected around")
            origin = (cs.origin_lon, cs.origin_lat)
        stations = read_stations_geojson(stations_path, origin=origin)
    else:
        stations = csv_provider.read_stations(stations_path)
    points = csv_provider.read_points(resolve_path(config, cs.points_file))
    if not points:
        logger.warning("no_demand_points", path=cs.points_file)

    result = geo_pipeline.run_pipeline(stations, points, cost_params_from(config), settings_from(config),
                                       max_workers=args.workers)
    check_summary(result.summary)

    csv_provider.atomic_write_csv(csv_provider.assignments_frame(result.assignments),
                                  os.path.join(args.out, "assignments.csv"))
    csv_provider.atomic_write_csv(corridors_frame(result.corridors), os.path.join(args.out, "corridors.csv"))
    csv_provider.atomic_write_json(result.summary.model_dump(mode="json"), os.path.join(args.out, "summary.json"))
    if cs.geojson:
        csv_provider.atomic_write_json(points_feature_collection(result.assignments, points),
                                       os.path.join(args.out, "points.geojson"))
    print_table(summary_frame(result.summary))
    return 0
