import argparse
import math
import os

import pandas as pd
import structlog

from .. import cost_model
from ..errors import ModelDomainError
from .common import (
    breakdown_dict,
    common_flags,
    corridor_from,
    cost_params_from,
    demand_from,
    load_config,
    print_table,
    verify_totals,
    write_table,
)
from ..providers import csv_provider

logger = structlog.get_logger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("analyze", parents=[common_flags()],
                              help="fixed-headway optimum and cost curves for one corridor")
    p.add_argument("--demand-kind", choices=["uniform", "triangular", "empirical"])
    p.add_argument("--samples", type=int, help="points on the cost curve (default 200)")
    p.set_defaults(handler=run)


def analyze(corridor, demand, params, H):
    """Fixed-headway design report as a flat dict."""
    x_f, form = cost_model.optimal_flexible_portion(corridor, demand, params, H)
    fleet = cost_model.fleet_size(corridor, demand, H, x_f)
    thresholds = cost_model.route_form_thresholds(corridor, demand, params, H)
    try:
        flexible_demand = cost_model.optimal_flexible_demand(corridor, params, H)
    except ModelDomainError:
        flexible_demand = None
    report = {
        "form": form.value,
        "x_f": x_f,
        "fleet": fleet,
        "fleet_ceil": cost_model.ceil_fleet(fleet),
        "fleet_fixed_route": cost_model.fleet_size(corridor, demand, H, 0.0),
        "headway_min": H * 60.0,
        "flexible_demand": flexible_demand,
        "access_detour_ratio": thresholds.access_detour_ratio,
        "threshold_lower": thresholds.lower,
        "threshold_upper": thresholds.upper,
        "degenerate_geometry": thresholds.degenerate,
    }
    report.update(breakdown_dict(cost_model.cost_breakdown(corridor, demand, params, H, x_f)))
    return report


def run(args: argparse.Namespace) -> int:
    extra = []
    if args.demand_kind:
        extra.append({"demand": {"kind": args.demand_kind}})
    if args.samples:
        extra.append({"samples": args.samples})
    config = load_config(args, extra)
    corridor, demand = corridor_from(config), demand_from(config)
    params, H = cost_params_from(config), config.costs.headway_h

    report = analyze(corridor, demand, params, H)
    logger.info("corridor_analyzed", form=report["form"], x_f=round(report["x_f"], 4),
                fleet=round(report["fleet"], 4), total=round(report["total"], 4))
    table = pd.DataFrame([report])
    if args.fmt == "json":
        verify_totals(table)
        csv_provider.atomic_write_json(_json_safe(report), os.path.join(args.out, "analyze_report.json"))
    else:
        write_table(table, args.out, "analyze_report", "csv")
    write_table(cost_model.cost_curve(corridor, demand, params, H, config.samples), args.out, "analyze_curve", "csv")
    print_table(table[["form", "x_f", "fleet", "fleet_fixed_route", "headway_min", "user", "operator", "total"]])
    return 0


def _json_safe(report):
    return {k: None if isinstance(v, float) and not math.isfinite(v) else v for k, v in report.items()}
