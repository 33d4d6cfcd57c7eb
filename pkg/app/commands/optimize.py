import argparse
from typing import Dict, List

import pandas as pd
import structlog

from .. import joint_optimizer as jo
from ..errors import ConfigValidationError
from ..schemas import DesignSolution, FleetOptimization
from .common import (
    breakdown_dict,
    common_flags,
    corridor_from,
    cost_params_from,
    demand_from,
    load_config,
    policy_from,
    print_table,
    vehicles_from,
    write_table,
)

logger = structlog.get_logger(__name__)

TABLE_COLUMNS = ["vehicle", "capacity", "status", "best", "x_f", "fleet", "headway_min", "form",
                 "avg_access", "avg_wait", "avg_ride", "std_access", "std_wait", "std_ride"]


def register(subparsers) -> None:
    p = subparsers.add_parser("optimize", parents=[common_flags()],
                              help="joint flexible portion, fleet and vehicle size")
    p.add_argument("--profile", action="store_true", help="also write per-vehicle flexible-portion profiles")
    p.add_argument("--surface", metavar="VEHICLE", help="also write the (x_f, s) cost surface for one vehicle")
    p.set_defaults(handler=run)


def solution_row(sol: DesignSolution, best: bool) -> Dict:
    row = {
        "vehicle": sol.vehicle.name,
        "capacity": sol.vehicle.capacity,
        "status": "ok",
        "best": best,
        "x_f": sol.x_f,
        "fleet": sol.fleet_size,
        "headway_min": sol.headway_min,
        "form": sol.form.value,
    }
    row.update(sol.metrics.model_dump())
    row.update(breakdown_dict(sol.breakdown))
    return row


def optimization_table(result: FleetOptimization, vehicles) -> pd.DataFrame:
    """One row per vehicle in catalog order; infeasible types keep their reason."""
    by_name = {s.vehicle.name: s for s in result.solutions}
    rows: List[Dict] = []
    for v in vehicles:
        if v.name in by_name:
            rows.append(solution_row(by_name[v.name], v.name == result.best.vehicle.name))
        else:
            rows.append({"vehicle": v.name, "capacity": v.capacity, "status": "infeasible",
                         "best": False, "reason": result.failures.get(v.name)})
    df = pd.DataFrame(rows)
    ordered = [c for c in TABLE_COLUMNS if c in df.columns] + [c for c in df.columns if c not in TABLE_COLUMNS]
    return df[ordered]


def run(args: argparse.Namespace) -> int:
    config = load_config(args)
    corridor, demand = corridor_from(config), demand_from(config)
    params, policy = cost_params_from(config), policy_from(config)
    vehicles = vehicles_from(config)

    result = jo.optimize_over_fleet(corridor, demand, params, vehicles, policy, max_workers=args.workers)
    logger.info("fleet_optimized", best=result.best.vehicle.name, total=round(result.best.breakdown.total, 4),
                infeasible=len(result.failures))
    table = optimization_table(result, vehicles)
    write_table(table, args.out, "optimize_table", args.fmt)

    if args.profile:
        profiles = [jo.flexible_portion_profile(corridor, demand, params, s.vehicle, policy, config.samples)
                    for s in result.solutions]
        write_table(pd.concat(profiles, ignore_index=True), args.out, "optimize_profile", "csv")

    if args.surface:
        match = [v for v in vehicles if v.name == args.surface]
        if not match:
            raise ConfigValidationError(f"--surface: no vehicle named {args.surface!r}")
        xs, ss, totals = jo.cost_surface(corridor, demand, params, match[0], policy)
        surface = pd.DataFrame(
            [{"x_f": x, "fleet": s, "total": totals[i, j]} for i, x in enumerate(xs) for j, s in enumerate(ss)]
        )
        write_table(surface, args.out, f"optimize_surface_{match[0].name}", "csv")

    print_table(table[[c for c in ("vehicle", "status", "x_f", "fleet", "headway_min", "total") if c in table.columns]])
    return 0
