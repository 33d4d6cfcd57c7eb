import argparse
from typing import Dict, List

import numpy as np
import pandas as pd
import structlog

from .. import demand_model as dm
from .. import joint_optimizer as jo
from ..errors import ConfigValidationError, ModelDomainError, SemiFlexError
from ..runner import run_concurrently
from ..schemas import DemandDistribution, DemandKind
from .analyze import analyze
from .common import (
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
from .optimize import optimization_table

logger = structlog.get_logger(__name__)

PARAMETERS = ("operator_cost_scale", "headway", "demand", "detour", "access_time", "value_of_time")


def register(subparsers) -> None:
    p = subparsers.add_parser("sweep", parents=[common_flags()], help="re-run over a range of one parameter")
    p.add_argument("--param", required=True, choices=PARAMETERS,
                   help="headway and access_time values are minutes")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--mode", choices=["analyze", "optimize"],
                   help="default: optimize when a vehicle catalog is configured (analyze for headway)")
    p.set_defaults(handler=run)


def with_total_demand(demand: DemandDistribution, total: float) -> DemandDistribution:
    """Same shape, new total."""
    if demand.kind == DemandKind.UNIFORM:
        return dm.uniform(total, demand.route_length)
    if demand.kind == DemandKind.TRIANGULAR:
        return dm.triangular(total, demand.route_length)
    if demand.total_demand <= 0:
        raise ModelDomainError("cannot rescale an empty empirical profile")
    k = total / demand.total_demand
    return dm.empirical(((x, t * k) for x, t in demand.empirical_points), demand.route_length, len(demand.bin_mass))


def scenario(base: Dict, param: str, value: float) -> Dict:
    """Model inputs with one parameter replaced."""
    s = dict(base)
    corridor, params = base["corridor"], base["params"]
    if param == "operator_cost_scale":
        s["params"] = params.scaled(value)
        s["vehicles"] = jo.scale_operator_costs(base["vehicles"], value) if base["vehicles"] else []
    elif param == "headway":
        s["H"] = value / 60.0
    elif param == "demand":
        s["demand"] = with_total_demand(base["demand"], value)
    elif param == "detour":
        cs = corridor.cross_section.model_copy(update={"mean_detour": value})
        s["corridor"] = corridor.model_copy(update={"cross_section": cs})
    elif param == "access_time":
        cs = corridor.cross_section.model_copy(update={"mean_access_time": value / 60.0})
        s["corridor"] = corridor.model_copy(update={"cross_section": cs})
    elif param == "value_of_time":
        s["params"] = params.model_copy(update={"value_of_time": value})
    else:
        raise ConfigValidationError(f"unknown sweep parameter {param!r}")
    return s


def sweep(base: Dict, param: str, values, mode: str, max_workers=None) -> pd.DataFrame:
    if mode == "optimize" and param == "headway":
        raise ConfigValidationError("--param headway is only valid with --mode analyze")

    def evaluate(value: float) -> List[Dict]:
        s = scenario(base, param, float(value))
        if mode == "analyze":
            try:
                row = {"status": "ok", **analyze(s["corridor"], s["demand"], s["params"], s["H"])}
            except SemiFlexError as e:
                row = {"status": "error", "reason": e.detail}
            return [{"parameter": param, "parameter_value": float(value), **row}]
        try:
            result = jo.optimize_over_fleet(s["corridor"], s["demand"], s["params"], s["vehicles"], s["policy"])
        except SemiFlexError as e:
            return [{"parameter": param, "parameter_value": float(value), "status": "error", "reason": e.detail}]
        table = optimization_table(result, s["vehicles"])
        table.insert(0, "parameter_value", float(value))
        table.insert(0, "parameter", param)
        return table.to_dict(orient="records")

    chunks = run_concurrently(evaluate, list(values), max_workers=max_workers)
    return pd.DataFrame([row for chunk in chunks for row in chunk])


def run(args: argparse.Namespace) -> int:
    if args.steps < 1:
        raise ConfigValidationError("--steps must be at least 1")
    config = load_config(args)
    has_catalog = bool(config.fleet.vehicles or config.fleet.file)
    mode = args.mode or ("optimize" if has_catalog and args.param != "headway" else "analyze")
    base = {
        "corridor": corridor_from(config),
        "demand": demand_from(config),
        "params": cost_params_from(config),
        "H": config.costs.headway_h,
        "policy": policy_from(config),
        "vehicles": vehicles_from(config) if mode == "optimize" else [],
    }
    values = np.linspace(args.start, args.stop, args.steps)
    logger.info("sweep_started", param=args.param, mode=mode, steps=args.steps)
    table = sweep(base, args.param, values, mode, max_workers=args.workers)
    write_table(table, args.out, f"sweep_{args.param}", "csv")
    cols = [c for c in ("parameter_value", "vehicle", "status", "x_f", "fleet", "headway_min", "total")
            if c in table.columns]
    print_table(table[cols])
    return 0
