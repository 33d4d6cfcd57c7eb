"""Shared plumbing for the sub-commands: config to model objects, report output."""
import argparse
import math
import os
from typing import Any, Dict, List, Optional

import pandas as pd
import structlog

from .. import demand_model as dm
from ..config import (
    LOG_FORMAT,
    LOG_LEVEL,
    OUT_DIR,
    RunConfig,
    build_run_config,
    parse_override,
    resolve_path,
)
from ..errors import ConfigValidationError, SemiFlexError
from ..providers import csv_provider
from ..providers.preset_provider import PRESET_NAMES, get_preset
from ..schemas import (
    COMPONENT_COLUMNS,
    COMPONENTS,
    CapacityPolicy,
    Corridor,
    CostBreakdown,
    CostParams,
    CrossSection,
    DemandDistribution,
    PipelineSettings,
    VehicleType,
)

logger = structlog.get_logger(__name__)

TOTAL_RTOL = 1e-6


def common_flags() -> argparse.ArgumentParser:
    """Parent parser carrying the flags every command accepts."""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--preset", choices=PRESET_NAMES, help="built-in parameter set")
    p.add_argument("--out", default=OUT_DIR, help="output directory (default: %(default)s)")
    p.add_argument("--format", choices=["csv", "json"], default="csv", dest="fmt")
    p.add_argument("--workers", type=int, default=None, help="thread pool size for fan-out")
    p.add_argument("--log-level", default=LOG_LEVEL)
    p.add_argument("--log-format", choices=["console", "json"], default=LOG_FORMAT)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    return p


def load_config(args: argparse.Namespace, extra: Optional[List[Dict[str, Any]]] = None) -> RunConfig:
    preset = get_preset(args.preset) if args.preset else None
    overrides = [parse_override(item) for item in args.set] + list(extra or [])
    config = build_run_config(preset, args.config, overrides)
    logger.debug("config_loaded", preset=args.preset, config=args.config, overrides=len(overrides))
    return config


def corridor_from(config: RunConfig) -> Corridor:
    c = _require(config.corridor, "corridor")
    return Corridor(
        route_length=c.route_length_km,
        vehicle_speed=c.vehicle_speed_kmh,
        layover_time=c.layover_h,
        cross_section=CrossSection(mean_access_time=c.mean_access_h, mean_detour=c.mean_detour_km),
    )


def demand_from(config: RunConfig) -> DemandDistribution:
    d = _require(config.demand, "demand")
    length = _require(config.corridor, "corridor").route_length_km
    if d.kind == "uniform":
        return dm.uniform(d.total_pax_h, length)
    if d.kind == "triangular":
        return dm.triangular(d.total_pax_h, length)
    return csv_provider.load_demand_csv(resolve_path(config, d.file), length, d.bins)


def cost_params_from(config: RunConfig) -> CostParams:
    c = config.costs
    return CostParams(value_of_time=c.value_of_time, access_factor=c.access_factor,
                      waiting_factor=c.waiting_factor, operating_cost=c.operating_cost,
                      vehicle_cost=c.vehicle_cost)


def vehicles_from(config: RunConfig) -> List[VehicleType]:
    if config.fleet.file:
        vehicles = csv_provider.read_vehicles(resolve_path(config, config.fleet.file))
    else:
        vehicles = [VehicleType(**v.model_dump()) for v in config.fleet.vehicles]
    if not vehicles:
        raise ConfigValidationError("fleet.vehicles: a vehicle catalog is required")
    return vehicles


def policy_from(config: RunConfig) -> CapacityPolicy:
    return CapacityPolicy(buffer=config.fleet.capacity_buffer)


def settings_from(config: RunConfig) -> PipelineSettings:
    c = config.casestudy
    return PipelineSettings(
        headway=config.costs.headway_h,
        vehicle_speed=c.vehicle_speed_kmh,
        layover_time=c.layover_h,
        walk_speed=c.walk_speed_kmh,
        max_access_time=c.max_access_h,
        bins=c.bins,
        max_corridors_per_subzone=c.max_corridors_per_subzone,
    )


def breakdown_dict(bd: CostBreakdown) -> Dict[str, float]:
    out = {COMPONENT_COLUMNS[name]: getattr(bd, name) for name in COMPONENTS}
    out.update(user=bd.user, operator=bd.operator, total=bd.total)
    return out


def verify_totals(df: pd.DataFrame) -> None:
    """Every row with a total must equal the sum of its components."""
    columns = list(COMPONENT_COLUMNS.values())
    if "total" not in df.columns or not set(columns) <= set(df.columns):
        return
    rows = df.dropna(subset=["total"])
    for i, row in rows.iterrows():
        parts = sum(float(row[c]) for c in columns)
        if not math.isclose(parts, float(row["total"]), rel_tol=TOTAL_RTOL, abs_tol=1e-9):
            raise SemiFlexError(f"row {i}: total {row['total']} != sum of components {parts}")


def write_table(df: pd.DataFrame, out_dir: str, stem: str, fmt: str = "csv") -> str:
    verify_totals(df)
    path = os.path.join(out_dir, f"{stem}.{fmt}")
    if fmt == "json":
        records = df.astype(object).where(pd.notna(df), None).to_dict(orient="records")
        csv_provider.atomic_write_json({"rows": records}, path)
    else:
        csv_provider.atomic_write_csv(df, path)
    return path


def print_table(df: pd.DataFrame) -> None:
    with pd.option_context("display.max_columns", None, "display.width", 200, "display.float_format", "{:.4f}".format):
        print(df.to_string(index=False))


def _require(section, name: str):
    if section is None:
        raise ConfigValidationError(f"{name}: section is required for this command")
    return section
