"""Fixed-headway cost model of a semi-on-demand route.

The far-end segment [0, x_f] is served on demand (door-to-door detours), the remainder
[x_f, L_x] as a fixed route. All costs are hourly ($/h); lengths in km, times in hours.
"""
import math
from typing import Dict, Tuple

import numpy as np
import pandas as pd
import structlog

from . import demand_model as dm
from .errors import ModelDomainError
from .schemas import (
    COMPONENT_COLUMNS,
    COMPONENTS,
    Corridor,
    CostBreakdown,
    CostParams,
    DemandDistribution,
    DemandKind,
    RouteForm,
    RouteFormThresholds,
)

logger = structlog.get_logger(__name__)

Number = dm.Number


def detour_time(corridor: Corridor, demand: DemandDistribution, H: float, x_f: dm.Number) -> dm.Number:
    """y-direction detour time per vehicle trip (h)."""
    _check(corridor, demand, H)
    d, v = corridor.cross_section.mean_detour, corridor.vehicle_speed
    return H * (d / v) * dm.cumulative(demand, x_f)


def fleet_size(corridor: Corridor, demand: DemandDistribution, H: float, x_f: dm.Number) -> dm.Number:
    """Cycle time over headway; real-valued."""
    _check(corridor, demand, H)
    cycle = corridor.route_length / corridor.vehicle_speed + detour_time(corridor, demand, H, x_f) + corridor.layover_time
    return 2.0 / H * cycle


def ceil_fleet(s: float) -> int:
    """Whole vehicles needed when the fleet is not shared across routes. Reporting only."""
    return int(math.ceil(s - 1e-9))


def cost_breakdown(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                   H: float, x_f: float) -> CostBreakdown:
    parts = _components(corridor, demand, params, H, x_f)
    return CostBreakdown.from_components(**{k: float(v) for k, v in parts.items()})


def total_cost(corridor: Corridor, demand: DemandDistribution, params: CostParams,
               H: float, x_f: dm.Number) -> dm.Number:
    parts = _components(corridor, demand, params, H, x_f)
    out = sum(parts[name] for name in COMPONENTS)
    return float(out) if np.ndim(x_f) == 0 else out


def cost_derivative(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                    H: float, x_f: dm.Number) -> dm.Number:
    """dc/dx_f ($/h per km)."""
    _check(corridor, demand, H)
    f = dm.density(demand, x_f)
    return f * _marginal_bracket(corridor, demand, params, H, x_f)


def cost_second_derivative(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                           H: float, x_f: dm.Number) -> dm.Number:
    _check(corridor, demand, H)
    f = dm.density(demand, x_f)
    slope = dm.density_slope(demand, x_f)
    F = dm.cumulative(demand, x_f)
    d, v = corridor.cross_section.mean_detour, corridor.vehicle_speed
    gt = params.value_of_time
    return (
        -gt * params.access_factor * corridor.cross_section.mean_access_time * slope
        + gt * H * d / v * (slope * F + f ** 2)
        + params.operating_cost * d * slope
        + 2.0 * params.vehicle_cost * d / v * slope
    )


def route_form_thresholds(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                          H: float, include_vehicle_cost: bool = True) -> RouteFormThresholds:
    """Cut-offs on t_a/d separating fixed, hybrid and flexible forms.

    With include_vehicle_cost=False the fleet effect of detours is ignored (gamma_v = 0).
    """
    _check(corridor, demand, H)
    gt, ga = params.value_of_time, params.access_factor
    v = corridor.vehicle_speed
    lower = params.operating_cost / (gt * ga)
    if include_vehicle_cost:
        lower += 2.0 * params.vehicle_cost / (gt * ga * v)
    upper = H * demand.total_demand / (ga * v) + lower
    cs = corridor.cross_section
    degenerate = cs.mean_detour == 0
    ratio = math.inf if degenerate else cs.mean_access_time / cs.mean_detour
    return RouteFormThresholds(access_detour_ratio=ratio, lower=lower, upper=upper, degenerate=degenerate)


def classify_route_form(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                        H: float) -> RouteForm:
    """Optimal route form for a fixed headway. Ties at a threshold go to the non-hybrid form."""
    if demand.total_demand <= 0:
        raise ModelDomainError("route form is undefined without demand")
    if corridor.cross_section.mean_detour == 0:
        logger.warning("degenerate_geometry", reason="zero mean detour, detours are free")
        return RouteForm.FLEXIBLE
    th = route_form_thresholds(corridor, demand, params, H)
    if th.access_detour_ratio <= th.lower:
        return RouteForm.FIXED
    if th.access_detour_ratio >= th.upper:
        return RouteForm.FLEXIBLE
    return RouteForm.HYBRID


def optimal_flexible_demand(corridor: Corridor, params: CostParams, H: float) -> float:
    """Demand (pax/h) to serve on demand, counted from the far end. Not clamped to [0, Λ]."""
    if not H > 0:
        raise ModelDomainError(f"headway must be positive, got {H}")
    cs = corridor.cross_section
    if cs.mean_detour == 0:
        raise ModelDomainError("flexible demand threshold is undefined for zero mean detour")
    gt, v = params.value_of_time, corridor.vehicle_speed
    return (
        params.access_factor * v * cs.mean_access_time / cs.mean_detour
        - params.operating_cost * v / gt
        - 2.0 * params.vehicle_cost / gt
    ) / H


def optimal_flexible_portion(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                             H: float) -> Tuple[float, RouteForm]:
    form = classify_route_form(corridor, demand, params, H)
    if form == RouteForm.FIXED:
        return 0.0, form
    if form == RouteForm.FLEXIBLE:
        return corridor.route_length, form
    target = optimal_flexible_demand(corridor, params, H)
    return float(dm.inverse_cumulative(demand, target)), form


def optimal_fleet_size(corridor: Corridor, params: CostParams, H: float) -> float:
    """Fleet at the hybrid optimum; independent of the x-direction distribution."""
    if not H > 0:
        raise ModelDomainError(f"headway must be positive, got {H}")
    cs, v, gt = corridor.cross_section, corridor.vehicle_speed, params.value_of_time
    interior = (
        corridor.route_length / v
        + params.access_factor * cs.mean_access_time
        - params.operating_cost / gt * cs.mean_detour
        - 2.0 * params.vehicle_cost / gt * cs.mean_detour / v
        + corridor.layover_time
    )
    if interior < 0:
        raise ModelDomainError(f"inconsistent parameters: negative optimal cycle time {interior}")
    return 2.0 / H * interior


def fixed_route_cost_frontier(corridor: Corridor, params: CostParams) -> Tuple[float, float]:
    """(intercept, slope) such that a fixed route is optimal iff γ_o >= intercept - slope * γ_v."""
    cs = corridor.cross_section
    if cs.mean_detour == 0:
        raise ModelDomainError("frontier is undefined for zero mean detour")
    intercept = params.value_of_time * params.access_factor * cs.mean_access_time / cs.mean_detour
    return intercept, 2.0 / corridor.vehicle_speed


def closed_form_total_cost(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                           H: float, x_f: dm.Number) -> dm.Number:
    """Total cost written out for uniform and triangular demand."""
    _check(corridor, demand, H)
    x = np.asarray(x_f, dtype=float)
    length, v, tl = corridor.route_length, corridor.vehicle_speed, corridor.layover_time
    ta, d = corridor.cross_section.mean_access_time, corridor.cross_section.mean_detour
    gt, ga, gw = params.value_of_time, params.access_factor, params.waiting_factor
    go, gv = params.operating_cost, params.vehicle_cost
    lam_total = demand.total_demand

    if demand.kind == DemandKind.UNIFORM:
        lam = lam_total / length
        out = (
            gt * ga * ta * lam * (length - x)
            + gt * gw * lam * length * H / 2.0
            + gt * lam * length ** 2 / (2.0 * v)
            + gt * lam ** 2 / 2.0 * H * d / v * x ** 2
            + go * length / H
            + go * lam * d * x
            + gv * 2.0 / H * (length / v + H * d / v * lam * x + tl)
        )
    elif demand.kind == DemandKind.TRIANGULAR:
        lam0 = 2.0 * lam_total / length
        out = (
            gt * ga * ta * lam0 / 2.0 * (length - x ** 2 / length)
            + gt * gw * lam0 * length / 2.0 * H / 2.0
            + gt * lam0 * length ** 2 / (6.0 * v)
            + gt * H * d / v * lam0 ** 2 * x ** 4 / (8.0 * length ** 2)
            + go * length / H
            + go * d * lam0 * x ** 2 / (2.0 * length)
            + gv * 2.0 / H * (length / v + H * d / v * lam0 * x ** 2 / (2.0 * length) + tl)
        )
    else:
        raise ModelDomainError("closed forms exist only for uniform and triangular demand")
    return float(out) if np.ndim(x_f) == 0 else out


def closed_form_flexible_portion(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                                 H: float) -> float:
    """Unclamped hybrid-regime optimum for uniform and triangular demand."""
    _check(corridor, demand, H)
    cs, v, gt = corridor.cross_section, corridor.vehicle_speed, params.value_of_time
    if cs.mean_detour == 0:
        raise ModelDomainError("closed form is undefined for zero mean detour")
    bracket = (
        params.access_factor * v * cs.mean_access_time / cs.mean_detour
        - params.operating_cost / gt * v
        - 2.0 * params.vehicle_cost / gt
    )
    length = corridor.route_length
    if demand.kind == DemandKind.UNIFORM:
        lam = demand.total_demand / length
        return bracket / (lam * H)
    if demand.kind == DemandKind.TRIANGULAR:
        lam0 = 2.0 * demand.total_demand / length
        inner = 2.0 * length / (lam0 * H) * bracket
        if inner < 0:
            raise ModelDomainError("no hybrid optimum: negative flexible demand threshold")
        return math.sqrt(inner)
    raise ModelDomainError("closed forms exist only for uniform and triangular demand")


def cost_curve(corridor: Corridor, demand: DemandDistribution, params: CostParams, H: float,
               samples: int = 200) -> pd.DataFrame:
    """Total cost, fleet and components sampled over x_f in [0, L_x]."""
    if samples < 2:
        raise ModelDomainError(f"need at least 2 samples, got {samples}")
    xs = np.linspace(0.0, corridor.route_length, samples)
    parts = _components(corridor, demand, params, H, xs)
    df = pd.DataFrame({"x_f": xs, "fleet": fleet_size(corridor, demand, H, xs)})
    columns = [COMPONENT_COLUMNS[name] for name in COMPONENTS]
    for name, column in zip(COMPONENTS, columns):
        df[column] = parts[name]
    df["total"] = df[columns].sum(axis=1)
    lam = demand.total_demand
    for name in columns + ["total"]:
        df[f"{name}_per_pax"] = df[name] / lam if lam > 0 else np.nan
    return df


def _components(corridor: Corridor, demand: DemandDistribution, params: CostParams,
                H: float, x_f: dm.Number) -> Dict[str, np.ndarray]:
    _check(corridor, demand, H)
    x = np.asarray(x_f, dtype=float)
    F = np.asarray(dm.cumulative(demand, x))
    lam = demand.total_demand
    length, v = corridor.route_length, corridor.vehicle_speed
    ta, d = corridor.cross_section.mean_access_time, corridor.cross_section.mean_detour
    gt = params.value_of_time
    go = params.operating_cost
    return {
        "access": gt * params.access_factor * ta * np.maximum(lam - F, 0.0),
        "waiting": np.full_like(F, gt * params.waiting_factor * lam * H / 2.0),
        "riding_x": np.full_like(F, gt / v * dm.riding_integral(demand)),
        "riding_y": gt * H * d * F ** 2 / (2.0 * v),
        "operating_x": np.full_like(F, go * length / H),
        "operating_y": go * d * F,
        "vehicle": params.vehicle_cost * np.asarray(fleet_size(corridor, demand, H, x)),
    }


def _marginal_bracket(corridor, demand, params, H, x_f):
    F = dm.cumulative(demand, x_f)
    d, v = corridor.cross_section.mean_detour, corridor.vehicle_speed
    gt = params.value_of_time
    return (
        -gt * params.access_factor * corridor.cross_section.mean_access_time
        + gt * H * d / v * F
        + params.operating_cost * d
        + 2.0 * params.vehicle_cost * d / v
    )


def _check(corridor: Corridor, demand: DemandDistribution, H: float) -> None:
    if not H > 0:
        raise ModelDomainError(f"headway must be positive, got {H}")
    if not math.isclose(corridor.route_length, demand.route_length, rel_tol=1e-9):
        raise ModelDomainError(
            f"corridor length {corridor.route_length} km does not match demand length {demand.route_length} km"
        )
