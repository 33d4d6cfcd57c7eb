"""Variable-headway model: joint choice of flexible portion, fleet size and vehicle size.

The search runs over (x_f, t) with s = fleet_lower_bound(x_f) + t. In those variables the
headway depends on t alone and the capacity constraint becomes the bound t >= 0.
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.optimize import minimize

from . import demand_model as dm
from .errors import InfeasibleModelError, ModelDomainError, SemiFlexError
from .runner import run_concurrently
from .schemas import (
    COMPONENT_COLUMNS,
    COMPONENTS,
    CapacityPolicy,
    Corridor,
    CostBreakdown,
    CostParams,
    DemandDistribution,
    DesignSolution,
    FleetOptimization,
    RouteForm,
    ServiceMetrics,
    VehicleType,
)

logger = structlog.get_logger(__name__)

GRID_SIZE = 64
POLISH_STARTS = 5
S_UPPER_FACTOR = 4.0
CAPACITY_SLACK = 1e-6
RIDE_QUANTILES = 4000
_BOUNDARY_TOL = 1e-9


def vehicle_params(params_base: CostParams, vehicle: VehicleType) -> CostParams:
    """Base cost parameters with the vehicle's operating and vehicle costs."""
    return params_base.model_copy(update={
        "operating_cost": vehicle.operating_cost,
        "vehicle_cost": vehicle.vehicle_cost,
    })


def scale_operator_costs(vehicles: Sequence[VehicleType], factor: float) -> List[VehicleType]:
    if factor <= 0:
        raise ModelDomainError(f"cost scale must be positive, got {factor}")
    return [
        v.model_copy(update={
            "operating_cost": v.operating_cost * factor,
            "vehicle_cost": v.vehicle_cost * factor,
        })
        for v in vehicles
    ]


def headway(corridor: Corridor, demand: DemandDistribution, x_f: float, s: float) -> float:
    """Headway (h) a fleet of s vehicles sustains with x_f km served on demand."""
    _check(corridor, demand)
    v = corridor.vehicle_speed
    denom = s * v / 2.0 - corridor.cross_section.mean_detour * dm.cumulative(demand, x_f)
    if not denom > 0:
        raise InfeasibleModelError(
            f"fleet of {s:.4g} vehicles cannot complete a cycle with x_f={x_f:.4g} km"
        )
    return (corridor.route_length + corridor.layover_time * v) / denom


def fleet_lower_bound(corridor: Corridor, demand: DemandDistribution, policy: CapacityPolicy,
                      vehicle: VehicleType, x_f: dm.Number) -> dm.Number:
    """Smallest fleet whose buffered capacity rho*b/h still carries the full demand."""
    _check(corridor, demand)
    v = corridor.vehicle_speed
    cycle_km = corridor.route_length + corridor.layover_time * v
    lam = demand.total_demand
    return 2.0 / v * (
        lam / (policy.buffer * vehicle.capacity) * cycle_km
        + corridor.cross_section.mean_detour * dm.cumulative(demand, x_f)
    )


def total_cost_variable(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                        vehicle: VehicleType, x_f: float, s: float) -> CostBreakdown:
    h = headway(corridor, demand, x_f, s)
    return CostBreakdown.from_components(**_components(corridor, demand, params_base, vehicle, x_f, s, h))


def optimal_fleet_given_portion(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                                vehicle: VehicleType, policy: CapacityPolicy,
                                x_f: float) -> Tuple[float, float, float]:
    """Best (s, h, total) for a fixed flexible portion.

    With x_f fixed the cost is A*h + B/h plus constants, so the unconstrained optimum is
    h = sqrt(B/A), capped at the capacity headway rho*b/Λ.
    """
    _check(corridor, demand)
    lam = demand.total_demand
    if lam <= 0:
        raise InfeasibleModelError("no demand: the capacity headway is unbounded")
    params = vehicle_params(params_base, vehicle)
    v = corridor.vehicle_speed
    cycle_km = corridor.route_length + corridor.layover_time * v
    F = dm.cumulative(demand, x_f)
    d = corridor.cross_section.mean_detour
    gt = params.value_of_time
    a = gt * params.waiting_factor * lam / 2.0 + gt * d * F ** 2 / (2.0 * v)
    b = params.operating_cost * corridor.route_length + 2.0 * params.vehicle_cost * cycle_km / v
    h = min(math.sqrt(b / a), policy.buffer * vehicle.capacity / lam)
    s = 2.0 * (cycle_km / h + d * F) / v
    total = total_cost_variable(corridor, demand, params_base, vehicle, x_f, s).total
    return s, h, total


def flexible_portion_profile(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                             vehicle: VehicleType, policy: CapacityPolicy,
                             samples: int = 101) -> pd.DataFrame:
    """Cost, fleet and headway along x_f with the fleet re-optimized at every sample."""
    if samples < 2:
        raise ModelDomainError(f"need at least 2 samples, got {samples}")
    rows = []
    for x in np.linspace(0.0, corridor.route_length, samples):
        s, h, _ = optimal_fleet_given_portion(corridor, demand, params_base, vehicle, policy, float(x))
        bd = total_cost_variable(corridor, demand, params_base, vehicle, float(x), s)
        row = {"x_f": float(x), "fleet": s, "headway_min": h * 60.0}
        row.update({COMPONENT_COLUMNS[name]: getattr(bd, name) for name in COMPONENTS})
        row.update({"user": bd.user, "operator": bd.operator, "total": bd.total})
        rows.append(row)
    df = pd.DataFrame(rows)
    df.insert(0, "vehicle", vehicle.name)
    return df


def cost_surface(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                 vehicle: VehicleType, policy: CapacityPolicy, n_x: int = GRID_SIZE, n_s: int = GRID_SIZE,
                 s_upper_factor: float = S_UPPER_FACTOR) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Total cost on an (x_f, s) grid; NaN where s is below the capacity bound.

    The matrix is indexed [i_x, i_s].
    """
    if n_x < 2 or n_s < 2:
        raise ModelDomainError("grid needs at least 2 points per axis")
    _require_demand(demand)
    xs = np.linspace(0.0, corridor.route_length, n_x)
    lb = fleet_lower_bound(corridor, demand, policy, vehicle, xs)
    ss = np.linspace(lb[0], s_upper_factor * lb[-1], n_s)
    t = ss[None, :] - lb[:, None]
    totals = _objective(corridor, demand, params_base, vehicle, policy, xs[:, None], np.maximum(t, 0.0))
    totals = np.where(t >= -CAPACITY_SLACK * lb[:, None], totals, np.nan)
    return xs, ss, totals


def optimize_for_vehicle(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                         vehicle: VehicleType, policy: Optional[CapacityPolicy] = None) -> DesignSolution:
    """Joint (x_f, s) minimum: multi-start grid then L-BFGS-B polish from the best cells."""
    policy = policy or CapacityPolicy()
    _check(corridor, demand)
    _require_demand(demand)
    length = corridor.route_length
    lb = fleet_lower_bound(corridor, demand, policy, vehicle, np.array([0.0, length]))
    t_max = S_UPPER_FACTOR * lb[1] - lb[0]

    xs = np.linspace(0.0, length, GRID_SIZE)
    ts = np.linspace(0.0, t_max, GRID_SIZE)
    grid = _objective(corridor, demand, params_base, vehicle, policy, xs[:, None], ts[None, :])
    order = np.argsort(grid, axis=None, kind="stable")[:POLISH_STARTS]

    def fun(z):
        return _objective_and_gradient(corridor, demand, params_base, vehicle, policy, z[0], z[1])

    best_x, best_t = xs[order[0] // GRID_SIZE], ts[order[0] % GRID_SIZE]
    best_val = float(grid.flat[order[0]])
    for flat in order:
        start = np.array([xs[flat // GRID_SIZE], ts[flat % GRID_SIZE]])
        res = minimize(fun, start, jac=True, method="L-BFGS-B",
                       bounds=[(0.0, length), (0.0, None)],
                       options={"ftol": 1e-12, "gtol": 1e-10, "maxiter": 500})
        x_opt = float(np.clip(res.x[0], 0.0, length))
        t_opt = max(float(res.x[1]), 0.0)
        val = float(_objective(corridor, demand, params_base, vehicle, policy, x_opt, t_opt))
        if val < best_val:
            best_x, best_t, best_val = x_opt, t_opt, val

    s = float(fleet_lower_bound(corridor, demand, policy, vehicle, best_x)) + best_t
    solution = _solution(corridor, demand, params_base, vehicle, policy, best_x, s)
    logger.info("vehicle_optimized", vehicle=vehicle.name, x_f=round(solution.x_f, 4),
                fleet=round(solution.fleet_size, 4), headway_min=round(solution.headway_min, 3),
                total=round(solution.breakdown.total, 4))
    return solution


def optimize_over_fleet(corridor: Corridor, demand: DemandDistribution, params_base: CostParams,
                        vehicles: Sequence[VehicleType], policy: Optional[CapacityPolicy] = None,
                        max_workers: Optional[int] = None) -> FleetOptimization:
    """Optimize every vehicle type; the best is the lowest total, then smaller capacity, then name."""
    if not vehicles:
        raise ModelDomainError("vehicle list is empty")
    policy = policy or CapacityPolicy()

    def attempt(vehicle: VehicleType):
        try:
            return optimize_for_vehicle(corridor, demand, params_base, vehicle, policy)
        except SemiFlexError as e:
            logger.warning("vehicle_infeasible", vehicle=vehicle.name, reason=e.detail)
            return e

    outcomes = run_concurrently(attempt, vehicles, max_workers=max_workers if max_workers else 1)
    solutions = [o for o in outcomes if isinstance(o, DesignSolution)]
    failures = {v.name: o.detail for v, o in zip(vehicles, outcomes) if isinstance(o, SemiFlexError)}
    if not solutions:
        causes = "; ".join(f"{name}: {why}" for name, why in failures.items())
        raise InfeasibleModelError(f"no feasible vehicle type ({causes})")
    best = min(solutions, key=lambda sol: (sol.breakdown.total, sol.vehicle.capacity, sol.vehicle.name))
    return FleetOptimization(best=best, solutions=solutions, failures=failures)


def service_metrics(corridor: Corridor, demand: DemandDistribution, solution: DesignSolution) -> ServiceMetrics:
    """Per-passenger times in minutes.

    Walking time off the flexible zone is taken as uniform on [0, 2 t_a]. The ride-time
    spread is the exact spread over origins of x-ride plus the detours made after pickup.
    """
    lam = demand.total_demand
    h = solution.headway
    if lam <= 0:
        return ServiceMetrics(avg_access=0.0, avg_wait=h / 2 * 60, avg_ride=0.0,
                              std_access=0.0, std_wait=h / math.sqrt(12) * 60, std_ride=0.0)
    v, length = corridor.vehicle_speed, corridor.route_length
    ta, d = corridor.cross_section.mean_access_time, corridor.cross_section.mean_detour
    F = dm.cumulative(demand, solution.x_f)
    fixed_share = max(lam - F, 0.0) / lam

    avg_access = ta * fixed_share
    sigma_walk = ta / math.sqrt(3.0)
    var_access = fixed_share * (sigma_walk ** 2 + ta ** 2) - avg_access ** 2
    avg_ride = dm.riding_integral(demand) / (lam * v) + h * d * F ** 2 / (2.0 * v * lam)

    q = (np.arange(RIDE_QUANTILES) + 0.5) * lam / RIDE_QUANTILES
    x = dm.inverse_cumulative(demand, q)
    ride = (length - x) / v + h * d * np.maximum(F - q, 0.0) / v
    std_ride = float(np.std(ride))

    return ServiceMetrics(
        avg_access=avg_access * 60.0,
        avg_wait=h / 2.0 * 60.0,
        avg_ride=avg_ride * 60.0,
        std_access=math.sqrt(max(var_access, 0.0)) * 60.0,
        std_wait=h / math.sqrt(12.0) * 60.0,
        std_ride=std_ride * 60.0,
    )


def route_form_of(corridor: Corridor, x_f: float) -> RouteForm:
    if x_f <= _BOUNDARY_TOL * corridor.route_length:
        return RouteForm.FIXED
    if x_f >= corridor.route_length * (1.0 - _BOUNDARY_TOL):
        return RouteForm.FLEXIBLE
    return RouteForm.HYBRID


def _solution(corridor, demand, params_base, vehicle, policy, x_f, s) -> DesignSolution:
    h = headway(corridor, demand, x_f, s)
    lam = demand.total_demand
    if policy.buffer * vehicle.capacity / h < lam * (1.0 - CAPACITY_SLACK):
        raise InfeasibleModelError(f"{vehicle.name}: capacity {policy.buffer * vehicle.capacity / h:.4g} pax/h below demand")
    breakdown = CostBreakdown.from_components(**_components(corridor, demand, params_base, vehicle, x_f, s, h))
    draft = DesignSolution(
        vehicle=vehicle, x_f=x_f, fleet_size=s, headway=h, form=route_form_of(corridor, x_f),
        breakdown=breakdown,
        metrics=ServiceMetrics(avg_access=0, avg_wait=0, avg_ride=0, std_access=0, std_wait=0, std_ride=0),
    )
    return draft.model_copy(update={"metrics": service_metrics(corridor, demand, draft)})


def _components(corridor, demand, params_base, vehicle, x_f, s, h):
    params = vehicle_params(params_base, vehicle)
    lam = demand.total_demand
    F = np.asarray(dm.cumulative(demand, x_f))
    v, length = corridor.vehicle_speed, corridor.route_length
    ta, d = corridor.cross_section.mean_access_time, corridor.cross_section.mean_detour
    gt = params.value_of_time
    return {
        "access": gt * params.access_factor * ta * np.maximum(lam - F, 0.0),
        "waiting": gt * params.waiting_factor * lam * h / 2.0,
        "riding_x": gt / v * dm.riding_integral(demand) + 0.0 * F,
        "riding_y": gt * h * d * F ** 2 / (2.0 * v),
        "operating_x": params.operating_cost * length / h,
        "operating_y": params.operating_cost * d * F,
        "vehicle": params.vehicle_cost * s,
    }


def _objective(corridor, demand, params_base, vehicle, policy, x_f, t):
    """Total cost in search variables; broadcasts over x_f and t."""
    x = np.asarray(x_f, dtype=float)
    t = np.asarray(t, dtype=float)
    v = corridor.vehicle_speed
    cycle_km = corridor.route_length + corridor.layover_time * v
    k = demand.total_demand * cycle_km / (policy.buffer * vehicle.capacity)
    h = cycle_km / (k + t * v / 2.0)
    s = fleet_lower_bound(corridor, demand, policy, vehicle, x) + t
    parts = _components(corridor, demand, params_base, vehicle, x, s, h)
    return sum(parts[name] for name in COMPONENTS)


def _objective_and_gradient(corridor, demand, params_base, vehicle, policy, x_f, t):
    params = vehicle_params(params_base, vehicle)
    length = corridor.route_length
    x = min(max(float(x_f), 0.0), length)
    t = max(float(t), 0.0)
    v = corridor.vehicle_speed
    cycle_km = length + corridor.layover_time * v
    lam = demand.total_demand
    k = lam * cycle_km / (policy.buffer * vehicle.capacity)
    h = cycle_km / (k + t * v / 2.0)
    F = dm.cumulative(demand, x)
    f = dm.density(demand, x)
    ta, d = corridor.cross_section.mean_access_time, corridor.cross_section.mean_detour
    gt, go, gv = params.value_of_time, params.operating_cost, params.vehicle_cost

    value = float(_objective(corridor, demand, params_base, vehicle, policy, x, t))
    d_x = f * (-gt * params.access_factor * ta + gt * d * F * h / v + go * d + 2.0 * gv * d / v)
    d_cost_d_h = gt * params.waiting_factor * lam / 2.0 + gt * d * F ** 2 / (2.0 * v) - go * length / h ** 2
    d_t = d_cost_d_h * (-h ** 2 * v / (2.0 * cycle_km)) + gv
    return value, np.array([d_x, d_t])


def _require_demand(demand: DemandDistribution) -> None:
    if demand.total_demand <= 0:
        raise InfeasibleModelError("no demand: the capacity headway is unbounded")


def _check(corridor: Corridor, demand: DemandDistribution) -> None:
    if not math.isclose(corridor.route_length, demand.route_length, rel_tol=1e-9):
        raise ModelDomainError(
            f"corridor length {corridor.route_length} km does not match demand length {demand.route_length} km"
        )
