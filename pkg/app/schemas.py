import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# --- demand model -----------------------------------------------------------

class DemandKind(str, Enum):
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"
    EMPIRICAL = "empirical"


class DemandDistribution(Frozen):
    """x-direction demand over [0, route_length]; x = 0 is the far end, x = L_x the station."""

    kind: DemandKind
    total_demand: float = Field(ge=0)  # pax/h
    route_length: float = Field(gt=0)  # km
    empirical_points: Optional[Tuple[Tuple[float, float], ...]] = None
    bin_mass: Optional[Tuple[float, ...]] = None  # pax/h per equal-width bin

    @model_validator(mode="after")
    def _check_empirical(self):
        if self.kind != DemandKind.EMPIRICAL:
            return self
        if self.empirical_points is None or not self.bin_mass:
            raise ValueError("empirical distributions need points and bin masses")
        for x, trips in self.empirical_points:
            if not 0.0 <= x <= self.route_length:
                raise ValueError(f"point at x={x} outside [0, {self.route_length}]")
            if trips < 0:
                raise ValueError(f"negative trips {trips} at x={x}")
        if any(m < 0 for m in self.bin_mass):
            raise ValueError("bin masses must be non-negative")
        if not math.isclose(sum(self.bin_mass), self.total_demand, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("bin masses do not add up to total_demand")
        return self

    @property
    def bin_width(self) -> float:
        return self.route_length / len(self.bin_mass)


class CrossSection(Frozen):
    mean_access_time: float = Field(ge=0)  # h
    mean_detour: float = Field(ge=0)  # km


class Corridor(Frozen):
    route_length: float = Field(gt=0)  # km
    vehicle_speed: float = Field(gt=0)  # km/h
    layover_time: float = Field(ge=0)  # h
    cross_section: CrossSection


# --- cost model -------------------------------------------------------------

class CostParams(Frozen):
    value_of_time: float = Field(gt=0)  # $/h
    access_factor: float = Field(gt=0)
    waiting_factor: float = Field(gt=0)
    operating_cost: float = Field(gt=0)  # $/km
    vehicle_cost: float = Field(gt=0)  # $/veh-h

    def scaled(self, factor: float) -> "CostParams":
        """Operator costs multiplied by `factor`."""
        return self.model_copy(update={
            "operating_cost": self.operating_cost * factor,
            "vehicle_cost": self.vehicle_cost * factor,
        })


COMPONENTS = ("access", "waiting", "riding_x", "riding_y", "operating_x", "operating_y", "vehicle")
# report-table column per component; "vehicle" is the vehicle-type name in fleet tables
COMPONENT_COLUMNS = {name: "vehicle_cost" if name == "vehicle" else name for name in COMPONENTS}


class CostBreakdown(Frozen):
    access: float = Field(ge=0)
    waiting: float = Field(ge=0)
    riding_x: float = Field(ge=0)
    riding_y: float = Field(ge=0)
    operating_x: float = Field(ge=0)
    operating_y: float = Field(ge=0)
    vehicle: float = Field(ge=0)
    total: float = Field(ge=0)

    @model_validator(mode="after")
    def _check_total(self):
        parts = sum(getattr(self, name) for name in COMPONENTS)
        if not math.isclose(parts, self.total, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"total {self.total} != sum of components {parts}")
        return self

    @classmethod
    def from_components(cls, **components: float) -> "CostBreakdown":
        values = {name: float(components[name]) for name in COMPONENTS}
        return cls(total=sum(values.values()), **values)

    @property
    def user(self) -> float:
        return self.access + self.waiting + self.riding_x + self.riding_y

    @property
    def operator(self) -> float:
        return self.operating_x + self.operating_y + self.vehicle


class RouteForm(str, Enum):
    FIXED = "fixed"
    HYBRID = "hybrid"
    FLEXIBLE = "flexible"


class RouteFormThresholds(Frozen):
    access_detour_ratio: float  # t_a / d (h/km), inf when d = 0
    lower: float
    upper: float
    degenerate: bool = False  # zero mean detour


# --- joint optimizer --------------------------------------------------------

class VehicleType(Frozen):
    name: str
    capacity: float = Field(gt=0)  # pax/veh
    operating_cost: float = Field(gt=0)  # $/km
    vehicle_cost: float = Field(gt=0)  # $/veh-h


class CapacityPolicy(Frozen):
    buffer: float = Field(0.7, gt=0, le=1)


class ServiceMetrics(Frozen):
    """Per-passenger times in minutes."""

    avg_access: float = Field(ge=0)
    avg_wait: float = Field(ge=0)
    avg_ride: float = Field(ge=0)
    std_access: float = Field(ge=0)
    std_wait: float = Field(ge=0)
    std_ride: float = Field(ge=0)


class DesignSolution(Frozen):
    vehicle: VehicleType
    x_f: float = Field(ge=0)  # km
    fleet_size: float = Field(gt=0)  # veh
    headway: float = Field(gt=0)  # h
    form: RouteForm
    breakdown: CostBreakdown
    metrics: ServiceMetrics

    @model_validator(mode="after")
    def _finite_headway(self):
        if not math.isfinite(self.headway):
            raise ValueError("headway must be finite")
        return self

    @property
    def headway_min(self) -> float:
        return self.headway * 60.0


class FleetOptimization(Frozen):
    best: DesignSolution
    solutions: List[DesignSolution]
    failures: Dict[str, str] = {}


# --- geo pipeline -----------------------------------------------------------

class Station(Frozen):
    id: str
    x: float  # km, projected
    y: float

    @model_validator(mode="after")
    def _finite(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"station {self.id} has non-finite coordinates")
        return self


class DemandPoint(Frozen):
    id: str
    x: float
    y: float
    trips: float = Field(ge=0)  # pax/h


class ServiceArea(str, Enum):
    FIXED = "FixedArea"
    FLEXIBLE = "FlexibleArea"


class CorridorAxis(Frozen):
    station_id: str
    origin: Tuple[float, float]
    direction: Tuple[float, float]  # unit vector from the station toward the far point
    length: float = Field(ge=0)
    far_point_id: Optional[str] = None
    degenerate: bool = False


class CorridorAssignment(Frozen):
    point_id: str
    station_id: str
    corridor_id: str
    x_along_axis: float = Field(ge=0)  # km from the far end
    y_offset: float  # km, signed
    trips: float = Field(ge=0)
    service: ServiceArea = ServiceArea.FIXED
    beyond_walk_coverage: bool = False


class CorridorResult(Frozen):
    corridor_id: str
    station_id: str
    axis: CorridorAxis
    point_count: int
    passengers: float
    demand: Optional[DemandDistribution] = None
    cross_section: Optional[CrossSection] = None
    form: Optional[RouteForm] = None
    flexible_demand: float = 0.0  # F* clamped to [0, Λ]
    x_f: float = 0.0
    flexible_points: int = 0
    empty: bool = False
    degenerate: bool = False
    fixed_route: Optional[CostBreakdown] = None
    semi_on_demand: Optional[CostBreakdown] = None


class ModeMetrics(Frozen):
    avg_access_time: float  # min
    avg_waiting_time: float
    avg_riding_time: float
    avg_user_cost: float  # $/pax
    avg_operator_cost: Optional[float] = None
    avg_generalized_cost: Optional[float] = None
    total_access: float  # $/h
    total_waiting: float
    total_riding: float
    total_user: float
    total_operating: Optional[float] = None
    total_vehicle: Optional[float] = None
    total_operator: Optional[float] = None
    total_generalized: Optional[float] = None

    @model_validator(mode="after")
    def _check_generalized(self):
        if self.total_generalized is not None:
            expected = self.total_user + self.total_operator
            if not math.isclose(expected, self.total_generalized, rel_tol=1e-6, abs_tol=1e-9):
                raise ValueError("generalized cost must equal user + operator cost")
        return self


class GroupSummary(Frozen):
    routes: int
    points: int
    passengers: float
    fixed_route: ModeMetrics
    semi_on_demand: ModeMetrics
    percent_change: Dict[str, Optional[float]]


class CaseStudySummary(Frozen):
    headway: float  # h
    flexible_demand_threshold: Optional[float] = None  # unclamped F*, pax/h
    flexible_load_per_trip: Optional[float] = None  # F* H, pax/trip
    fixed_routes: int = 0
    hybrid_routes: int = 0
    flexible_routes: int = 0
    degenerate_zones: int = 0
    empty_corridors: int = 0
    all_feeders: GroupSummary
    semi_on_demand_feeders: GroupSummary
    flexible_area: GroupSummary


class PipelineSettings(Frozen):
    headway: float = Field(0.25, gt=0)  # h
    vehicle_speed: float = Field(30.0, gt=0)  # km/h
    layover_time: float = Field(1.0 / 6.0, ge=0)  # h
    walk_speed: float = Field(4.0, gt=0)  # km/h
    max_access_time: float = Field(0.25, gt=0)  # h, one-way walk to the axis
    bins: int = Field(50, ge=1)
    max_corridors_per_subzone: int = Field(1, ge=1)

    @property
    def max_width(self) -> float:
        """Walk-coverage width spanning both sides of the axis (km)."""
        return 2.0 * self.walk_speed * self.max_access_time


class PipelineResult(Frozen):
    assignments: List[CorridorAssignment]
    corridors: List[CorridorResult]
    summary: CaseStudySummary
