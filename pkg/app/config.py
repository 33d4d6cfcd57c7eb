import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigValidationError, DataFormatError

load_dotenv()

WORKERS = int(os.getenv("SEMIFLEX_WORKERS", "4"))
LOG_LEVEL = os.getenv("SEMIFLEX_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = os.getenv("SEMIFLEX_LOG_FORMAT", "console").lower()
OUT_DIR = os.getenv("SEMIFLEX_OUT_DIR", "./out")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _minutes_to_hours(cls, data: Any) -> Any:
        """Accept `<name>_min` for any `<name>_h` field."""
        if not isinstance(data, dict):
            return data
        out = dict(data)
        for key in list(out):
            if key.endswith("_min"):
                target = key[:-4] + "_h"
                if target in out:
                    raise ValueError(f"both {key} and {target} given")
                value = out.pop(key)
                out[target] = value / 60.0 if isinstance(value, (int, float)) else value
        return out


class CorridorConfig(_Section):
    route_length_km: float = Field(gt=0)
    vehicle_speed_kmh: float = Field(gt=0)
    layover_h: float = Field(ge=0)
    mean_access_h: float = Field(ge=0)
    mean_detour_km: float = Field(ge=0)


class DemandConfig(_Section):
    kind: str = Field("uniform", pattern="^(uniform|triangular|empirical)$")
    total_pax_h: Optional[float] = Field(None, ge=0)
    file: Optional[str] = None  # x_km,trips_per_h
    bins: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _source(self):
        if self.kind == "empirical" and not self.file:
            raise ValueError("empirical demand needs a file")
        if self.kind != "empirical" and self.total_pax_h is None:
            raise ValueError(f"{self.kind} demand needs total_pax_h")
        return self


class CostConfig(_Section):
    value_of_time: float = Field(gt=0)
    access_factor: float = Field(gt=0)
    waiting_factor: float = Field(gt=0)
    operating_cost: float = Field(gt=0)
    vehicle_cost: float = Field(gt=0)
    headway_h: float = Field(gt=0)


class VehicleConfig(_Section):
    name: str
    capacity: float = Field(gt=0)
    operating_cost: float = Field(gt=0)
    vehicle_cost: float = Field(gt=0)


class FleetConfig(_Section):
    vehicles: List[VehicleConfig] = []
    file: Optional[str] = None  # name,capacity,operating_cost_per_km,vehicle_cost_per_h
    capacity_buffer: float = Field(0.7, gt=0, le=1)


class CaseStudyConfig(_Section):
    stations_file: Optional[str] = None
    points_file: Optional[str] = None
    walk_speed_kmh: float = Field(4.0, gt=0)
    max_access_h: float = Field(0.25, gt=0)
    origin_lon: Optional[float] = Field(None, ge=-180, le=180)  # projection origin for lon/lat stations
    origin_lat: Optional[float] = Field(None, ge=-90, le=90)
    bins: int = Field(50, ge=1)
    max_corridors_per_subzone: int = Field(1, ge=1)
    vehicle_speed_kmh: float = Field(30.0, gt=0)
    layover_h: float = Field(1.0 / 6.0, ge=0)
    geojson: bool = True


class RunConfig(_Section):
    corridor: Optional[CorridorConfig] = None
    demand: Optional[DemandConfig] = None
    costs: CostConfig
    fleet: FleetConfig = FleetConfig()
    casestudy: CaseStudyConfig = CaseStudyConfig()
    samples: int = Field(200, ge=2)
    base_dir: str = "."  # relative file paths resolve against this


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def read_config_file(path: str) -> Dict[str, Any]:
    """TOML or JSON, chosen by extension."""
    try:
        if path.endswith(".json"):
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as e:
        raise DataFormatError(f"cannot read config {path}: {e}")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise DataFormatError(f"cannot parse config {path}: {e}")


def parse_override(item: str) -> Dict[str, Any]:
    """`section.key=value` into a nested dict; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigValidationError(f"override {item!r} is not of the form key=value")
    path, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    out: Dict[str, Any] = {}
    node = out
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return out


def build_run_config(preset: Optional[Dict[str, Any]] = None, config_path: Optional[str] = None,
                     overrides: Optional[List[Dict[str, Any]]] = None) -> RunConfig:
    """Preset, then config file, then flag overrides; later sources win."""
    merged: Dict[str, Any] = dict(preset or {})
    if config_path:
        merged = deep_merge(merged, read_config_file(config_path))
        merged.setdefault("base_dir", os.path.dirname(os.path.abspath(config_path)))
    for item in overrides or []:
        merged = deep_merge(merged, item)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigValidationError(format_validation_error(e))


def format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def resolve_path(config: RunConfig, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(config.base_dir, path)
