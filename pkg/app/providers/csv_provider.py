import json
import os
import tempfile
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from .. import demand_model as dm
from ..errors import DataFormatError
from ..schemas import CorridorAssignment, DemandDistribution, DemandPoint, Station, VehicleType

logger = structlog.get_logger(__name__)

ASSIGNMENT_COLUMNS = ["point_id", "station_id", "corridor_id", "x_km", "y_km", "service", "beyond_walk_coverage"]


def _read_frame(path: str, columns: Sequence[str], numeric: Sequence[str]) -> pd.DataFrame:
    """CSV with the given header; numeric columns checked row by row (rows counted from the header)."""
    try:
        df = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: file not found")
    except pd.errors.EmptyDataError:
        logger.warning("empty_input", path=path)
        return pd.DataFrame(columns=list(columns))
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{path}: {e}")

    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    if df.empty:
        logger.warning("empty_input", path=path)
    for col in numeric:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.argmax(bad)) + 2
            raise DataFormatError(f"{path}: row {row}: {col}={df[col].iloc[row - 2]!r} is not a finite number")
        df[col] = values.astype(float)
    return df


def _non_negative(df: pd.DataFrame, path: str, col: str) -> None:
    neg = df[col] < 0
    if neg.any():
        raise DataFormatError(f"{path}: row {int(neg.idxmax()) + 2}: {col} must be non-negative")


def read_demand_profile(path: str) -> List[Tuple[float, float]]:
    """`x_km,trips_per_h` rows."""
    df = _read_frame(path, ["x_km", "trips_per_h"], ["x_km", "trips_per_h"])
    _non_negative(df, path, "trips_per_h")
    return list(zip(df["x_km"].tolist(), df["trips_per_h"].tolist()))


def load_demand_csv(path: str, route_length: float, bins: int = 50) -> DemandDistribution:
    return dm.empirical(read_demand_profile(path), route_length, bins)


def read_vehicles(path: str) -> List[VehicleType]:
    cols = ["name", "capacity", "operating_cost_per_km", "vehicle_cost_per_h"]
    df = _read_frame(path, cols, cols[1:])
    out = []
    for i, row in df.iterrows():
        try:
            out.append(VehicleType(name=str(row["name"]).strip(), capacity=row["capacity"],
                                   operating_cost=row["operating_cost_per_km"], vehicle_cost=row["vehicle_cost_per_h"]))
        except ValueError as e:
            raise DataFormatError(f"{path}: row {int(i) + 2}: {e}")
    return out


def read_stations(path: str) -> List[Station]:
    df = _read_frame(path, ["id", "x_km", "y_km"], ["x_km", "y_km"])
    return [Station(id=str(r.id).strip(), x=r.x_km, y=r.y_km) for r in df.itertuples(index=False)]


def read_points(path: str) -> List[DemandPoint]:
    df = _read_frame(path, ["id", "x_km", "y_km", "trips_per_h"], ["x_km", "y_km", "trips_per_h"])
    _non_negative(df, path, "trips_per_h")
    return [DemandPoint(id=str(r.id).strip(), x=r.x_km, y=r.y_km, trips=r.trips_per_h)
            for r in df.itertuples(index=False)]


def assignments_frame(assignments: Sequence[CorridorAssignment]) -> pd.DataFrame:
    rows = [{
        "point_id": a.point_id,
        "station_id": a.station_id,
        "corridor_id": a.corridor_id,
        "x_km": a.x_along_axis,
        "y_km": a.y_offset,
        "service": a.service.value,
        "beyond_walk_coverage": a.beyond_walk_coverage,
    } for a in assignments]
    return pd.DataFrame(rows, columns=ASSIGNMENT_COLUMNS)


def atomic_write_csv(df: pd.DataFrame, target_path: str) -> None:
    dirpath = os.path.dirname(target_path) or "."
    try:
        os.makedirs(dirpath, exist_ok=True)
        with tempfile.NamedTemporaryFile(mode="w", dir=dirpath, delete=False, suffix=".csv",
                                         encoding="utf-8", newline="") as tmp:
            tmp_name = tmp.name
            df.to_csv(tmp, index=False, float_format="%.10g", lineterminator="\n")
        os.replace(tmp_name, target_path)
    except OSError as e:
        raise DataFormatError(f"cannot write {target_path}: {e}")
    logger.info("file_written", path=target_path, rows=len(df))


def atomic_write_json(obj: Dict[str, Any], target_path: str) -> None:
    dirpath = os.path.dirname(target_path) or "."
    try:
        os.makedirs(dirpath, exist_ok=True)
        with tempfile.NamedTemporaryFile(mode="w", dir=dirpath, delete=False, suffix=".json",
                                         encoding="utf-8") as tmp:
            tmp_name = tmp.name
            json.dump(obj, tmp, indent=2, sort_keys=False, allow_nan=False)
            tmp.write("\n")
        os.replace(tmp_name, target_path)
    except OSError as e:
        raise DataFormatError(f"cannot write {target_path}: {e}")
    except ValueError as e:
        raise DataFormatError(f"cannot serialize {target_path}: {e}")
    logger.info("file_written", path=target_path)
