import json
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..errors import DataFormatError
from ..geo_pipeline import project_lonlat
from ..schemas import CorridorAssignment, DemandPoint, Station


def read_stations_geojson(path: str, origin: Optional[Tuple[float, float]] = None) -> List[Station]:
    """Point features; id from `properties.id`, else the feature id.

    Coordinates are planar km, or (lon, lat) degrees projected around `origin` when one is given.
    Demand points must already be planar km around the same origin.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise DataFormatError(f"{path}: {e}")
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON: {e}")
    if data.get("type") != "FeatureCollection":
        raise DataFormatError(f"{path}: expected a FeatureCollection")

    ids, coords = [], []
    for n, feat in enumerate(data.get("features", []), start=1):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise DataFormatError(f"{path}: feature {n}: geometry must be a Point")
        fid = (feat.get("properties") or {}).get("id", feat.get("id"))
        if fid is None:
            raise DataFormatError(f"{path}: feature {n}: missing id")
        try:
            x, y = (float(c) for c in geom["coordinates"][:2])
        except (KeyError, TypeError, ValueError):
            raise DataFormatError(f"{path}: feature {n}: bad coordinates")
        ids.append(str(fid))
        coords.append((x, y))

    if origin is not None and coords:
        coords = [tuple(xy) for xy in project_lonlat(coords, origin=origin)]
    try:
        return [Station(id=i, x=x, y=y) for i, (x, y) in zip(ids, coords)]
    except ValueError as e:
        raise DataFormatError(f"{path}: {e}")


def points_feature_collection(assignments: Sequence[CorridorAssignment],
                              points: Sequence[DemandPoint]) -> Dict[str, Any]:
    """Labelled demand points at their planar positions."""
    position = {p.id: (p.x, p.y) for p in points}
    features = []
    for a in assignments:
        x, y = position[a.point_id]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [x, y]},
            "properties": {
                "point_id": a.point_id,
                "station_id": a.station_id,
                "corridor_id": a.corridor_id,
                "x_km": a.x_along_axis,
                "y_km": a.y_offset,
                "service": a.service.value,
                "beyond_walk_coverage": a.beyond_walk_coverage,
            },
        })
    return {"type": "FeatureCollection", "features": features}
