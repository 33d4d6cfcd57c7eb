"""x-direction demand distributions and cross-section statistics.

Positions run from x = 0 at the far (low-density) end of the corridor to x = L_x at the
station. Every function accepts a scalar or an array for the position/demand argument and
returns the same shape.
"""
from typing import Iterable, Tuple, Union

import numpy as np
import structlog

from .errors import ModelDomainError
from .schemas import CrossSection, DemandDistribution, DemandKind

logger = structlog.get_logger(__name__)

DEFAULT_BINS = 50
_REL_TOL = 1e-12

Number = Union[float, np.ndarray]


def uniform(total_demand: float, route_length: float) -> DemandDistribution:
    _check_shape_args(total_demand, route_length)
    return DemandDistribution(kind=DemandKind.UNIFORM, total_demand=total_demand, route_length=route_length)


def triangular(total_demand: float, route_length: float) -> DemandDistribution:
    """Density rising linearly from 0 at the far end; peak λ0 = 2Λ/L_x at the station."""
    _check_shape_args(total_demand, route_length)
    return DemandDistribution(kind=DemandKind.TRIANGULAR, total_demand=total_demand, route_length=route_length)


def empirical(points: Iterable[Tuple[float, float]], route_length: float,
              bins: int = DEFAULT_BINS) -> DemandDistribution:
    """Piecewise-constant density from (x_km, trips_per_h) points binned into equal-width bins."""
    if route_length <= 0:
        raise ModelDomainError(f"route length must be positive, got {route_length}")
    if bins < 1:
        raise ModelDomainError(f"bin count must be at least 1, got {bins}")
    pts = tuple((float(x), float(trips)) for x, trips in points)
    for x, trips in pts:
        if not 0.0 <= x <= route_length:
            raise ModelDomainError(f"demand point x={x} outside [0, {route_length}]")
        if trips < 0:
            raise ModelDomainError(f"negative trips {trips} at x={x}")

    xs = np.array([p[0] for p in pts], dtype=float)
    trips = np.array([p[1] for p in pts], dtype=float)
    width = route_length / bins
    idx = np.minimum((xs / width).astype(int), bins - 1)
    mass = np.bincount(idx, weights=trips, minlength=bins)
    total = float(mass.sum())
    if total == 0.0:
        logger.warning("empirical_demand_empty", points=len(pts))
    return DemandDistribution(
        kind=DemandKind.EMPIRICAL,
        total_demand=total,
        route_length=route_length,
        empirical_points=pts,
        bin_mass=tuple(float(m) for m in mass),
    )


def density(d: DemandDistribution, x: Number) -> Number:
    """f(x) in pax/km-h."""
    xs = _positions(d, x)
    lam, length = d.total_demand, d.route_length
    if d.kind == DemandKind.UNIFORM:
        out = np.full_like(xs, lam / length)
    elif d.kind == DemandKind.TRIANGULAR:
        out = 2.0 * lam * xs / length ** 2
    else:
        mass, width = np.asarray(d.bin_mass), d.bin_width
        out = mass[_bin_index(d, xs)] / width
    return _like(out, x)


def density_slope(d: DemandDistribution, x: Number) -> Number:
    """f'(x); zero inside the bins of an empirical distribution."""
    xs = _positions(d, x)
    if d.kind == DemandKind.TRIANGULAR:
        out = np.full_like(xs, 2.0 * d.total_demand / d.route_length ** 2)
    else:
        out = np.zeros_like(xs)
    return _like(out, x)


def cumulative(d: DemandDistribution, x: Number) -> Number:
    """F(x): demand originating in [0, x], pax/h."""
    xs = _positions(d, x)
    lam, length = d.total_demand, d.route_length
    if d.kind == DemandKind.UNIFORM:
        out = lam * xs / length
    elif d.kind == DemandKind.TRIANGULAR:
        out = lam * (xs / length) ** 2
    else:
        mass, width = np.asarray(d.bin_mass), d.bin_width
        edges_cum = _edge_cumulative(mass)
        i = _bin_index(d, xs)
        out = edges_cum[i] + mass[i] * (xs - i * width) / width
    return _like(out, x)


def inverse_cumulative(d: DemandDistribution, q: Number) -> Number:
    """Smallest x with F(x) >= q. Zero-density plateaus resolve to their left edge."""
    qs = np.asarray(q, dtype=float)
    lam, length = d.total_demand, d.route_length
    tol = _REL_TOL * max(lam, 1.0)
    if np.any(np.isnan(qs)) or np.any(qs < -tol) or np.any(qs > lam + tol):
        raise ModelDomainError(f"demand {q} outside [0, {lam}]")
    qs = np.clip(qs, 0.0, lam)
    if lam == 0.0:
        return _like(np.zeros_like(qs), q)

    if d.kind == DemandKind.UNIFORM:
        out = qs * length / lam
    elif d.kind == DemandKind.TRIANGULAR:
        out = length * np.sqrt(qs / lam)
    else:
        mass, width = np.asarray(d.bin_mass), d.bin_width
        edges_cum = _edge_cumulative(mass)
        n = len(mass)
        i = np.minimum(np.searchsorted(edges_cum[1:], qs, side="left"), n - 1)
        m = mass[i]
        frac = np.where(m > 0, (qs - edges_cum[i]) / np.where(m > 0, m, 1.0), 0.0)
        out = (i + np.clip(frac, 0.0, 1.0)) * width
    return _like(np.clip(out, 0.0, length), q)


def partial_riding_integral(d: DemandDistribution, a: Number) -> Number:
    """Integral of F over [0, a], pax-km/h."""
    xs = _positions(d, a)
    lam, length = d.total_demand, d.route_length
    if d.kind == DemandKind.UNIFORM:
        out = lam * xs ** 2 / (2.0 * length)
    elif d.kind == DemandKind.TRIANGULAR:
        out = lam * xs ** 3 / (3.0 * length ** 2)
    else:
        mass, width = np.asarray(d.bin_mass), d.bin_width
        edges_cum = _edge_cumulative(mass)
        whole = np.concatenate(([0.0], np.cumsum(edges_cum[:-1] * width + mass * width / 2.0)))
        i = _bin_index(d, xs)
        rem = xs - i * width
        out = whole[i] + edges_cum[i] * rem + mass[i] * rem ** 2 / (2.0 * width)
    return _like(out, a)


def riding_integral(d: DemandDistribution) -> float:
    """Integral of F over the whole corridor: total passenger-km ridden per hour."""
    return float(partial_riding_integral(d, d.route_length))


def cross_section_from_uniform_width(width: float, walk_speed: float) -> CrossSection:
    """Cross-section statistics for demand spread uniformly across a catchment of `width` km.

    Mean detour is the mean absolute difference of two uniform offsets (W/3); mean access time
    is the mean walk to the axis from a uniform offset in [-W/2, W/2] (W/4 km).
    """
    if walk_speed <= 0:
        raise ModelDomainError(f"walk speed must be positive, got {walk_speed}")
    if width < 0:
        raise ModelDomainError(f"catchment width must be non-negative, got {width}")
    return CrossSection(mean_access_time=width / (4.0 * walk_speed), mean_detour=width / 3.0)


def _check_shape_args(total_demand: float, route_length: float) -> None:
    if route_length <= 0:
        raise ModelDomainError(f"route length must be positive, got {route_length}")
    if total_demand < 0:
        raise ModelDomainError(f"total demand must be non-negative, got {total_demand}")


def _positions(d: DemandDistribution, x: Number) -> np.ndarray:
    xs = np.asarray(x, dtype=float)
    length = d.route_length
    tol = _REL_TOL * length
    if np.any(np.isnan(xs)) or np.any(xs < -tol) or np.any(xs > length + tol):
        raise ModelDomainError(f"position {x} outside [0, {length}]")
    return np.clip(xs, 0.0, length)


def _bin_index(d: DemandDistribution, xs: np.ndarray) -> np.ndarray:
    n = len(d.bin_mass)
    return np.minimum((xs / d.bin_width).astype(int), n - 1)


def _edge_cumulative(mass: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(mass)))


def _like(out: np.ndarray, arg: Number) -> Number:
    return float(out) if np.ndim(arg) == 0 else out
