"""Geospatial primitives: WGS84 points, circular geofences, great-circle distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

MAX_FENCE_RADIUS_M = 100_000.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 position in decimal degrees."""

    lat: float
    lon: float

    def is_valid(self) -> bool:
        return (
            math.isfinite(self.lat)
            and math.isfinite(self.lon)
            and -90.0 <= self.lat <= 90.0
            and -180.0 <= self.lon <= 180.0
        )


@dataclass(frozen=True)
class Geofence:
    """A circle on the sphere: center plus radius in meters."""

    center: GeoPoint
    radius_m: float

    def is_valid(self) -> bool:
        return (
            self.center.is_valid()
            and math.isfinite(self.radius_m)
            and 0.0 < self.radius_m <= MAX_FENCE_RADIUS_M
        )


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points (haversine, R = 6 371 000 m)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_phi = math.radians(b.lat - a.lat)
    d_lambda = math.radians(b.lon - a.lon)
    h = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lambda / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def inside(p: GeoPoint, fence: Geofence) -> bool:
    """True iff the point lies within the fence (boundary inclusive)."""
    return haversine_m(p, fence.center) <= fence.radius_m


def _to_vec(p: GeoPoint) -> tuple[float, float, float]:
    phi = math.radians(p.lat)
    lam = math.radians(p.lon)
    return (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))


def _from_vec(v: tuple[float, float, float]) -> GeoPoint:
    x, y, z = v
    lat = math.degrees(math.atan2(z, math.sqrt(x * x + y * y)))
    lon = math.degrees(math.atan2(y, x))
    return GeoPoint(lat, lon)


def move_toward(start: GeoPoint, target: GeoPoint, distance_m: float) -> GeoPoint:
    """Advance along the great circle from start toward target by at most distance_m.

    Returns the target itself when it is closer than distance_m. Interpolation is
    spherical (slerp), so the arc length of one step never exceeds distance_m.
    """
    total = haversine_m(start, target)
    if total <= distance_m or total == 0.0:
        return target
    f = distance_m / total
    va = _to_vec(start)
    vb = _to_vec(target)
    dot = max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb))))
    omega = math.acos(dot)
    if omega == 0.0:
        return target
    sa = math.sin((1.0 - f) * omega) / math.sin(omega)
    sb = math.sin(f * omega) / math.sin(omega)
    v = tuple(sa * x + sb * y for x, y in zip(va, vb))
    norm = math.sqrt(sum(c * c for c in v))
    return _from_vec((v[0] / norm, v[1] / norm, v[2] / norm))


def offset_point(origin: GeoPoint, north_m: float, east_m: float) -> GeoPoint:
    """Displace a point by local north/east meters (small-offset approximation).

    Used to lay out reference maps; accurate well below 0.1% for offsets under
    a few kilometers.
    """
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(origin.lat + dlat, origin.lon + dlon)
