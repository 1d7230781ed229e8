"""Geodesic and relative-motion primitives.

All distances are meters, speeds knots (converted at 0.514444 m/s per knot),
angles degrees with course 0 = north increasing clockwise. A spherical Earth
with R = 6,371,000 m is used throughout; at the sub-kilometer proximity
scales this package works with, ellipsoidal corrections are noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputError

EARTH_RADIUS_M = 6_371_000.0
KNOTS_TO_MPS = 0.514444
MAX_PATCH_M = 100_000.0


def wrap180(deg):
    """Wrap an angle (scalar or array) to [-180, 180)."""
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


def wrap360(deg):
    """Wrap an angle (scalar or array) to [0, 360)."""
    return np.asarray(deg) % 360.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InputError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InputError(f"lat out of range: {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            raise InputError(f"lon out of range: {self.lon}")


@dataclass(frozen=True)
class LocalVector:
    """Tangent-plane displacement or velocity, meters east / meters north."""

    east: float
    north: float

    def __add__(self, other: "LocalVector") -> "LocalVector":
        return LocalVector(self.east + other.east, self.north + other.north)

    def __sub__(self, other: "LocalVector") -> "LocalVector":
        return LocalVector(self.east - other.east, self.north - other.north)

    def norm(self) -> float:
        return math.hypot(self.east, self.north)


class CpaResult(NamedTuple):
    t_star: float
    min_distance: float


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    s = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def haversine_arrays(lat1_deg, lon1_deg, lat2_deg, lon2_deg) -> np.ndarray:
    """Elementwise great-circle distance (meters) between aligned coordinate arrays."""
    lat1, lon1, lat2, lon2 = (
        np.radians(np.asarray(x, dtype=float)) for x in (lat1_deg, lon1_deg, lat2_deg, lon2_deg)
    )
    s = (
        np.sin((lat2 - lat1) / 2.0) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(s)))


def haversine_matrix(lat_deg: np.ndarray, lon_deg: np.ndarray) -> np.ndarray:
    """Pairwise great-circle distances (meters) for vectors of coordinates."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    s = (
        np.sin(dlat / 2.0) ** 2
        + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(s)))


def to_local(origin: GeoPoint, p: GeoPoint) -> LocalVector:
    """Project a nearby point onto the tangent plane at ``origin``.

    Equirectangular on the sphere: east = R cos(lat0) dlon, north = R dlat.
    Only valid on small patches; inputs farther than 100 km are rejected.
    """
    if haversine_distance(origin, p) >= MAX_PATCH_M:
        raise InputError("patch too large")
    dlat = math.radians(p.lat - origin.lat)
    dlon = math.radians(wrap180(p.lon - origin.lon))
    east = EARTH_RADIUS_M * math.cos(math.radians(origin.lat)) * dlon
    north = EARTH_RADIUS_M * dlat
    return LocalVector(east, north)


def from_local(origin: GeoPoint, v: LocalVector) -> GeoPoint:
    """Inverse of :func:`to_local`. Undefined at the poles (cos lat0 = 0)."""
    cos0 = math.cos(math.radians(origin.lat))
    if cos0 == 0.0:
        raise InputError("local frame degenerate at the pole")
    lat = origin.lat + math.degrees(v.north / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(v.east / (EARTH_RADIUS_M * cos0))
    return GeoPoint(lat, float(wrap180(lon)))


def velocity_vector(sog: float, cog: float) -> LocalVector:
    """Ground velocity in m/s east/north from speed (knots) and course (deg)."""
    if sog < 0:
        raise InputError(f"negative speed: {sog}")
    v = sog * KNOTS_TO_MPS
    rad = math.radians(cog)
    return LocalVector(v * math.sin(rad), v * math.cos(rad))


def cpa(rel_pos: LocalVector, rel_vel: LocalVector, horizon: float) -> CpaResult:
    """Closest point of approach for straight-line relative motion.

    Minimizes |rel_pos + t * rel_vel| over t in [0, horizon]. A zero relative
    velocity pins t at 0.
    """
    if horizon <= 0:
        raise InputError(f"horizon must be positive, got {horizon}")
    w2 = rel_vel.east**2 + rel_vel.north**2
    if w2 == 0.0:
        t_star = 0.0
    else:
        rw = rel_pos.east * rel_vel.east + rel_pos.north * rel_vel.north
        t_star = min(max(-rw / w2, 0.0), horizon)
    d = math.hypot(
        rel_pos.east + t_star * rel_vel.east,
        rel_pos.north + t_star * rel_vel.north,
    )
    return CpaResult(t_star, d)
