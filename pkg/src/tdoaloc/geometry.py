"""Local ENU geometry: points, sensor networks, trajectories and obstacles.

All coordinates are meters in a local East-North-Up frame. Geodetic inputs are
mapped into that frame with an equirectangular tangent-plane approximation,
which is adequate for sites a couple of kilometers across.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_SPEED_MPS = 5.0
_COINCIDENT_TOL_M = 1e-6


class Position(NamedTuple):
    """A point in the local ENU frame (meters)."""

    x: float
    y: float
    z: float


def as_point(p) -> np.ndarray:
    """Return ``p`` as a finite float array of shape (3,)."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite components: {arr}")
    return arr


def distance(a, b) -> float:
    """Euclidean distance between two points."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(math.sqrt(float(d @ d)))


@dataclass(frozen=True)
class SensorNetwork:
    """Time-synchronized receivers with a designated TDOA reference.

    Parameters
    ----------
    sensors : sequence of points
        Receiver positions, in the order used for every measurement vector.
    reference_index : int
        Index of the sensor that anchors the range differences.
    names : sequence of str, optional
        Display names; defaults to ``S1..SN``.
    """

    sensors: tuple[Position, ...]
    reference_index: int = 0
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        pts = tuple(Position(*map(float, as_point(s))) for s in self.sensors)
        object.__setattr__(self, "sensors", pts)
        n = len(pts)
        if n < 4:
            raise ValueError("N ≥ 4 required for 3D TDOA")
        if not 0 <= self.reference_index < n:
            raise ValueError(f"reference_index {self.reference_index} out of range for {n} sensors")
        arr = np.asarray(pts)
        for i in range(n):
            for j in range(i + 1, n):
                if np.linalg.norm(arr[i] - arr[j]) <= _COINCIDENT_TOL_M:
                    raise ValueError(f"sensors {i} and {j} are coincident")
        names = tuple(self.names) or tuple(f"S{i + 1}" for i in range(n))
        if len(names) != n:
            raise ValueError("names must match the number of sensors")
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return len(self.sensors)

    @property
    def positions(self) -> np.ndarray:
        """Sensor coordinates as an (N, 3) array."""
        return np.asarray(self.sensors, dtype=float)

    @property
    def others(self) -> list[int]:
        """Non-reference sensor indices, in sensor order."""
        return [i for i in range(self.size) if i != self.reference_index]

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def with_reference(self, reference_index: int) -> SensorNetwork:
        return SensorNetwork(self.sensors, reference_index, self.names)


@dataclass(frozen=True)
class Waypoint:
    label: str
    position: Position
    hover_seconds: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", Position(*map(float, as_point(self.position))))
        if not self.hover_seconds >= 0:
            raise ValueError(f"waypoint {self.label}: hover_seconds must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[Waypoint, ...]
    sample_interval: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if not self.waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")


class TrajectorySample(NamedTuple):
    time: float
    position: Position
    segment: str  # waypoint label while hovering, "A-B" while in transit


def sample_trajectory(traj: Trajectory, speed: float = DEFAULT_SPEED_MPS) -> list[TrajectorySample]:
    """Sample a waypoint trajectory at a fixed interval.

    The vehicle starts at the first waypoint, hovers there for its
    ``hover_seconds``, then flies straight legs at constant ``speed``,
    hovering at each subsequent waypoint as requested.
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    # Timeline of (t_start, t_end, p_start, p_end, label) pieces.
    pieces = []
    t = 0.0
    wps = traj.waypoints
    for k, wp in enumerate(wps):
        p = np.asarray(wp.position)
        if k > 0:
            prev = np.asarray(wps[k - 1].position)
            dt = float(np.linalg.norm(p - prev)) / speed
            if dt > 0:
                pieces.append((t, t + dt, prev, p, f"{wps[k - 1].label}-{wp.label}"))
                t += dt
        if wp.hover_seconds > 0:
            pieces.append((t, t + wp.hover_seconds, p, p, wp.label))
            t += wp.hover_seconds
    if t <= 0:
        raise ValueError("trajectory has zero length and zero hover time")

    n = int(math.floor(t / traj.sample_interval + 1e-9)) + 1
    samples = []
    k = 0
    for j in range(n):
        ts = j * traj.sample_interval
        while k < len(pieces) - 1 and ts > pieces[k][1] + 1e-12:
            k += 1
        t0, t1, p0, p1, label = pieces[k]
        frac = 0.0 if t1 <= t0 else min(max((ts - t0) / (t1 - t0), 0.0), 1.0)
        pos = p0 + frac * (p1 - p0)
        samples.append(TrajectorySample(ts, Position(*map(float, pos)), label))
    return samples


@dataclass(frozen=True)
class Box:
    """Axis-aligned box obstacle (a building)."""

    min: Position
    max: Position

    def __post_init__(self):
        lo, hi = as_point(self.min), as_point(self.max)
        if not np.all(lo < hi):
            raise ValueError("box min must be strictly below max in every component")
        object.__setattr__(self, "min", Position(*map(float, lo)))
        object.__setattr__(self, "max", Position(*map(float, hi)))

    @property
    def top(self) -> float:
        return self.max.z


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder obstacle (a tree stand), from ``base_z`` up to ``base_z + height``."""

    center_xy: tuple[float, float]
    radius: float
    height: float
    base_z: float = 0.0

    def __post_init__(self):
        cx, cy = (float(v) for v in self.center_xy)
        object.__setattr__(self, "center_xy", (cx, cy))
        if not (self.radius > 0 and self.height > 0):
            raise ValueError("cylinder radius and height must be positive")
        if not all(map(math.isfinite, (cx, cy, self.radius, self.height, self.base_z))):
            raise ValueError("cylinder parameters must be finite")

    @property
    def top(self) -> float:
        return self.base_z + self.height


Obstacle = Box | Cylinder


def geodetic_to_enu(lat_deg, lon_deg, alt_m, origin: Sequence[float]) -> np.ndarray:
    """Map geodetic coordinates to local ENU meters around ``origin = (lat, lon, alt)``.

    Accepts scalars or arrays; returns an array with a trailing axis of size 3.
    """
    lat0, lon0, alt0 = origin
    lat = np.asarray(lat_deg, dtype=float)
    lon = np.asarray(lon_deg, dtype=float)
    alt = np.asarray(alt_m, dtype=float)
    east = np.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    north = np.radians(lat - lat0) * EARTH_RADIUS_M
    return np.stack([east, north, alt - alt0], axis=-1)


def enu_to_geodetic(points, origin: Sequence[float]) -> np.ndarray:
    """Inverse of :func:`geodetic_to_enu`; returns (..., 3) of lat, lon, alt."""
    lat0, lon0, alt0 = origin
    pts = np.asarray(points, dtype=float)
    lat = lat0 + np.degrees(pts[..., 1] / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(pts[..., 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return np.stack([lat, lon, pts[..., 2] + alt0], axis=-1)
