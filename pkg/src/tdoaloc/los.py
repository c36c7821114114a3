"""Occlusion-only LOS/NLOS classification of UAV-sensor links.

A link is NLOS when the straight segment between its ends passes through an
obstacle's interior for more than ``tol`` meters. Segments that only touch a
face, edge or the curved surface are LOS, so a sensor mounted on a roof is not
blocked by its own building.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from tdoaloc.geometry import Box, Cylinder, SensorNetwork

TOL_M = 1e-9


def _clip_slab(p0: float, p1: float, lo: float, hi: float, t0: float, t1: float):
    dp = p1 - p0
    if abs(dp) < 1e-15:
        # parallel to the slab: judged on both endpoints so (a, b) and (b, a) agree
        if min(p0, p1) <= lo or max(p0, p1) >= hi:
            return 1.0, 0.0
        return t0, t1
    ta, tb = (lo - p0) / dp, (hi - p0) / dp
    if ta > tb:
        ta, tb = tb, ta
    return max(t0, ta), min(t1, tb)


def _box_interval(a: np.ndarray, b: np.ndarray, box: Box):
    t0, t1 = 0.0, 1.0
    for k in range(3):
        t0, t1 = _clip_slab(a[k], b[k], box.min[k], box.max[k], t0, t1)
        if t1 <= t0:
            break
    return t0, t1


def _cylinder_interval(a: np.ndarray, b: np.ndarray, cyl: Cylinder):
    t0, t1 = _clip_slab(a[2], b[2], cyl.base_z, cyl.top, 0.0, 1.0)
    if t1 <= t0:
        return t0, t1
    d = b - a
    px, py = a[0] - cyl.center_xy[0], a[1] - cyl.center_xy[1]
    qa = d[0] ** 2 + d[1] ** 2
    qb = 2.0 * (px * d[0] + py * d[1])
    qc = px * px + py * py - cyl.radius**2
    if qa < 1e-18:
        qc_b = (b[0] - cyl.center_xy[0]) ** 2 + (b[1] - cyl.center_xy[1]) ** 2 - cyl.radius**2
        return (t0, t1) if max(qc, qc_b) < 0 else (1.0, 0.0)
    disc = qb * qb - 4.0 * qa * qc
    if disc <= 0:
        return 1.0, 0.0
    sq = math.sqrt(disc)
    return max(t0, (-qb - sq) / (2.0 * qa)), min(t1, (-qb + sq) / (2.0 * qa))


def segment_blocked(a, b, obs: Box | Cylinder, tol: float = TOL_M) -> bool:
    """True iff the open segment (a, b) runs through the obstacle's interior."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length == 0:
        raise ValueError("segment endpoints coincide")
    if isinstance(obs, Box):
        t0, t1 = _box_interval(a, b, obs)
    elif isinstance(obs, Cylinder):
        t0, t1 = _cylinder_interval(a, b, obs)
    else:
        raise TypeError(f"unsupported obstacle {type(obs).__name__}")
    return (t1 - t0) * length > tol


def classify(net: SensorNetwork, x, obstacles: Iterable[Box | Cylinder]) -> tuple[bool, ...]:
    """LOS indicator per sensor: True when no obstacle blocks the link to ``x``."""
    obstacles = list(obstacles)
    x = np.asarray(x, dtype=float)
    return tuple(not any(segment_blocked(x, s, o) for o in obstacles) for s in net.positions)


def los_count(s: Iterable[bool]) -> int:
    return sum(bool(v) for v in s)
