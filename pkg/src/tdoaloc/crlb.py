"""Fisher information and the LOS Cramér-Rao bound on 3D TDOA position error."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, qr, solve_triangular

from tdoaloc.channel import RadioConfig, range_sigmas
from tdoaloc.geometry import SensorNetwork
from tdoaloc.tdoa import covariance_matrix, distances

DEFAULT_CONDITION_CAP = 1e12


class GeometryDegenerateError(ValueError):
    """The FIM is singular or too ill-conditioned to invert.

    ``direction`` is the unit eigenvector of the smallest FIM eigenvalue,
    i.e. the position direction the sensors cannot resolve.
    """

    def __init__(self, message: str, direction: np.ndarray | None = None, condition_number: float = math.inf):
        super().__init__(message)
        self.direction = direction
        self.condition_number = condition_number


@dataclass(frozen=True)
class CrlbResult:
    fim: np.ndarray
    fim_inverse: np.ndarray
    crlb_trace_m2: float
    rmse_bound_m: float
    condition_number: float


def jacobian(net: SensorNetwork, x) -> np.ndarray:
    """Derivative of the range-difference mean vector w.r.t. position, shape (N-1, 3)."""
    x = np.asarray(x, dtype=float)
    d = distances(net, x)
    units = (x - net.positions) / d[:, None]
    return units[net.reference_index] - units[net.others]


def whitened_jacobian(net: SensorNetwork, x, cfg: RadioConfig) -> np.ndarray:
    """``L^{-1} J`` with ``Q = L L^T`` built from the link-budget noise at ``x``.

    Its Gram matrix is the FIM.
    """
    j = jacobian(net, x)
    q = covariance_matrix(range_sigmas(cfg, distances(net, x)), net.reference_index)
    try:
        low = cholesky(q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"TDOA covariance is not positive definite: {exc}") from exc
    return solve_triangular(low, j, lower=True)


def fim(net: SensorNetwork, x, cfg: RadioConfig) -> np.ndarray:
    """J^T Q^{-1} J with Q built from the link-budget noise at ``x``."""
    a = whitened_jacobian(net, x, cfg)
    f = a.T @ a
    return 0.5 * (f + f.T)


def crlb(net: SensorNetwork, x, cfg: RadioConfig, condition_cap: float = DEFAULT_CONDITION_CAP) -> CrlbResult:
    """Bound on position RMSE at ``x``.

    The FIM is factored as ``R^T R`` from a QR decomposition of the whitened
    Jacobian rather than by forming and factoring ``J^T Q^{-1} J``; this keeps
    the bound accurate to about ``eps * sqrt(cond)`` on poor geometries.

    Raises
    ------
    GeometryDegenerateError
        If the FIM condition number exceeds ``condition_cap``.
    """
    a = whitened_jacobian(net, x, cfg)
    f = a.T @ a
    f = 0.5 * (f + f.T)
    r = qr(a, mode="r")[0][:3]
    _, s, vt = np.linalg.svd(r)
    cond = math.inf if s[-1] <= 0 else float((s[0] / s[-1]) ** 2)
    if not cond < condition_cap:
        raise GeometryDegenerateError(
            f"geometry-degenerate: FIM condition number {cond:.3g} exceeds {condition_cap:.3g}; "
            f"unresolved direction {np.round(vt[-1], 6).tolist()}",
            direction=vt[-1],
            condition_number=cond,
        )
    r_inv = solve_triangular(r, np.eye(3))
    inv = r_inv @ r_inv.T
    tr = float(np.sum(r_inv * r_inv))
    return CrlbResult(f, inv, tr, math.sqrt(tr), cond)


@dataclass(frozen=True)
class CrlbGrid:
    """RMSE bound sampled on a regular grid.

    ``points`` has shape (M, 3) in row-major order: x varies slowest, z fastest.
    ``rmse_bound_m`` is ``inf`` where the geometry is degenerate.
    """

    points: np.ndarray
    rmse_bound_m: np.ndarray
    shape: tuple[int, int, int]

    @property
    def degenerate(self) -> np.ndarray:
        return ~np.isfinite(self.rmse_bound_m)

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z", "rmse_bound_m"])
        for p, r in zip(self.points, self.rmse_bound_m):
            w.writerow([_fmt(p[0]), _fmt(p[1]), _fmt(p[2]), "inf" if not math.isfinite(r) else _fmt(r)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def read_grid_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse :meth:`CrlbGrid.to_csv` output back into (points, rmse_bound_m)."""
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    body = rows[1:]
    pts = np.array([[float(v) for v in r[:3]] for r in body]).reshape(-1, 3)
    vals = np.array([float(r[3]) for r in body])
    return pts, vals


def grid_axes(region, resolution_m: float) -> list[np.ndarray]:
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    if not resolution_m > 0:
        raise ValueError("resolution must be positive")
    if np.any(hi < lo):
        raise ValueError("region max must not be below min")
    axes = []
    for a, b in zip(lo, hi):
        n = int(math.floor((b - a) / resolution_m + 1e-9)) + 1
        axes.append(a + resolution_m * np.arange(n))
    return axes


def crlb_grid(
    net: SensorNetwork,
    cfg: RadioConfig,
    region,
    resolution_m: float,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> CrlbGrid:
    """Evaluate the RMSE bound on every grid point of ``region = (min_xyz, max_xyz)``.

    Degenerate points (singular FIM, or on top of a sensor) are recorded as ``inf``.
    """
    ax, ay, az = grid_axes(region, resolution_m)
    pts = np.array([(x, y, z) for x in ax for y in ay for z in az], dtype=float)
    vals = np.empty(len(pts))
    for k, p in enumerate(pts):
        try:
            vals[k] = crlb(net, p, cfg, condition_cap).rmse_bound_m
        except (GeometryDegenerateError, ValueError, np.linalg.LinAlgError):
            vals[k] = math.inf
    return CrlbGrid(pts, vals, (len(ax), len(ay), len(az)))
