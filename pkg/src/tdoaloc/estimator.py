"""Maximum-likelihood TDOA position fix by Levenberg-Marquardt.

The objective is the Mahalanobis residual ``(m - mu(x))^T Q^{-1} (m - mu(x))``
with ``Q`` the measurement's covariance. Several starts around the sensor
centroid are tried and the best local minimum is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from tdoaloc.geometry import Position, SensorNetwork, distance
from tdoaloc.tdoa import TdoaMeasurement

OUTLIER_THRESHOLD_M = 200.0
DEFAULT_INIT_ALTITUDE_M = 40.0
RESTART_STD_M = (100.0, 100.0, 20.0)
SEARCH_RADIUS_M = 2_000.0

_STEP_TOL_M = 1e-6
_MAX_ITER = 100
_COND_CAP = 1e12
_COST_TIE = 1e-9
_GEO_RATIO = 0.75
_POLISH_ITER = 5
_POLISH_TOL_M = 1e-10
_EYE3 = np.eye(3)


@dataclass(frozen=True)
class EstimateResult:
    position: Position
    iterations: int
    converged: bool
    residual_norm: float
    flagged_outlier: bool = False
    failure_reason: str | None = None
    cost: float = math.nan
    cost_history: tuple[float, ...] = field(default=(), repr=False)


def flag_outlier(est, truth, threshold_m: float = OUTLIER_THRESHOLD_M) -> bool:
    """True when the position error strictly exceeds ``threshold_m``."""
    return distance(est, truth) > threshold_m


def solve_lm(
    sensors: np.ndarray,
    reference_index: int,
    rdiff_m: np.ndarray,
    covariance: np.ndarray,
    x0,
    max_iter: int = _MAX_ITER,
    step_tol: float = _STEP_TOL_M,
) -> EstimateResult:
    """Single-start Levenberg-Marquardt on the whitened range-difference residual.

    The damping term is ``lam * mean(diag(J^T W J)) * I``; ``lam`` starts at
    1e-3 and is divided by 10 on every accepted step and multiplied by 10 on
    every rejected one. Each step carries a geodesic-acceleration correction
    so it bends along the curved valley of the cost; steps whose correction
    exceeds 0.75/2 of the first-order step are rejected. Stops once a
    proposed step is shorter than ``step_tol`` meters or after ``max_iter``
    proposals. The fix is then refined by a few Newton steps on the full
    Hessian, which also counts as convergence once a Newton step is shorter
    than ``step_tol``; ``cost_history`` covers the LM iterates only.
    """
    others = [i for i in range(len(sensors)) if i != reference_index]
    chol = np.linalg.cholesky(covariance)
    whiten = np.linalg.inv(chol)
    m_w = whiten @ rdiff_m

    def full_hessian(r_w, j_w, d, u):
        """Hessian of half the cost: J^T J minus the residual-weighted model curvature."""
        hd = (_EYE3 - u[:, :, None] * u[:, None, :]) / d[:, None, None]
        hf = np.einsum("ka,aij->kij", whiten, hd[reference_index][None] - hd[others])
        return j_w.T @ j_w - np.einsum("k,kij->ij", r_w, hf)

    def model(x):
        diff = x - sensors
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if np.any(d <= 1e-9):
            return None, None, math.inf, d, None
        u = diff / d[:, None]
        r_w = m_w - whiten @ (d[reference_index] - d[others])
        j_w = whiten @ (u[reference_index] - u[others])
        return r_w, j_w, float(r_w @ r_w), d, u

    x = np.asarray(x0, dtype=float).copy()
    r_w, j_w, cost, d, u = model(x)
    if not math.isfinite(cost):
        return _result(x, 0, False, "divergence: start point coincides with a sensor", rdiff_m, sensors, reference_index, others, cost, ())
    lam = 1e-3
    history = [cost]
    converged = False
    reason = None
    it = 0
    while it < max_iter:
        it += 1
        a = j_w.T @ j_w
        g = j_w.T @ r_w
        # isotropic damping scaled by the mean curvature; diagonal (Marquardt)
        # scaling crawls along the narrow hyperbolic valleys of this cost
        m = a + lam * max(np.trace(a) / 3.0, 1e-300) * _EYE3
        try:
            vel = np.linalg.solve(m, g)
            # geodesic acceleration: second directional derivative of each
            # range along vel, d'' = (|v|^2 - (u.v)^2) / d
            uv = u @ vel
            dd = (vel @ vel - uv * uv) / d
            acc = np.linalg.solve(m, -(j_w.T @ (whiten @ (dd[reference_index] - dd[others]))))
        except np.linalg.LinAlgError:
            reason = "rank-deficient normal equations"
            break
        step = vel + 0.5 * acc
        if not np.all(np.isfinite(step)):
            reason = "divergence: non-finite step"
            break
        step_norm = float(np.sqrt(step @ step))
        accepted = False
        if 2.0 * np.linalg.norm(acc) <= _GEO_RATIO * np.linalg.norm(vel):
            cand = x + step
            r_c, j_c, cost_c, d_c, u_c = model(cand)
            if cost_c <= cost:
                x, r_w, j_w, cost, d, u = cand, r_c, j_c, cost_c, d_c, u_c
                history.append(cost)
                accepted = True
        lam = max(lam / 10.0, 1e-12) if accepted else lam * 10.0
        if step_norm < step_tol:
            converged = True
            break
        if lam > 1e16:
            # no descent direction left at this point: stationary to machine precision
            converged = True
            break
    if not math.isfinite(cost) or not np.all(np.isfinite(x)):
        return _result(x, it, False, "divergence: non-finite residual", rdiff_m, sensors, reference_index, others,
                       cost, tuple(history))
    if reason is None:
        # Newton polish on the full Hessian. Near a fold minimum (see below)
        # LM crawls and stops micrometers short along the flat direction, or
        # runs out of iterations there; the cost is flat below its own rounding
        # noise, so steps are judged on the gradient. Not part of cost_history.
        h = full_hessian(r_w, j_w, d, u)
        grad = float(np.linalg.norm(j_w.T @ r_w))
        settled = False
        for _ in range(_POLISH_ITER):
            if np.linalg.eigvalsh(h)[0] <= 0:
                break
            delta = np.linalg.solve(h, j_w.T @ r_w)
            r_c, j_c, cost_c, d_c, u_c = model(x + delta)
            if not cost_c <= cost + _COST_TIE * max(1.0, cost):
                break
            grad_c = float(np.linalg.norm(j_c.T @ r_c))
            if not grad_c < grad:
                settled = float(np.sqrt(delta @ delta)) < step_tol
                break
            x, r_w, j_w, cost, d, u, grad = x + delta, r_c, j_c, cost_c, d_c, u_c, grad_c
            if float(np.sqrt(delta @ delta)) < step_tol:
                settled = True
            if float(np.sqrt(delta @ delta)) < _POLISH_TOL_M:
                break
            h = full_hessian(r_w, j_w, d, u)
        converged = converged or settled
    if converged:
        # judge degeneracy on the full Hessian of the cost. J^T W J alone is
        # singular on the fold where the two roots merge, which is where noisy
        # data outside the feasible set puts an isolated, perfectly usable
        # minimum; a true degeneracy (a continuum of minimizers) stays flat
        # once the residual-curvature term is added.
        w = np.linalg.eigvalsh(full_hessian(r_w, j_w, d, u))
        if w[0] <= 0 or w[-1] / w[0] > _COND_CAP:
            converged, reason = False, "rank-deficient normal equations"
    elif reason is None:
        reason = f"no convergence within {max_iter} iterations"
    return _result(x, it, converged, reason, rdiff_m, sensors, reference_index, others, cost, tuple(history))


def _result(x, it, converged, reason, rdiff_m, sensors, ref, others, cost, history):
    if np.all(np.isfinite(x)):
        d = np.linalg.norm(x - sensors, axis=1)
        resid = float(np.linalg.norm(rdiff_m - (d[ref] - d[others])))
    else:
        resid = math.nan
    return EstimateResult(
        position=Position(*map(float, x)),
        iterations=it,
        converged=converged,
        residual_norm=resid,
        failure_reason=reason,
        cost=cost,
        cost_history=history,
    )


def starting_points(
    net: SensorNetwork,
    init_altitude_m: float = DEFAULT_INIT_ALTITUDE_M,
    restarts: int = 3,
    seed: int = 0,
) -> list[np.ndarray]:
    """Sensor centroid lifted to ``init_altitude_m`` plus seeded perturbations of it."""
    c = net.centroid()
    c[2] = init_altitude_m
    rng = np.random.default_rng(seed)
    return [c] + [c + rng.standard_normal(3) * RESTART_STD_M for _ in range(restarts)]


def estimate(
    net: SensorNetwork,
    meas: TdoaMeasurement,
    init=None,
    *,
    truth=None,
    outlier_threshold_m: float = OUTLIER_THRESHOLD_M,
    init_altitude_m: float = DEFAULT_INIT_ALTITUDE_M,
    restarts: int = 3,
    multistart_seed: int = 0,
    ground_z: float = 0.0,
    search_radius_m: float = SEARCH_RADIUS_M,
) -> EstimateResult:
    """ML position estimate from one TDOA measurement.

    With ``init`` given, a single LM run starts there. Otherwise the centroid
    start and ``restarts`` seeded perturbations are all run. If the winner
    lies below ``ground_z``, one more run starts from its reflection through
    the mean sensor height. Converged
    candidates win over failed ones, candidates at or above ``ground_z`` win
    over subterranean mirror solutions, and the lowest cost breaks ties.
    Costs within 1e-9 of each other count as equal (with four sensors both
    roots of the minimal system fit exactly); the candidate nearest the first
    start point then wins, which keeps the choice independent of rounding and
    of the reference sensor.

    Fixes farther than ``search_radius_m`` from the sensor centroid are
    reported as diverged: on inconsistent (NLOS-biased) data LM can slide out
    along a hyperboloid asymptote while its steps shrink.

    ``truth``, when supplied, sets ``flagged_outlier``.
    """
    if net.size != meas.sensor_count:
        raise ValueError("measurement and network disagree on sensor count")
    if net.size < 4:
        raise ValueError("N ≥ 4 required for 3D TDOA")
    sensors = net.positions
    if init is not None:
        starts = [np.asarray(init, dtype=float)]
    else:
        starts = starting_points(net, init_altitude_m, restarts, multistart_seed)
    try:
        np.linalg.cholesky(meas.covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("measurement covariance is not positive definite") from exc

    center = net.centroid()

    def run_from(start) -> EstimateResult:
        res = solve_lm(sensors, meas.reference_index, meas.rdiff_m, meas.covariance, start)
        if res.converged and not distance(res.position, center) <= search_radius_m:
            res = replace(res, converged=False, failure_reason="divergence: estimate left the search radius")
        return res

    cands = [run_from(s) for s in starts]

    def pick(cands: list[EstimateResult]) -> EstimateResult:
        def cls(res):
            return (not res.converged, res.position.z < ground_z)

        top = min(cls(c) for c in cands)
        pool = [c for c in cands if cls(c) == top]
        costs = [c.cost if math.isfinite(c.cost) else math.inf for c in pool]
        cmin = min(costs)
        if not math.isfinite(cmin):
            return pool[0]
        tied = [c for c, v in zip(pool, costs) if v <= cmin + _COST_TIE * max(1.0, cmin)]
        return min(tied, key=lambda c: distance(c.position, starts[0]) if np.all(np.isfinite(c.position)) else math.inf)

    best = pick(cands)
    if best.position.z < ground_z and np.all(np.isfinite(best.position)):
        # near-coplanar sensors leave a mirror solution under the sensor plane;
        # restart from the reflection of the subterranean fix
        mirror = np.array(best.position)
        mirror[2] = 2.0 * sensors[:, 2].mean() - mirror[2]
        cands.append(run_from(mirror))
        best = pick(cands)
    if truth is not None and np.all(np.isfinite(best.position)):
        flagged = flag_outlier(best.position, truth, outlier_threshold_m)
        best = replace(best, flagged_outlier=flagged)
    return best
