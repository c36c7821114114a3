"""Range-difference (TDOA) measurement model with optional NLOS bias.

Measurements are kept in meters: entry ``j`` is ``c * (t_r - t_i)`` for the
``j``-th non-reference sensor ``i``. The reported covariance is always the
LOS noise covariance; NLOS bias enters the data but is not modeled in it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from tdoaloc.channel import RadioConfig, range_sigmas
from tdoaloc.geometry import SensorNetwork

_COINCIDENT_TOL_M = 1e-9

BIAS_KINDS = ("none", "gaussian", "exponential", "uniform", "constant")


@dataclass(frozen=True)
class NlosBiasModel:
    """Distribution of the positive range excess on obstructed links.

    The default parameters (gaussian 30/10 m, exponential 30 m, uniform
    0-60 m) are placeholders sized to dominate LOS noise; they are not
    measured values. ``constant`` adds the same ``mean_m`` to every NLOS link.
    """

    kind: str = "none"
    mean_m: float = 30.0
    std_m: float = 10.0
    low_m: float = 0.0
    high_m: float = 60.0

    def __post_init__(self):
        if self.kind not in BIAS_KINDS:
            raise ValueError(f"unknown bias kind {self.kind!r}; expected one of {BIAS_KINDS}")
        for name in ("mean_m", "std_m", "low_m", "high_m"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"bias {name} must be finite")
        if self.kind == "gaussian" and not self.std_m > 0:
            raise ValueError("gaussian bias needs std_m > 0")
        if self.kind == "exponential" and not self.mean_m > 0:
            raise ValueError("exponential bias needs mean_m > 0")
        if self.kind == "uniform" and not 0 <= self.low_m < self.high_m:
            raise ValueError("uniform bias needs 0 <= low_m < high_m")
        if self.kind == "constant" and self.mean_m < 0:
            raise ValueError("constant bias must be nonnegative")

    @classmethod
    def none(cls) -> NlosBiasModel:
        return cls("none")

    @classmethod
    def gaussian(cls, mean_m: float = 30.0, std_m: float = 10.0) -> NlosBiasModel:
        return cls("gaussian", mean_m=mean_m, std_m=std_m)

    @classmethod
    def exponential(cls, mean_m: float = 30.0) -> NlosBiasModel:
        return cls("exponential", mean_m=mean_m)

    @classmethod
    def uniform(cls, low_m: float = 0.0, high_m: float = 60.0) -> NlosBiasModel:
        return cls("uniform", low_m=low_m, high_m=high_m)

    @classmethod
    def constant(cls, value_m: float) -> NlosBiasModel:
        return cls("constant", mean_m=value_m)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` nonnegative biases. Always consumes ``n`` uniforms from ``rng``."""
        u = rng.random(n)
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "constant":
            return np.full(n, self.mean_m)
        if self.kind == "exponential":
            return -self.mean_m * np.log1p(-u)
        if self.kind == "uniform":
            return self.low_m + (self.high_m - self.low_m) * u
        # normal truncated to [0, inf) by inverse CDF
        lo = ndtr(-self.mean_m / self.std_m)
        return np.maximum(self.mean_m + self.std_m * ndtri(lo + (1.0 - lo) * u), 0.0)

    def to_dict(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean_m": self.mean_m, "std_m": self.std_m}
        if self.kind == "uniform":
            return {"kind": "uniform", "low_m": self.low_m, "high_m": self.high_m}
        return {"kind": self.kind, "mean_m": self.mean_m}


@dataclass(frozen=True)
class TdoaMeasurement:
    reference_index: int
    rdiff_m: np.ndarray
    covariance: np.ndarray
    los: tuple[bool, ...]
    epoch: float = 0.0
    sensor_count: int = field(default=0)

    def __post_init__(self):
        rd = np.asarray(self.rdiff_m, dtype=float)
        q = np.asarray(self.covariance, dtype=float)
        n = self.sensor_count or rd.size + 1
        object.__setattr__(self, "rdiff_m", rd)
        object.__setattr__(self, "covariance", q)
        object.__setattr__(self, "los", tuple(bool(s) for s in self.los))
        object.__setattr__(self, "sensor_count", n)
        if rd.shape != (n - 1,) or q.shape != (n - 1, n - 1):
            raise ValueError("measurement vector/covariance shapes do not match sensor count")
        if len(self.los) != n:
            raise ValueError("LOS vector length must equal sensor count")
        if not np.allclose(q, q.T, rtol=1e-12, atol=0.0):
            raise ValueError("covariance is not symmetric")


def distances(net: SensorNetwork, x) -> np.ndarray:
    d = np.linalg.norm(net.positions - np.asarray(x, dtype=float), axis=1)
    if np.any(d <= _COINCIDENT_TOL_M):
        raise ValueError("query point coincides with a sensor")
    return d


def mean_vector(net: SensorNetwork, x) -> np.ndarray:
    """Noise-free range differences ``d_r - d_i`` for the non-reference sensors."""
    d = distances(net, x)
    return d[net.reference_index] - d[net.others]


def covariance_matrix(sigmas_m, reference_index: int) -> np.ndarray:
    """Covariance of range differences sharing one reference sensor."""
    s = np.asarray(sigmas_m, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("all range sigmas must be positive")
    others = [i for i in range(s.size) if i != reference_index]
    var = s**2
    return var[reference_index] + np.diag(var[others])


def synthesize(
    net: SensorNetwork,
    x,
    cfg: RadioConfig,
    bias: NlosBiasModel,
    los,
    rng_seed=None,
    *,
    epoch: float = 0.0,
    noise_scale: float = 1.0,
) -> TdoaMeasurement:
    """Draw one noisy, possibly NLOS-biased TDOA measurement of a transmitter at ``x``.

    ``noise_scale`` multiplies the drawn Gaussian noise only (0 gives the
    noiseless limit); the reported covariance is always the nominal one.
    The random stream does not depend on ``los``, so runs that differ only in
    obstruction pattern share noise draws.
    """
    los = tuple(bool(s) for s in los)
    if len(los) != net.size:
        raise ValueError("LOS vector length must equal sensor count")
    rng = np.random.default_rng(rng_seed)
    d = distances(net, x)
    sig = range_sigmas(cfg, d)
    noise = noise_scale * sig * rng.standard_normal(net.size)
    b = bias.draw(rng, net.size)
    b[np.asarray(los)] = 0.0
    measured = d + b + noise
    r = net.reference_index
    return TdoaMeasurement(
        reference_index=r,
        rdiff_m=measured[r] - measured[net.others],
        covariance=covariance_matrix(sig, r),
        los=los,
        epoch=epoch,
        sensor_count=net.size,
    )


def reanchor(meas: TdoaMeasurement, reference_index: int) -> TdoaMeasurement:
    """Express the same measurement against a different reference sensor."""
    n = meas.sensor_count
    old = [i for i in range(n) if i != meas.reference_index]
    new = [i for i in range(n) if i != reference_index]
    embed = np.zeros((n, n - 1))
    embed[old, range(n - 1)] = 1.0
    # u_i = m_ref - m_i over all sensors (u_ref = 0); new entry is u_i - u_newref
    diff = np.zeros((n - 1, n))
    diff[range(n - 1), new] = 1.0
    diff[:, reference_index] -= 1.0
    t = diff @ embed
    return TdoaMeasurement(
        reference_index=reference_index,
        rdiff_m=t @ meas.rdiff_m,
        covariance=t @ meas.covariance @ t.T,
        los=meas.los,
        epoch=meas.epoch,
        sensor_count=n,
    )
