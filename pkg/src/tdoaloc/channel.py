"""Free-space link budget and the TOA noise it implies.

Everything downstream works in the range domain: a TOA standard deviation in
seconds is turned into meters by multiplying with the speed of light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.38e-23

# 20*log10(4*pi/c): FSPL(dB) = 20 log10(d) + 20 log10(f) + this
FSPL_CONSTANT_DB = 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w):
    return 10.0 * np.log10(w) + 30.0


@dataclass(frozen=True)
class RadioConfig:
    """Transmitter/receiver parameters of one flight.

    ``effective_bandwidth_hz`` defaults to ``bandwidth_hz``. ``rx_gain_linear``
    is either one gain for all sensors or a per-sensor tuple.
    """

    bandwidth_hz: float = 5e6
    effective_bandwidth_hz: float | None = None
    carrier_hz: float = 3.32e9
    tx_power_dbm: float = 30.67
    tx_gain_linear: float = 1.0
    rx_gain_linear: float | tuple[float, ...] = 1.0
    temperature_k: float = 304.3

    def __post_init__(self):
        if self.effective_bandwidth_hz is None:
            object.__setattr__(self, "effective_bandwidth_hz", self.bandwidth_hz)
        if not isinstance(self.rx_gain_linear, (int, float)):
            object.__setattr__(self, "rx_gain_linear", tuple(float(g) for g in self.rx_gain_linear))
        gains = np.atleast_1d(np.asarray(self.rx_gain_linear, dtype=float))
        for name in ("bandwidth_hz", "effective_bandwidth_hz", "carrier_hz", "tx_gain_linear"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
            raise ValueError("rx_gain_linear must be positive")
        if not (math.isfinite(self.temperature_k) and self.temperature_k >= 0):
            raise ValueError("temperature_k must be nonnegative")
        if self.effective_bandwidth_hz > self.bandwidth_hz:
            raise ValueError("effective_bandwidth_hz cannot exceed bandwidth_hz")
        if self.carrier_hz < 10 * self.bandwidth_hz:
            raise ValueError("carrier_hz must be much larger than bandwidth_hz")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def rx_gains(self, n: int) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.rx_gain_linear, dtype=float))
        if g.size == 1:
            return np.full(n, float(g[0]))
        if g.size != n:
            raise ValueError(f"rx_gain_linear has {g.size} entries for {n} sensors")
        return g


@dataclass(frozen=True)
class LinkBudget:
    received_power_w: np.ndarray
    noise_power_w: float
    snr_linear: np.ndarray


def received_power(cfg: RadioConfig, d, rx_gain: float | None = None):
    """Free-space received power in watts at distance ``d`` (scalar or array)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive (transmitter colocated with sensor)")
    if rx_gain is None:
        g = np.atleast_1d(np.asarray(cfg.rx_gain_linear, dtype=float))
        if g.size != 1:
            raise ValueError("per-sensor rx gains need an explicit rx_gain")
        rx_gain = float(g[0])
    lam = cfg.wavelength_m
    p = dbm_to_watts(cfg.tx_power_dbm) * cfg.tx_gain_linear * rx_gain * lam**2 / (4.0 * math.pi * d) ** 2
    return float(p) if p.ndim == 0 else p


def received_power_dbm(cfg: RadioConfig, d, rx_gain: float = 1.0):
    """Same quantity as :func:`received_power`, computed in the dB domain."""
    fspl = 20.0 * np.log10(np.asarray(d, dtype=float)) + 20.0 * math.log10(cfg.carrier_hz) + FSPL_CONSTANT_DB
    return cfg.tx_power_dbm + 10.0 * math.log10(cfg.tx_gain_linear) + 10.0 * math.log10(rx_gain) - fspl


def noise_power(cfg: RadioConfig) -> float:
    """Thermal noise power kTB in watts."""
    return BOLTZMANN * cfg.temperature_k * cfg.bandwidth_hz


def toa_sigma(cfg: RadioConfig, snr_linear):
    """TOA standard deviation (s) for the given SNR and the config's effective bandwidth."""
    snr = np.asarray(snr_linear, dtype=float)
    if np.any(~(snr > 0)):
        raise ValueError("SNR must be positive")
    s = 1.0 / (2.0 * math.sqrt(2.0) * math.pi * np.sqrt(snr) * cfg.effective_bandwidth_hz)
    return float(s) if s.ndim == 0 else s


def link_budget(cfg: RadioConfig, distances: Sequence[float]) -> LinkBudget:
    """Per-sensor received power and SNR for a vector of UAV-sensor distances."""
    d = np.asarray(distances, dtype=float)
    pr = np.array([received_power(cfg, di, g) for di, g in zip(d, cfg.rx_gains(d.size))])
    pn = noise_power(cfg)
    with np.errstate(divide="ignore"):
        snr = pr / pn if pn > 0 else np.full_like(pr, np.inf)
    return LinkBudget(pr, pn, snr)


def range_sigma(cfg: RadioConfig, d, rx_gain: float | None = None):
    """Range-domain noise std (m) at distance ``d``: c times the TOA sigma."""
    pn = noise_power(cfg)
    pr = received_power(cfg, d, rx_gain)
    snr = np.asarray(pr) / pn if pn > 0 else np.inf * np.ones_like(np.asarray(pr))
    return SPEED_OF_LIGHT * toa_sigma(cfg, snr)


def range_sigmas(cfg: RadioConfig, distances) -> np.ndarray:
    """Per-sensor range noise std for a vector of distances, honoring per-sensor gains."""
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive (transmitter colocated with sensor)")
    pr = (
        dbm_to_watts(cfg.tx_power_dbm) * cfg.tx_gain_linear * cfg.rx_gains(d.size)
        * cfg.wavelength_m**2 / (4.0 * math.pi * d) ** 2
    )
    pn = noise_power(cfg)
    snr = pr / pn if pn > 0 else np.full_like(pr, np.inf)
    return SPEED_OF_LIGHT * toa_sigma(cfg, snr)
