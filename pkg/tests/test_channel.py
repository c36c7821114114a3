import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdoaloc.channel import (
    SPEED_OF_LIGHT,
    RadioConfig,
    link_budget,
    noise_power,
    range_sigma,
    range_sigmas,
    received_power,
    received_power_dbm,
    toa_sigma,
    watts_to_dbm,
)

DEFAULTS = RadioConfig(bandwidth_hz=5e6)
EQ2_CONST = 1.0 / (2.0 * math.sqrt(2.0) * math.pi)


def test_defaults():
    assert DEFAULTS.carrier_hz == 3.32e9
    assert DEFAULTS.tx_power_dbm == 30.67
    assert DEFAULTS.temperature_k == 304.3
    assert DEFAULTS.effective_bandwidth_hz == DEFAULTS.bandwidth_hz
    assert DEFAULTS.tx_gain_linear == 1.0 and DEFAULTS.rx_gain_linear == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        RadioConfig(bandwidth_hz=1e6, effective_bandwidth_hz=2e6)
    with pytest.raises(ValueError):
        RadioConfig(bandwidth_hz=-1)
    with pytest.raises(ValueError):
        RadioConfig(bandwidth_hz=1e9, carrier_hz=2e9)
    with pytest.raises(ValueError):
        RadioConfig(rx_gain_linear=(1.0, 0.0))


def test_unit_path_loss_distance():
    cfg = RadioConfig(tx_power_dbm=30.0)
    d = cfg.wavelength_m / (4 * math.pi)
    assert received_power(cfg, d) == pytest.approx(1.0, rel=1e-12)


def test_received_power_at_1km():
    p = received_power(DEFAULTS, 1000.0)
    assert p == pytest.approx(6.03e-11, rel=2e-3)
    assert watts_to_dbm(p) == pytest.approx(-72.2, abs=0.01)
    # textbook dB form with the rounded -147.55 dB constant
    fspl = 20 * math.log10(1000) + 20 * math.log10(3.32e9) - 147.55
    assert watts_to_dbm(p) == pytest.approx(30.67 - fspl, abs=0.005)


@given(st.floats(1.0, 1e5), st.floats(-10, 50), st.floats(1e8, 6e9))
def test_db_and_linear_forms_agree(d, ptx, f):
    cfg = RadioConfig(tx_power_dbm=ptx, carrier_hz=f, bandwidth_hz=1e6)
    lin = received_power(cfg, d)
    db = 10 ** ((received_power_dbm(cfg, d) - 30) / 10)
    assert db == pytest.approx(lin, rel=1e-9)


def test_inverse_square():
    for d in (10.0, 333.0, 5000.0):
        assert received_power(DEFAULTS, 2 * d) == pytest.approx(received_power(DEFAULTS, d) / 4, rel=1e-14)


def test_received_power_domain():
    with pytest.raises(ValueError, match="colocated"):
        received_power(DEFAULTS, 0.0)


def test_noise_power():
    assert noise_power(RadioConfig(bandwidth_hz=5e6, temperature_k=304.3)) == pytest.approx(2.0997e-14, rel=1e-3)
    assert watts_to_dbm(noise_power(DEFAULTS)) == pytest.approx(-106.78, abs=0.01)
    assert noise_power(RadioConfig(bandwidth_hz=2e6)) == 2 * noise_power(RadioConfig(bandwidth_hz=1e6))
    assert noise_power(RadioConfig(temperature_k=0.0)) == 0.0


def test_toa_sigma_examples():
    cfg = RadioConfig(bandwidth_hz=1.0, effective_bandwidth_hz=1.0, carrier_hz=1e3)
    assert toa_sigma(cfg, 1.0) == pytest.approx(0.11254, abs=1e-5)
    assert toa_sigma(cfg, 4.0) == pytest.approx(toa_sigma(cfg, 1.0) / 2, rel=1e-15)
    snr = received_power(DEFAULTS, 1000.0) / noise_power(DEFAULTS)
    assert toa_sigma(DEFAULTS, snr) == pytest.approx(4.2e-10, rel=5e-3)
    with pytest.raises(ValueError):
        toa_sigma(DEFAULTS, 0.0)
    with pytest.raises(ValueError):
        toa_sigma(DEFAULTS, -1.0)


@given(st.floats(1e-6, 1e12), st.floats(1e3, 1e8))
def test_eq2_identity(snr, beta):
    cfg = RadioConfig(bandwidth_hz=beta, carrier_hz=1e3 * beta)
    s = toa_sigma(cfg, snr)
    assert s * beta * math.sqrt(snr) == pytest.approx(EQ2_CONST, rel=1e-12)


def test_range_sigma():
    assert range_sigma(DEFAULTS, 1000.0) == pytest.approx(0.126, abs=5e-4)
    ds = [50.0, 200.0, 1000.0, 4000.0]
    vals = [range_sigma(DEFAULTS, d) for d in ds]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    for d in ds:
        assert range_sigma(DEFAULTS, 2 * d) / range_sigma(DEFAULTS, d) == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_allclose(range_sigmas(DEFAULTS, ds), vals, rtol=1e-14)
    assert range_sigma(DEFAULTS, 1000.0) == pytest.approx(
        SPEED_OF_LIGHT * toa_sigma(DEFAULTS, received_power(DEFAULTS, 1000.0) / noise_power(DEFAULTS)), rel=1e-14
    )


def test_sigma_scales_with_inverse_sqrt_bandwidth():
    base = range_sigma(RadioConfig(bandwidth_hz=1.25e6), 700.0)
    for bw in (2.5e6, 5e6):
        ratio = range_sigma(RadioConfig(bandwidth_hz=bw), 700.0) / base
        assert ratio == pytest.approx(math.sqrt(1.25e6 / bw), rel=1e-12)


def test_link_budget_per_sensor_gains():
    cfg = RadioConfig(rx_gain_linear=(1.0, 2.0, 4.0, 1.0))
    lb = link_budget(cfg, [100.0, 100.0, 100.0, 200.0])
    assert lb.received_power_w[1] == pytest.approx(2 * lb.received_power_w[0])
    assert lb.received_power_w[3] == pytest.approx(lb.received_power_w[0] / 4)
    np.testing.assert_allclose(lb.snr_linear, lb.received_power_w / lb.noise_power_w)
    s = range_sigmas(cfg, [100.0, 100.0, 100.0, 200.0])
    assert s[2] == pytest.approx(s[0] / 2)
