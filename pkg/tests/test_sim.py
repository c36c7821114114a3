import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdoaloc.channel import RadioConfig
from tdoaloc.geometry import Cylinder, SensorNetwork, Trajectory, Waypoint
from tdoaloc.sim import PERCENTILES, Scenario, compare, run, summarize
from tdoaloc.tdoa import NlosBiasModel

NET = SensorNetwork([(0, 0, 10), (1000, 0, 12), (1000, 1000, 8), (0, 1000, 15)])
PATH = Trajectory([Waypoint("A", (200, 300, 70)), Waypoint("B", (700, 600, 90), hover_seconds=5)], sample_interval=2.0)


def scenario(**kw):
    base = dict(name="square", net=NET, trajectory=PATH, cfg=RadioConfig(), seed=5)
    base.update(kw)
    return Scenario(**base)


def test_noiseless_run_is_exact():
    rep = run(scenario(noise_scale=0.0))
    assert rep.aggregates.valid_pct == 100.0
    assert rep.aggregates.total_count == len(rep.records) > 50
    assert max(rep.errors) < 1e-6
    assert rep.los_fraction == 1.0


def test_injected_record_set_summary():
    errors = [math.nan] * 69 + [10.0] * 150 + [250.0] * 36
    agg = summarize(errors)
    assert agg.valid_summary == "186 out of 255 (72.9%)"
    assert agg.outlier_count == 36
    assert agg.mean_error_outliers_removed_m == pytest.approx(10.0)
    assert agg.mean_error_m == pytest.approx((150 * 10 + 36 * 250) / 186)


def test_threshold_is_strict():
    agg = summarize([200.0, 100.0, 200.0000001])
    assert agg.outlier_count == 1
    assert agg.mean_error_outliers_removed_m == pytest.approx(150.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.floats(0, 1e4), st.just(math.nan)), min_size=1, max_size=60))
def test_summary_invariants(errors):
    agg = summarize(errors)
    assert agg.valid_count <= agg.total_count
    assert agg.valid_pct == 100.0 * agg.valid_count / agg.total_count
    assert list(agg.error_cdf) == sorted(agg.error_cdf)
    if agg.outlier_count and agg.valid_count > agg.outlier_count:
        assert agg.mean_error_outliers_removed_m <= agg.mean_error_m


def test_bias_degrades_median_error():
    # sensors 1 and 2 sit inside tall enclosures, so their links are always NLOS
    shields = [Cylinder((1000, 0), 20.0, 500.0), Cylinder((1000, 1000), 20.0, 500.0)]
    clean = run(scenario(obstacles=shields))
    biased = run(scenario(obstacles=shields, bias=NlosBiasModel.exponential(30.0)))
    assert all(r.los == (True, False, False, True) for r in clean.records)
    assert biased.median_error() > clean.median_error()


def test_run_is_deterministic():
    scn = scenario(bias=NlosBiasModel.exponential(30.0), obstacles=[Cylinder((500, 500), 200.0, 60.0)])
    assert run(scn).to_json() == run(scn).to_json()
    assert run(replace(scn, seed=6)).to_json() != run(scn).to_json()


def test_records_carry_bound_and_segments():
    rep = run(scenario())
    segs = {r.segment for r in rep.records}
    assert segs == {"A-B", "B"}
    assert all(np.isfinite(r.rmse_bound_m) and r.rmse_bound_m > 0 for r in rep.records)
    assert [r.time_s for r in rep.records] == sorted(r.time_s for r in rep.records)


def test_all_los_bound_holds_statistically():
    trials = 300
    traj = Trajectory([Waypoint("H", (200, 300, 70), hover_seconds=1), Waypoint("K", (206, 308, 70))], sample_interval=1.0)
    rep = run(scenario(trajectory=traj, trials_per_epoch=trials))
    by_epoch = {}
    for r in rep.records:
        by_epoch.setdefault(r.epoch, []).append(r)
    assert len(by_epoch) == 4
    for recs in by_epoch.values():
        assert len(recs) == trials
        mse = np.mean([r.error_m**2 for r in recs])
        assert mse >= recs[0].rmse_bound_m**2 * (1 - 3 / math.sqrt(trials))


def test_compare():
    rep = run(scenario())
    same = compare([rep, rep])
    assert same.column("mean_error_m")[0] == same.column("mean_error_m")[1]
    assert same.names == ("square", "square")
    other = run(scenario(name="narrow", cfg=RadioConfig(bandwidth_hz=1.25e6)))
    table = compare([rep, other])
    text = table.to_text()
    assert "narrow" in text and "p90" in text
    assert set(table.rows[0]["percentiles_m"]) == {str(q) for q in PERCENTILES}
    assert table.column("mean_error_m")[1] > table.column("mean_error_m")[0]
    with pytest.raises(ValueError):
        compare([rep])


def test_los_buckets():
    rep = run(scenario(obstacles=[Cylinder((1000, 0), 20.0, 500.0)]))
    buckets = rep.by_los_count()
    assert set(buckets) == {3}
    assert buckets[3].total_count == len(rep.records)


def test_scenario_validation():
    with pytest.raises(ValueError):
        scenario(trials_per_epoch=0)
    with pytest.raises(ValueError):
        scenario(seed=-1)
    with pytest.raises(ValueError):
        scenario(noise_scale=-1.0)
