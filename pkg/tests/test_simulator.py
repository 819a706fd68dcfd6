from dataclasses import replace

import numpy as np
import pytest

from shared_steer import presets
from shared_steer.guidance import set_enabled
from shared_steer.plant import VehicleParams
from shared_steer.road import LANE_HALF_WIDTH, RoadSegment, build_course
from shared_steer.simulator import (
    FLAG_GUIDANCE_OFF,
    LOG_COLUMNS,
    DivergenceError,
    Failure,
    Scenario,
    compute_metrics,
    inject_failure,
    make_scenario,
    post_failure_mask,
    run,
    run_many,
)

STRAIGHT = build_course([RoadSegment.straight(3000)])
SHORT = dict(duration=20.0)


def test_straight_equilibrium():
    log = run(make_scenario(1, "mid", course=STRAIGHT, **SHORT))
    for name in ("lateral_error", "T_d", "T_h", "phi"):
        assert np.all(log[name] == 0.0)


def test_log_shape_and_spacing():
    log = run(make_scenario(2, "low", duration=10.0))
    assert len(log) == 1200
    assert log.table().shape == (1200, len(LOG_COLUMNS))
    np.testing.assert_allclose(np.diff(log["t"]), 1 / 120, atol=1e-12)
    assert np.all(np.isfinite(log.values))


def test_khg_irrelevant_without_guidance():
    base = make_scenario(1, "manual", duration=90.0)
    a = run(replace(base, dp_manual=base.dp_manual.replace(K_hg=0.0)))
    b = run(replace(base, dp_manual=base.dp_manual.replace(K_hg=1.0)))
    np.testing.assert_array_equal(a.values, b.values)


def test_disabled_guidance_equals_zero_gain():
    sc = make_scenario(2, "mid", duration=80.0)
    off = run(replace(sc, gp=set_enabled(sc.gp, False), dp_manual=sc.dp_guided))
    zero = run(replace(sc, gp=replace(sc.gp, K_1=0.0)))
    keep = [i for i, c in enumerate(LOG_COLUMNS) if c != "flags"]
    np.testing.assert_array_equal(off.values[:, keep], zero.values[:, keep])


def test_driver1_mid_stays_in_lane():
    log = run(make_scenario(1, "mid"))
    m = compute_metrics(log)
    assert m.max_abs_lateral < LANE_HALF_WIDTH
    assert not m.lane_departure


def test_deterministic():
    sc = make_scenario(3, "high", duration=70.0)
    np.testing.assert_array_equal(run(sc).values, run(sc).values)


def test_run_many_preserves_order():
    scs = [make_scenario(d, "mid", duration=65.0) for d in (1, 2, 3)]
    many = run_many(scs)
    for sc, log in zip(scs, many):
        np.testing.assert_array_equal(log.values, run(sc).values)


def test_failure_semantics():
    sc = make_scenario(1, "high", duration=80.0)
    nominal = run(sc)
    failed = run(inject_failure(sc, 70.0, 1.0))
    t = failed["t"]
    before = t < 70.0
    np.testing.assert_array_equal(failed.values[before], nominal.values[before])
    assert failed["T_h"][np.argmax(t >= 70.0)] == 0.0
    assert np.all(failed["T_h"][t >= 70.0] == 0.0)
    assert np.all(failed["flags"][t >= 70.0].astype(int) & FLAG_GUIDANCE_OFF)
    k = int(np.argmax(t >= 70.0))
    assert np.isfinite(failed["T_h"][k - 1]) and failed["T_h"][k - 1] != 0.0


def test_driver_switch_after_response_time():
    sc = make_scenario(1, "high", duration=75.0)
    a = run(inject_failure(sc, 70.0, 1.0))
    # same manual parameters as guided ones: the switch is a no-op
    same = replace(sc, dp_manual=sc.dp_guided)
    b = run(inject_failure(same, 70.0, 1.0))
    t = a["t"]
    np.testing.assert_array_equal(a.values[t <= 71.0], b.values[t <= 71.0])
    assert not np.array_equal(a["T_d"][t > 71.5], b["T_d"][t > 71.5])


def test_failure_ordering_driver1():
    peaks = {}
    for level in ("low", "mid", "high"):
        sc = make_scenario(1, level, failure=Failure(70.0, 1.0), duration=90.0)
        log = run(sc)
        peaks[level] = np.abs(log["lateral_error"][post_failure_mask(log, sc.course, 70.0)]).max()
    assert peaks["high"] > peaks["mid"] > peaks["low"]


def test_reliance_presets():
    assert presets.reliance_preset("high") == (2.0, 0.0, True)
    assert presets.reliance_preset("mid") == (3.0, 0.5, True)
    assert presets.reliance_preset("low") == (4.0, 1.0, True)
    K_d, _, on = presets.reliance_preset("manual")
    assert (K_d, on) == (4.0, False)
    with pytest.raises(ValueError):
        presets.reliance_preset("extreme")


def test_make_scenario_applies_driver_delay():
    sc = make_scenario(3, "high")
    assert sc.dp_guided.t_p == 0.5 and sc.dp_manual.t_p == 0.5
    assert (sc.dp_guided.K_d, sc.dp_guided.K_hg) == (2.0, 0.0)
    with pytest.raises(ValueError):
        make_scenario(4, "mid")


def test_metrics_identical_and_shifted():
    a = run(make_scenario(1, "mid", course=build_course([RoadSegment.straight(2000)], (0, 0, 0)), **SHORT))
    assert compute_metrics(a, a).traj_mae_vs_ref == 0.0
    shifted = build_course([RoadSegment.straight(2000)], (0, 0.2, 0))
    b = run(make_scenario(1, "mid", course=shifted, **SHORT))
    assert compute_metrics(a, b).traj_mae_vs_ref == pytest.approx(0.2, abs=1e-12)


def test_metrics_length_mismatch():
    a = run(make_scenario(1, "mid", course=STRAIGHT, **SHORT))
    with pytest.raises(ValueError):
        compute_metrics(a, a.head(100))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"duration": 0.0},
        {"dt": 1 / 60},
        {"dt": 1 / 500},
        {"failure": Failure(70.0, 1.0), "duration": 70.5},
    ],
)
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        run(Scenario(**kwargs))


def test_divergence_reported():
    course = build_course([RoadSegment.arc(100, 90), RoadSegment.straight(2000)])
    sc = replace(make_scenario(1, "mid", course=course, duration=60.0), vp=VehicleParams(K_r=2000.0))
    with pytest.raises(DivergenceError) as info:
        run(sc)
    assert info.value.sample > 0
