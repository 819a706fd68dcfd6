import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shared_steer.guidance import GuidanceParams, GuidanceState, guidance_torque, raw_torque, set_enabled
from shared_steer.road import PerceptionErrors

GP = GuidanceParams()
DT = 1 / 120


def test_zero_errors_zero_torque():
    assert guidance_torque(PerceptionErrors(0, 0), GuidanceState(), GP, DT) == 0.0


def test_proportional_example():
    # settled filters: previous error equal to current one
    gs = GuidanceState(prev_e_y=1.0)
    assert guidance_torque(PerceptionErrors(1.0, 0.0), gs, GP, DT) == pytest.approx(0.5)


def test_saturation():
    assert raw_torque(0, 0, 0.8, 0, GP) == pytest.approx(8.0)
    gs = GuidanceState(prev_e_theta=0.8)
    assert guidance_torque(PerceptionErrors(0.0, 0.8), gs, GP, DT) == 5.0
    gs = GuidanceState(prev_e_theta=-0.8)
    assert guidance_torque(PerceptionErrors(0.0, -0.8), gs, GP, DT) == -5.0


def test_disabled_returns_zero():
    off = set_enabled(GP, False)
    assert guidance_torque(PerceptionErrors(1.0, 0.3), GuidanceState(), off, DT) == 0.0
    assert set_enabled(off, True).enabled


def test_filtered_derivative_converges_to_slope():
    gs = GuidanceState()
    slope = 0.2
    for k in range(1, 600):
        guidance_torque(PerceptionErrors(slope * k * DT, 0.0), gs, GP, DT)
    assert gs.filt_dey == pytest.approx(slope, rel=1e-9)


def test_toggle_mid_sequence():
    gs = GuidanceState()
    out = []
    for k in range(20):
        gp = GP if k < 10 else set_enabled(GP, False)
        out.append(guidance_torque(PerceptionErrors(0.1 * k, 0.01), gs, gp, DT))
    assert np.isfinite(out[9]) and out[9] != 0.0
    assert all(x == 0.0 for x in out[10:])


def test_rejects_bad_dt():
    with pytest.raises(ValueError):
        guidance_torque(PerceptionErrors(0, 0), GuidanceState(), GP, 0.0)


@pytest.mark.parametrize("kwargs", [{"T_max": 0}, {"t_np": -1}, {"t_fp": 0.1}, {"tau_d": 0}])
def test_params_invariants(kwargs):
    with pytest.raises(ValueError):
        GuidanceParams(**kwargs)


errors = st.lists(st.tuples(st.floats(-5, 5), st.floats(-2, 2)), min_size=1, max_size=30)


@given(errors)
def test_torque_bounded(seq):
    gs = GuidanceState()
    for e_y, e_th in seq:
        assert abs(guidance_torque(PerceptionErrors(e_y, e_th), gs, GP, DT)) <= GP.T_max


@given(errors, errors)
def test_superposition_unsaturated(a, b):
    n = min(len(a), len(b))
    wide = GuidanceParams(T_max=1e9)
    ga, gb, gc = GuidanceState(), GuidanceState(), GuidanceState()
    for (ya, ta), (yb, tb) in zip(a[:n], b[:n]):
        ta_ = guidance_torque(PerceptionErrors(ya, ta), ga, wide, DT)
        tb_ = guidance_torque(PerceptionErrors(yb, tb), gb, wide, DT)
        tc_ = guidance_torque(PerceptionErrors(ya + yb, ta + tb), gc, wide, DT)
        assert tc_ == pytest.approx(ta_ + tb_, abs=1e-9 * (1 + abs(ta_) + abs(tb_)))
