import math

import numpy as np
import pytest

from latsec import TABLE1, SteeringProfile, TimeGrid, build_state_space, output_map, simulate
from latsec.attacks import (
    AttackResources,
    NotSteadyState,
    OutOfWindow,
    ReplayTaps,
    default_delta_ss,
    replay_output,
    replay_record,
)
from latsec.attacks import resources
from latsec.attacks.replay import max_output_rate
from latsec.sim import SimContext
from latsec.vehicle import NO_LIMITS

M = build_state_space(TABLE1.replace(stiffness_convention="per_axle"))
YAW = output_map(M, "yaw_rate")
SIN = SteeringProfile.sinusoid(0.05, 0.2)


def test_record_and_lookup():
    samples = np.arange(11, dtype=float) * 0.01
    buf = replay_record(samples, dt=0.1, tau=1.0, t_r=5.0, delta_ss=1.0)
    assert buf.t_start == 4.0
    assert replay_output(buf, 5.0)[0] == 0.0
    assert replay_output(buf, 5.3)[0] == pytest.approx(0.03)
    assert replay_output(buf, 6.0)[0] == pytest.approx(0.10)
    with pytest.raises(OutOfWindow):
        replay_output(buf, 6.2)
    with pytest.raises(OutOfWindow):
        replay_output(buf, 4.9)


def test_record_rejects_fast_window():
    samples = np.sin(np.linspace(0, 10, 11))
    with pytest.raises(NotSteadyState) as info:
        replay_record(samples, dt=1.0, tau=10.0, t_r=10.0, delta_ss=1e-3)
    assert info.value.max_rate == pytest.approx(max_output_rate(samples, 1.0))


def test_record_checks_length_and_bound():
    with pytest.raises(ValueError):
        replay_record(np.zeros(5), dt=0.1, tau=1.0, t_r=1.0, delta_ss=1.0)
    with pytest.raises(ValueError):
        replay_record(np.zeros(11), dt=0.1, tau=1.0, t_r=1.0, delta_ss=0.0)


def test_default_delta_ss():
    y = 0.3 * np.sin(np.linspace(0, 2 * math.pi, 100))
    assert default_delta_ss(y, 0.5) == pytest.approx(1.5 * 2 * math.pi * 0.5 * np.abs(y).max())
    assert default_delta_ss(y, None) == 1e-6
    # the bound always admits the sinusoid itself
    t = np.arange(0, 5, 1e-3)
    ys = 0.3 * np.sin(2 * math.pi * 0.5 * t)
    assert max_output_rate(ys, 1e-3) < default_delta_ss(ys, 0.5)


def test_replay_is_bit_identical_to_recording():
    taps = ReplayTaps(t_r=10.0, tau=5.0)
    tr = simulate(M, YAW, SIN, taps, grid=TimeGrid.from_duration(16.0, 1e-3))
    assert taps.failure is None
    rec = tr.window(5.0, 10.0).y_true
    rep = tr.window(10.0, 15.0).y_received
    assert np.array_equal(rec, rep)
    assert np.array_equal(taps.buffer.samples, rec)
    # outside the window the controller sees the live signal
    after = tr.window(15.1, 15.9)
    assert np.array_equal(after.y_received, after.y_true)


def test_replay_over_whole_periods_is_stealthy():
    # 0.2 Hz: tau = 10 s spans two periods, so the replay lines up with the nominal
    taps = ReplayTaps(t_r=20.0, tau=10.0, injection=("delta", lambda t: 5.0))
    tr = simulate(M, YAW, SIN, taps, grid=TimeGrid.from_duration(30.0, 1e-3))
    w = tr.window(20.0, 30.0)
    assert np.max(np.abs(w.y_received - w.y_nominal)) <= 1e-9
    assert np.max(np.abs(tr.x_true - tr.x_nominal)) > 10 * np.max(np.abs(tr.x_nominal))


def test_injection_starts_after_t_r():
    taps = ReplayTaps(t_r=2.0, tau=1.0, injection=("mz", lambda t: 100.0))
    tr = simulate(M, YAW, SIN, taps, grid=TimeGrid.from_duration(3.5, 1e-3))
    k_r = 2000
    assert np.array_equal(tr.x_true[:k_r + 1], tr.x_nominal[:k_r + 1])
    assert tr.u_injected[k_r, 0] == 0.0
    assert tr.u_injected[k_r + 1, 0] == 100.0
    assert tr.u_injected[3001, 0] == 0.0


def test_rejected_recording_means_no_attack():
    taps = ReplayTaps(t_r=2.0, tau=1.0, delta_ss=1e-9, injection=("delta", lambda t: 5.0))
    tr = simulate(M, YAW, SIN, taps, grid=TimeGrid.from_duration(4.0, 1e-3))
    assert isinstance(taps.failure, NotSteadyState)
    assert np.array_equal(tr.x_true, tr.x_nominal)
    assert np.array_equal(tr.y_received, tr.y_true)


def test_replay_never_reads_model():
    taps = ReplayTaps(t_r=1.0, tau=0.5)
    ctx = SimContext(None, None, TimeGrid(0, 1e-3, 2000), NO_LIMITS, SIN)
    taps.start(ctx)
    assert not taps.resources.needs_model


def test_resource_rules():
    assert ReplayTaps(1.0, 0.5).resources == resources.REPLAY
    assert ReplayTaps(1.0, 0.5, injection=("mz", lambda t: 0.0)).resources.needs_actuator_disruption
    with pytest.raises(ValueError):
        resources.check_resources("replay", AttackResources(True, True, False, True))
    with pytest.raises(ValueError):
        resources.check_resources("zda", AttackResources(True, False, True, True))
    with pytest.raises(ValueError):
        resources.check_resources("covert", AttackResources(True, False, True, False))
    with pytest.raises(ValueError):
        ReplayTaps(1.0, 0.0)
    with pytest.raises(ValueError):
        ReplayTaps(1.0, 0.5, injection=("brake", lambda t: 0.0))
