import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvcsim import control, sim
from tvcsim.control import (ActuatorState, ControllerState, FeedforwardDivergence, FeedforwardTable,
                            GainSchedule, LqiWeights, PidController, PidGains, PitchProgram, ScheduleError,
                            ScheduledGains, actuator_update, augment_lqi, design_axis, interpolate_gains,
                            lqi_step, spin_correct_inputs, spin_correct_rates, synthesize_node, total_command)
from tvcsim.riccati import CareProblem, solve_care

DEG = math.pi / 180


def test_pitch_program_shape():
    p = PitchProgram()
    assert p.attitude(0.0)[0] == 0.0
    assert p.attitude(p.t_tilted)[0] == pytest.approx(p.amplitude)
    assert p.attitude(0.5 * (p.t_start + p.t_tilted))[0] == pytest.approx(0.5 * p.amplitude)
    assert p.attitude(200.0)[0] == 0.0
    assert np.all(p.attitude(50.0)[1:] == 0.0)
    assert np.all(PitchProgram.vertical().attitude(50.0) == 0.0)


def test_pitch_program_rate_is_derivative():
    p = PitchProgram()
    for t in (10.0, 30.0, 50.0, 70.0, 90.0):
        h = 1e-4
        fd = (p.attitude(t + h) - p.attitude(t - h)) / (2 * h)
        np.testing.assert_allclose(p.rate(t), fd, atol=1e-9)


def test_pitch_program_validation():
    with pytest.raises(ValueError):
        PitchProgram(t_start=50.0, t_tilted=40.0)
    with pytest.raises(ValueError):
        PitchProgram(amplitude=math.radians(80.0))


def test_actuator_exact_lag():
    s = ActuatorState(tau=0.05, rate_limit=100.0, limit=1.0)
    out = actuator_update([0.1, -0.1], s, 0.01)
    np.testing.assert_allclose(out.deflection, np.array([0.1, -0.1]) * (1 - math.exp(-0.2)), rtol=1e-14)


def test_actuator_rate_and_position_limits():
    s = ActuatorState(tau=0.001, rate_limit=1.0, limit=0.05)
    out = actuator_update([1.0, 0.0], s, 0.01)
    assert out.deflection[0] == pytest.approx(0.01)
    for _ in range(20):
        out = actuator_update([1.0, 0.0], out, 0.01)
    assert out.deflection[0] == pytest.approx(0.05)
    with pytest.raises(ValueError):
        ActuatorState(tau=0.0)


angles = st.floats(-10.0, 10.0, allow_nan=False)


@given(angles, angles, angles)
def test_spin_correction_round_trip(q, r, chi):
    q_ns, r_ns = spin_correct_rates(q, r, chi)
    assert math.hypot(q_ns, r_ns) == pytest.approx(math.hypot(q, r), abs=1e-12)
    back = spin_correct_inputs(q_ns, r_ns, chi)
    np.testing.assert_allclose(back, (q, r), atol=1e-12)


def test_spin_correction_quarter_turn():
    # after a quarter roll the body pitch axis points where the yaw axis was
    q_ns, r_ns = spin_correct_rates(1.0, 0.0, math.pi / 2)
    assert q_ns == pytest.approx(0.0, abs=1e-15) and r_ns == pytest.approx(-1.0)


def test_augment_lqi():
    A = np.arange(9.0).reshape(3, 3)
    B = np.ones((3, 1))
    C = np.array([[0.0, 0.0, 1.0]])
    Ab, Bb = augment_lqi(A, B, C)
    assert Ab.shape == (4, 4) and Bb.shape == (4, 1)
    np.testing.assert_array_equal(Ab[:3, :3], A)
    np.testing.assert_array_equal(Ab[3], [0.0, 0.0, -1.0, 0.0])
    assert Bb[3, 0] == 0.0
    with pytest.raises(ValueError):
        augment_lqi(A, B, np.ones((1, 2)))


def test_design_axis_matches_direct_solve():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    Q = np.diag([2.0, 1.0, 5.0])
    d = design_axis(A, B, tracked=0, feedback=(0, 1), Q=Q, R=np.eye(1))
    Ab, Bb = augment_lqi(A, B, [[1.0, 0.0]])
    ref = solve_care(CareProblem(Ab, Bb, Q, np.eye(1)))
    np.testing.assert_allclose(d.K_full, ref.K, rtol=1e-12)
    assert d.closed_loop_eigenvalues().real.max() < 0
    with pytest.raises(ValueError):
        design_axis(A, B, 0, (0, 1), Q, np.eye(1), exclude=(0,))


def test_weights_validation():
    with pytest.raises(ValueError):
        LqiWeights(r_mu_p=0.0)
    with pytest.raises(ValueError):
        LqiWeights(q_q=-1.0)
    w = LqiWeights().scaled(lon=2.0)
    assert w.q_theta == 2.0 and w.q_psi == 1.0


def test_axial_speed_is_neutral_at_vertical_points(points):
    # the speed perturbation neither drives nor is driven by the attitude states
    for op in points:
        if op.t0 > PitchProgram().t_start:
            continue
        A = control.decoupled_model(op).lon.A
        assert np.all(A[0, 1:] == 0.0) and np.all(A[1:, 0] == 0.0)


def test_designed_loops_stable_at_every_node(points):
    for op in points:
        lon, lat = synthesize_node(op, sim.DEFAULT_WEIGHTS)
        assert lon.closed_loop_eigenvalues().real.max() < 0
        assert lat.closed_loop_eigenvalues().real.max() < 0
        assert lon.residual <= 1e-8 and lat.residual <= 1e-8


def test_synthesis_failure_carries_location(points):
    op = points[4]
    dead = replace(op, frozen={**op.frozen, "T": 0.0})
    with pytest.raises(ScheduleError) as info:
        synthesize_node(dead, sim.DEFAULT_WEIGHTS)
    assert info.value.t0 == op.t0 and info.value.h0 == op.h0


def test_schedule_json_round_trip(build):
    text = build.schedule.to_json()
    again = GainSchedule.from_json(text)
    assert again.to_json() == text
    doc = json.loads(text)
    doc["schema_version"] = 99
    with pytest.raises(ValueError, match="version"):
        GainSchedule.from_json(json.dumps(doc))


def test_schedule_validation(build):
    nodes = build.schedule.nodes
    with pytest.raises(ValueError):
        GainSchedule([nodes[1], nodes[0]])
    with pytest.raises(ValueError):
        GainSchedule([])


def test_interpolation_hits_nodes_and_clamps(build):
    s = build.schedule
    n3, n4 = s.nodes[3], s.nodes[4]
    g = interpolate_gains(s, n3.h0)
    np.testing.assert_array_equal(g.K_lon, n3.K_lon)
    mid = interpolate_gains(s, 0.5 * (n3.h0 + n4.h0))
    np.testing.assert_allclose(mid.K_lat, 0.5 * (np.array(n3.K_lat) + np.array(n4.K_lat)), rtol=1e-12)
    np.testing.assert_array_equal(interpolate_gains(s, -100.0).K_lon, s.nodes[0].K_lon)
    np.testing.assert_array_equal(interpolate_gains(s, 1e6).u0, s.nodes[-1].u0)


def _gains():
    return ScheduledGains(np.array([2.0, 30.0, -100.0]), np.array([2.0, 30.0, -100.0]),
                          np.zeros(4), np.zeros(2), np.zeros(2))


def test_lqi_step_law():
    g = _gains()
    du, st1 = lqi_step((0.1, -0.2, 0.01, 0.02), (0.05, 0.0), g, 0.01, ControllerState())
    np.testing.assert_allclose(st1.integrators, [0.04 * 0.01, -0.02 * 0.01])
    assert du[0] == pytest.approx(-(2.0 * 0.1 + 30.0 * 0.01 - 100.0 * 0.0004))
    assert du[1] == pytest.approx(-(2.0 * -0.2 + 30.0 * 0.02 - 100.0 * -0.0002))


def test_lqi_integrator_freezes_on_saturation():
    g = _gains()
    st0 = ControllerState(np.array([0.1, 0.2]), np.array([True, False]))
    _, st1 = lqi_step((0.0, 0.0, 0.0, 0.0), (1.0, 1.0), g, 0.01, st0)
    assert st1.integrators[0] == 0.1
    assert st1.integrators[1] == pytest.approx(0.21)


def test_total_command_clips():
    u, sat = total_command([0.2, -0.01], [0.0, 0.0], 0.1)
    np.testing.assert_array_equal(u, [0.1, -0.01])
    np.testing.assert_array_equal(sat, [True, False])


def test_pid_signs_and_freeze():
    pid = PidController(PidGains(kp=-10.0, ki=0.0, kd=0.0))
    out = pid.step((0.0, 0.0), (0.0, 0.0), (0.1, 0.1), (0.0, 0.0), 0.01)
    # a positive pitch error asks for negative mu_p; yaw is mirrored
    assert out[0] == pytest.approx(-1.0) and out[1] == pytest.approx(1.0)
    pid = PidController(PidGains(kp=0.0, ki=1.0, kd=0.0))
    pid.frozen = np.array([True, False])
    pid.step((0.0, 0.0), (0.0, 0.0), (1.0, 1.0), (0.0, 0.0), 0.5)
    np.testing.assert_array_equal(pid.integrators, [0.0, 0.5])


def test_feedforward_csv_round_trip(build):
    ff = build.feedforward
    again = FeedforwardTable.from_csv(ff.to_csv("tvcsim schema_version=1"))
    for name in ("t", "h", "mu_p0", "mu_y0"):
        np.testing.assert_array_equal(getattr(again, name), getattr(ff, name))
    with pytest.raises(ValueError):
        FeedforwardTable.from_csv("a,b,c,d\n1,2,3,4\n")
    with pytest.raises(ValueError):
        FeedforwardTable([0, 1], [5.0, 5.0], [0, 0], [0, 0])


def test_nominal_flight_tracks_program(build, vehicle):
    log = build.nominal
    program = PitchProgram()
    powered = log.t < vehicle.burn_time
    theta_d = np.array([program.attitude(t)[0] for t in log.t[powered]])
    assert np.abs(theta_d - log.x[powered, 10]).max() < 0.02 * DEG
    assert np.all(log.mu[~powered] == 0.0)
    assert np.all(np.abs(log.mu) <= vehicle.gimbal_limit)
    assert log.extras["apogee_time"] > vehicle.burn_time


def test_feedforward_divergence_is_reported(vehicle):
    with pytest.raises(FeedforwardDivergence):
        control.generate_feedforward(PitchProgram(t_start=1.0, t_tilted=3.0, t_recover=10.0, t_vertical=12.0,
                                                  amplitude=math.radians(50.0)),
                                     vehicle, PidGains(kp=0.0, ki=0.0, kd=0.0))
