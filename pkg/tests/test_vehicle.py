import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvcsim.defaults import BURN_TIME, DRY_MASS, TOTAL_MASS
from tvcsim.vehicle import (StateSnapshotError, ThrustCurve, aero_forces, dynamics_rhs, mass_at,
                            mass_properties, propulsive)

from rigid_body_oracle import rigid_body_rhs

small = st.floats(-0.2, 0.2, allow_nan=False)


def test_mass_budget(vehicle):
    assert vehicle.initial_mass == pytest.approx(TOTAL_MASS)
    assert mass_at(0.0, vehicle) == pytest.approx(TOTAL_MASS)
    assert mass_at(BURN_TIME, vehicle) == pytest.approx(DRY_MASS, rel=1e-9)
    assert mass_at(BURN_TIME + 50.0, vehicle) == pytest.approx(DRY_MASS, rel=1e-9)


def test_mass_properties_clamped_after_burnout(vehicle):
    a = mass_properties(vehicle.burn_time, vehicle)
    b = mass_properties(vehicle.burn_time + 30.0, vehicle)
    assert a.x_cm == b.x_cm and a.J_t == b.J_t
    assert a.l == pytest.approx(vehicle.x_gimbal - a.x_cm)
    with pytest.raises(ValueError):
        mass_properties(-1.0, vehicle)


def test_finless_launcher_is_statically_unstable(vehicle):
    for t in np.linspace(0.0, vehicle.burn_time, 20):
        assert mass_properties(float(t), vehicle, 0.2).static_margin < 0


def test_thrust_curve_impulse_is_exact_trapezoid():
    c = ThrustCurve(((0.0, 100.0), (2.0, 50.0), (4.0, 0.0)))
    assert c.impulse(4.0) == pytest.approx(150.0 + 50.0)
    assert c.impulse(1.0) == pytest.approx(87.5)
    assert c.dynamic(5.0) == 0.0


def test_propulsive_zero_deflection():
    f, tau = propulsive(1000.0, 0.0, 0.0, 1.2)
    np.testing.assert_array_equal(f, [1000.0, 0.0, 0.0])
    np.testing.assert_array_equal(tau, [0.0, 0.0, 0.0])


def test_propulsive_limit():
    with pytest.raises(ValueError):
        propulsive(1000.0, math.radians(8.0), 0.0, 1.0, limit=math.radians(7.0))


def test_positive_pitch_deflection_pitches_down():
    # +mu_p tilts the thrust towards -z at the nozzle, which is aft of the cm
    _, tau = propulsive(1000.0, 0.01, 0.0, 1.0)
    assert tau[1] < 0


def test_aero_vanishes_below_velocity_floor(vehicle):
    f, tau = aero_forces((0.0, 0.0, 0.0), (0.1, 0.0, 0.0), vehicle, 1.2, -1.0)
    assert np.linalg.norm(tau) == 0.0
    assert abs(f[1]) == 0.0 and abs(f[2]) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 120.0), st.floats(10.0, 4000.0), st.floats(5.0, 90.0), small, small, small,
       small, small, small, small, st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-10, 10))
def test_dynamics_match_independent_newton_euler(vehicle, t, h, u, v, w, p, q, r, phi, theta, mu_p, mu_y, wy):
    y = np.zeros(13)
    y[0] = h
    y[3:6] = (u, v * u, w * u)
    y[6:9] = (p, q, r)
    y[9:12] = (phi, theta, 0.3 * phi)
    y[12] = mass_at(t, vehicle)
    wind = np.array([0.0, wy, -0.5 * wy])
    tau_r = vehicle.roll_damping * -p
    got = dynamics_rhs(t, y, mu_p, mu_y, tau_r, wind, vehicle)
    want = rigid_body_rhs(t, y, mu_p, mu_y, tau_r, wind, vehicle)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10)


def test_dynamics_guard_reports_state(vehicle):
    y = np.zeros(13)
    y[10] = math.pi / 2
    y[12] = vehicle.initial_mass
    with pytest.raises(StateSnapshotError) as info:
        dynamics_rhs(1.0, y, 0.0, 0.0, 0.0, np.zeros(3), vehicle)
    assert info.value.t == 1.0
    np.testing.assert_array_equal(info.value.state, y)


def test_scaled_parameters(vehicle):
    s = vehicle.scaled("x_cm", 1.1)
    assert s.x_cm_table[0][1] == pytest.approx(1.1 * vehicle.x_cm_table[0][1])
    t = vehicle.scaled("thrust", 1.2)
    # mass flow unchanged: propellant still burns out at the same time
    assert mass_at(t.burn_time, t) == pytest.approx(mass_at(vehicle.burn_time, vehicle))
    assert vehicle.scaled("dry_mass", 0.9).dry_mass == pytest.approx(0.9 * vehicle.dry_mass)
    with pytest.raises(ValueError):
        vehicle.scaled("colour", 1.0)


def test_config_validation(vehicle):
    from dataclasses import replace

    with pytest.raises(ValueError):
        replace(vehicle, propellant_mass=vehicle.propellant_mass * 1.5)
    with pytest.raises(ValueError):
        replace(vehicle, x_gimbal=0.5)
    with pytest.raises(ValueError):
        replace(vehicle, diameter=0.0)
