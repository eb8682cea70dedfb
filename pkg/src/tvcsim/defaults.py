"""Shipped reference vehicle and scenario defaults.

Mass, length and diameter follow the reference launcher; every other number
(aerodynamics, inertia histories, nozzle, thrust shape) is a project choice.
The thrust knots are produced by ``tools/tune_thrust.py`` so the undisturbed
vertical flight reaches about 4945 m at about 100 s with a peak speed near
82 m/s.
"""

from __future__ import annotations

import math

from .vehicle import ThrustCurve, VehicleConfig

TOTAL_MASS = 82.9
DRY_MASS = 40.0
LENGTH = 3.57
DIAMETER = 0.24

# (t s, dynamic thrust N); regressive grain, written by tools/tune_thrust.py
THRUST_KNOTS = (
    (0.0, 916.3),
    (30.0, 887.8),
    (97.2, 259.8),
)
BURN_TIME = THRUST_KNOTS[-1][0]


def exhaust_velocity_for(knots, propellant_mass: float) -> float:
    """Effective exhaust velocity that burns exactly ``propellant_mass``."""
    curve = ThrustCurve(tuple(knots))
    return curve.impulse(curve.burn_time) / propellant_mass


def default_vehicle(thrust_knots=THRUST_KNOTS) -> VehicleConfig:
    propellant = TOTAL_MASS - DRY_MASS
    t_burn = thrust_knots[-1][0]
    return VehicleConfig(
        dry_mass=DRY_MASS,
        propellant_mass=propellant,
        length=LENGTH,
        diameter=DIAMETER,
        x_gimbal=3.45,
        x_cm_table=((0.0, 2.05), (t_burn, 1.80)),
        x_cp_table=((0.0, 0.45), (0.3, 0.46), (0.6, 0.48)),
        inertia_table=((0.0, 0.62, 88.0), (t_burn, 0.36, 55.0)),
        aero_table=(
            (0.0, 0.45, 2.0, -2.0),
            (0.3, 0.44, 2.02, -2.02),
            (0.6, 0.46, 2.08, -2.08),
        ),
        C_lp=-0.02,
        C_mq=-40.0,
        C_nr=-40.0,
        thrust_curve=tuple(thrust_knots),
        exhaust_velocity=exhaust_velocity_for(thrust_knots, propellant),
        nozzle_exit_area=0.0015,
        exit_pressure=50_000.0,
        gimbal_limit=math.radians(7.0),
        roll_damping=5.0,
        roll_torque=0.0,
    )
