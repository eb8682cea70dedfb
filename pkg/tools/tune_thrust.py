"""Fit the shipped thrust knots to the reference vertical-flight figures.

Adjusts the burn time and the three dynamic-thrust levels of the regressive
curve (lift-off, t = 30 s, burnout) so that the undisturbed vertical flight
reaches the target apogee, peak speed, apogee time and burnout speed. Prints the knots to paste into
``tvcsim/defaults.py``.

Usage: python3 tools/tune_thrust.py
"""

import numpy as np
from scipy.optimize import least_squares

from tvcsim import defaults, kernels

TARGET_APOGEE = 4945.0
TARGET_VMAX = 82.0
TARGET_T_APOGEE = 100.0
TARGET_V_BURNOUT = 27.0
MID_KNOT = 30.0


def knots_from(x):
    t_burn, t0, t_mid, t_end = x
    return ((0.0, t0), (MID_KNOT, t_mid), (t_burn, t_end))


def vertical_flight(x, dt=1e-3, chunk=50):
    knots = knots_from(x)
    cfg = defaults.default_vehicle(knots)
    plant = kernels.make_plant(cfg, filters=False)
    y = np.zeros(kernels.N_STATE)
    y[12] = cfg.initial_mass
    act = np.zeros(2)
    t, vmax, v_burn = 0.0, 0.0, None
    zeros = np.zeros(3)
    hold = np.zeros(kernels.N_HOLD)
    while t < 300.0:
        status, t = kernels.propagate(plant, t, y, act, np.zeros(2), zeros, hold, chunk, dt)
        vmax = max(vmax, y[3])
        if v_burn is None and t >= cfg.burn_time:
            v_burn = y[3]
        if status == kernels.STATUS_APOGEE:
            return y[0], vmax, t, v_burn
        if status != kernels.STATUS_OK:
            raise RuntimeError(f"vertical flight failed with status {status}")
    raise RuntimeError("no apogee within 300 s")


def residuals(x):
    apogee, vmax, t_apo, v_burn = vertical_flight(x, dt=5e-3, chunk=10)
    return [apogee / TARGET_APOGEE - 1.0, vmax / TARGET_VMAX - 1.0,
            t_apo / TARGET_T_APOGEE - 1.0, (v_burn - TARGET_V_BURNOUT) / TARGET_VMAX]


def main():
    knots = defaults.THRUST_KNOTS
    x0 = [knots[-1][0]] + [level for _, level in knots]
    sol = least_squares(residuals, x0, bounds=([60.0, 100.0, 100.0, 100.0], [99.0, 3000.0, 3000.0, 3000.0]),
                        diff_step=1e-3)
    x = [round(float(v), 1) for v in sol.x]
    apogee, vmax, t_apo, v_burn = vertical_flight(x)
    print("knots:", knots_from(x))
    print(f"apogee {apogee:.1f} m, max velocity {vmax:.2f} m/s, time to apogee {t_apo:.2f} s, "
          f"burnout velocity {v_burn:.2f} m/s")


if __name__ == "__main__":
    main()
