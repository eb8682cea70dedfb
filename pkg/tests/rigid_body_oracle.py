"""Independent Newton-Euler equations of the launcher used as a test oracle.

Forces and torques are assembled from geometry (lever arms and cross
products) instead of the closed-form coefficients used by the package.
"""

import math

import numpy as np

from tvcsim import environment, vehicle


def _rot(phi, theta, psi):
    cx, sx = math.cos(phi), math.sin(phi)
    cy, sy = math.cos(theta), math.sin(theta)
    cz, sz = math.cos(psi), math.sin(psi)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def rigid_body_rhs(t, y, mu_p, mu_y, tau_r, wind, config):
    y = np.asarray(y, dtype=float)
    pos, v, w, lam, m = y[0:3], y[3:6], y[6:9], y[9:12], y[12]
    phi, theta, _ = lam
    R = _rot(*lam)
    h = pos[0]
    atm = environment.atmosphere(min(max(h, 0.0), environment.MAX_ALTITUDE))
    v_rel = v - R.T @ np.asarray(wind, dtype=float)
    V = float(np.linalg.norm(v_rel))
    mp = vehicle.mass_properties(t, config, V / atm.speed_of_sound)
    T = vehicle.thrust(t, h, config)

    # thrust along the deflected nozzle axis, applied at the gimbal (aft of the cm)
    d_thrust = np.array([math.cos(mu_p) * math.cos(mu_y), -math.cos(mu_p) * math.sin(mu_y), -math.sin(mu_p)])
    f_thrust = T * d_thrust
    r_gimbal = np.array([-(config.x_gimbal - mp.x_cm), 0.0, 0.0])
    tau_thrust = np.cross(r_gimbal, f_thrust)

    # aerodynamic normal/side force acting at the centre of pressure
    C_A, C_Na, C_Yb = vehicle.aero_coefficients(V / atm.speed_of_sound, config)
    qbar = 0.5 * atm.density * V * V
    S, d = config.area, config.diameter
    alpha = math.atan2(v_rel[2], v_rel[0]) if V >= config.velocity_floor else 0.0
    beta = math.asin(v_rel[1] / V) if V >= config.velocity_floor else 0.0
    f_aero = qbar * S * np.array([-C_A, C_Yb * beta, -C_Na * alpha])
    r_cp = np.array([mp.x_cm - mp.x_cp, 0.0, 0.0])
    tau_aero = np.cross(r_cp, f_aero)
    if V >= config.velocity_floor:
        k = qbar * S * d * d / (2.0 * V)
        tau_aero = tau_aero + k * np.array([config.C_lp * w[0], config.C_mq * w[1], config.C_nr * w[2]])

    f_grav = R.T @ np.array([-m * environment.gravity(h), 0.0, 0.0])
    J = np.diag([mp.J_l, mp.J_t, mp.J_t])
    tau = tau_thrust + tau_aero + np.array([tau_r, 0.0, 0.0])

    # body rates -> Euler rates by inverting omega = W(lam) lam_dot
    W = np.array([
        [1.0, 0.0, -math.sin(theta)],
        [0.0, math.cos(phi), math.sin(phi) * math.cos(theta)],
        [0.0, -math.sin(phi), math.cos(phi) * math.cos(theta)],
    ])
    dy = np.empty(13)
    dy[0:3] = R @ v
    dy[3:6] = (f_thrust + f_aero + f_grav) / m - np.cross(w, v)
    dy[6:9] = np.linalg.solve(J, tau - np.cross(w, J @ w))
    dy[9:12] = np.linalg.solve(W, w)
    dy[12] = -config.curve.dynamic(t) / config.exhaust_velocity
    return dy
