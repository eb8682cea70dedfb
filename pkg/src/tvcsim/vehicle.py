"""Nonlinear launcher plant: mass properties, forces, torques and the 6-DOF
state derivative.

This module is the readable reference implementation. The simulation loop
integrates the same equations through :mod:`tvcsim.kernels`, which is checked
against :func:`dynamics_rhs` in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import environment
from .frames import SINGULARITY_MARGIN, SingularityError, check_pitch, euler_rates, rotation_from_euler

VELOCITY_FLOOR = 0.5

# state vector layout shared with the kernels
STATE_SIZE = 13
IX_P, IX_V, IX_W, IX_LAM, IX_M = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), 12


class StateSnapshotError(SingularityError):
    """Singularity guard tripped inside the plant; carries the offending state."""

    def __init__(self, message: str, t: float, state):
        super().__init__(f"{message} at t={t:.4f} s")
        self.t = t
        self.state = np.array(state, copy=True)


def _pairs(table, ncols: int) -> np.ndarray:
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != ncols or arr.shape[0] < 1:
        raise ValueError(f"expected a table with {ncols} columns, got shape {arr.shape}")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError("table keys must be strictly increasing")
    return arr


@dataclass(frozen=True)
class ThrustCurve:
    """Dynamic thrust ``|mdot| * v_e`` sampled over the burn (N).

    Linear between samples, zero after the last sample time.
    """

    samples: tuple

    def __post_init__(self):
        arr = _pairs(self.samples, 2)
        if np.any(arr[:, 1] < 0):
            raise ValueError("thrust samples must be non-negative")

    @property
    def burn_time(self) -> float:
        return float(self.samples[-1][0])

    def dynamic(self, t: float) -> float:
        arr = np.asarray(self.samples)
        if t < arr[0, 0] or t > arr[-1, 0]:
            return 0.0
        return float(np.interp(t, arr[:, 0], arr[:, 1]))

    def impulse(self, t: float) -> float:
        """Exact integral of the piecewise-linear curve from 0 to ``t``."""
        arr = np.asarray(self.samples)
        ts, fs = arr[:, 0], arr[:, 1]
        t = min(max(t, ts[0]), ts[-1])
        total = 0.0
        for i in range(len(ts) - 1):
            a, b = ts[i], ts[i + 1]
            if t <= a:
                break
            hi = min(t, b)
            f_hi = fs[i] + (fs[i + 1] - fs[i]) * (hi - a) / (b - a)
            total += 0.5 * (fs[i] + f_hi) * (hi - a)
        return total


@dataclass(frozen=True)
class VehicleConfig:
    """Geometry, mass, propulsion and aerodynamic data of the launcher.

    Positions ``x_*`` are measured from the nose tip towards the nozzle.
    ``inertia_table`` rows are ``(t, J_l, J_t)``; ``aero_table`` rows are
    ``(Mach, C_A, C_N_alpha, C_Y_beta)``; ``x_cp_table`` rows ``(Mach, x_cp)``.
    ``C_mq`` and ``C_nr`` hold the damping sums ``C_mq + C_malphadot`` and
    ``C_nr + C_nbetadot``.
    """

    dry_mass: float
    propellant_mass: float
    length: float
    diameter: float
    x_gimbal: float
    x_cm_table: tuple
    x_cp_table: tuple
    inertia_table: tuple
    aero_table: tuple
    C_lp: float
    C_mq: float
    C_nr: float
    thrust_curve: tuple
    exhaust_velocity: float
    nozzle_exit_area: float = 0.0
    exit_pressure: float = 0.0
    gimbal_limit: float = math.radians(7.0)
    roll_damping: float = 5.0
    roll_torque: float = 0.0
    velocity_floor: float = VELOCITY_FLOOR

    def __post_init__(self):
        if self.dry_mass <= 0 or self.propellant_mass < 0:
            raise ValueError("dry_mass must be positive and propellant_mass non-negative")
        if self.diameter <= 0 or self.length <= 0:
            raise ValueError("diameter and length must be positive")
        xcm = _pairs(self.x_cm_table, 2)
        _pairs(self.x_cp_table, 2)
        _pairs(self.inertia_table, 3)
        _pairs(self.aero_table, 4)
        ThrustCurve(tuple(map(tuple, self.thrust_curve)))
        if np.any(xcm[:, 1] >= self.x_gimbal):
            raise ValueError("x_gimbal must lie aft of the centre of mass at all times")
        if self.exhaust_velocity <= 0:
            raise ValueError("exhaust_velocity must be positive")
        burned = self.curve.impulse(self.curve.burn_time) / self.exhaust_velocity
        if self.propellant_mass > 0 and abs(burned / self.propellant_mass - 1.0) > 1e-3:
            raise ValueError(
                f"thrust curve burns {burned:.3f} kg but propellant_mass is "
                f"{self.propellant_mass:.3f} kg (impulse / exhaust_velocity must match)"
            )

    @property
    def curve(self) -> ThrustCurve:
        return ThrustCurve(tuple(map(tuple, self.thrust_curve)))

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0

    @property
    def initial_mass(self) -> float:
        return self.dry_mass + self.propellant_mass

    @property
    def burn_time(self) -> float:
        return self.curve.burn_time

    def scaled(self, parameter: str, factor: float) -> "VehicleConfig":
        """Copy with one physical parameter scaled by ``factor``."""
        if parameter == "x_cm":
            return replace(self, x_cm_table=tuple((t, x * factor) for t, x in self.x_cm_table))
        if parameter == "inertia":
            return replace(self, inertia_table=tuple((t, a * factor, b * factor)
                                                     for t, a, b in self.inertia_table))
        if parameter == "thrust":
            return replace(self, thrust_curve=tuple((t, f * factor) for t, f in self.thrust_curve),
                           exhaust_velocity=self.exhaust_velocity * factor)
        if parameter == "aero_normal":
            return replace(self, aero_table=tuple((m, ca, cn * factor, cy * factor)
                                                  for m, ca, cn, cy in self.aero_table))
        if parameter == "drag":
            return replace(self, aero_table=tuple((m, ca * factor, cn, cy)
                                                  for m, ca, cn, cy in self.aero_table))
        if parameter == "dry_mass":
            return replace(self, dry_mass=self.dry_mass * factor)
        raise ValueError(f"unknown uncertainty parameter {parameter!r}")


class MassProperties(NamedTuple):
    m: float
    J_l: float
    J_t: float
    x_cm: float
    l: float
    x_cp: float
    static_margin: float


@dataclass
class RigidBodyState:
    """Plant state: inertial position (x up), body velocity, body rates,
    Euler angles and mass."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    lam: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.omega, self.lam, [self.m]]).astype(float)

    @classmethod
    def from_array(cls, y) -> "RigidBodyState":
        y = np.asarray(y, dtype=float)
        return cls(y[IX_P].copy(), y[IX_V].copy(), y[IX_W].copy(), y[IX_LAM].copy(), float(y[IX_M]))


def _interp_row(table, key: float) -> np.ndarray:
    arr = np.asarray(table, dtype=float)
    return np.array([np.interp(key, arr[:, 0], arr[:, j]) for j in range(1, arr.shape[1])])


def mass_at(t: float, config: VehicleConfig) -> float:
    curve = config.curve
    return config.initial_mass - curve.impulse(t) / config.exhaust_velocity


def mass_properties(t: float, config: VehicleConfig, mach: float = 0.0) -> MassProperties:
    """Mass, inertias, centre of mass, control arm and static margin at ``t``.

    Tables are clamped at their ends, so times past the last entry return
    burnout properties.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    m = mass_at(t, config)
    J_l, J_t = _interp_row(config.inertia_table, t)
    (x_cm,) = _interp_row(config.x_cm_table, t)
    (x_cp,) = _interp_row(config.x_cp_table, mach)
    return MassProperties(m, J_l, J_t, x_cm, config.x_gimbal - x_cm, x_cp,
                          (x_cp - x_cm) / config.diameter)


def aero_coefficients(mach: float, config: VehicleConfig):
    """``(C_A, C_N_alpha, C_Y_beta)`` at ``mach``."""
    return tuple(_interp_row(config.aero_table, mach))


def thrust(t: float, h: float, config: VehicleConfig) -> float:
    """Total thrust: dynamic curve term plus the nozzle pressure term, >= 0."""
    p_a = environment.atmosphere(max(h, 0.0)).pressure
    static = (config.exit_pressure - p_a) * config.nozzle_exit_area
    if t > config.burn_time:
        return max(static, 0.0)
    return max(config.curve.dynamic(t) + static, 0.0)


def gravity_force(lam, m: float, h: float) -> np.ndarray:
    """Weight expressed in the body frame."""
    R = rotation_from_euler(lam)
    return R.T @ np.array([-m * environment.gravity(h), 0.0, 0.0])


def propulsive(T: float, mu_p: float, mu_y: float, l: float, limit: float | None = None):
    """Body force and torque of the gimballed thrust vector."""
    if limit is not None:
        tol = 1e-12
        if abs(mu_p) > limit + tol or abs(mu_y) > limit + tol:
            raise ValueError(f"gimbal deflection ({mu_p:.4f}, {mu_y:.4f}) exceeds limit {limit:.4f} rad")
    cp, sp = math.cos(mu_p), math.sin(mu_p)
    cy, sy = math.cos(mu_y), math.sin(mu_y)
    f = np.array([T * cp * cy, -T * cp * sy, -T * sp])
    tau = np.array([0.0, -T * sp * l, T * cp * sy * l])
    return f, tau


class AeroAngles(NamedTuple):
    alpha: float
    beta: float
    V: float
    mach: float


def aero_angles(v_rel, speed_of_sound: float = 340.294, floor: float = VELOCITY_FLOOR) -> AeroAngles:
    u, v, w = (float(c) for c in v_rel)
    V = math.sqrt(u * u + v * v + w * w)
    mach = V / speed_of_sound
    if V < floor:
        return AeroAngles(0.0, 0.0, V, mach)
    return AeroAngles(math.atan2(w, u), math.asin(max(-1.0, min(1.0, v / V))), V, mach)


def aero_forces(omega, v_rel, config: VehicleConfig, rho: float, static_margin: float,
                speed_of_sound: float = 340.294):
    """Aerodynamic body force and torque for relative velocity ``v_rel``."""
    ang = aero_angles(v_rel, speed_of_sound, config.velocity_floor)
    p, q, r = (float(c) for c in omega)
    C_A, C_Na, C_Yb = aero_coefficients(ang.mach, config)
    qbar = 0.5 * rho * ang.V**2
    S, d = config.area, config.diameter
    C_N = C_Na * ang.alpha
    C_Y = C_Yb * ang.beta
    if ang.V >= config.velocity_floor:
        k = d / (2.0 * ang.V)
        C_l = config.C_lp * p * k
        C_m = -C_N * static_margin + config.C_mq * q * k
        C_n = -C_Y * static_margin + config.C_nr * r * k
    else:
        C_l = 0.0
        C_m = -C_N * static_margin
        C_n = -C_Y * static_margin
    f = np.array([-qbar * C_A * S, qbar * C_Y * S, -qbar * C_N * S])
    tau = qbar * S * d * np.array([C_l, C_m, C_n])
    return f, tau


def roll_control_torque(p: float, config: VehicleConfig) -> float:
    """Rate damper standing in for the separate roll control system."""
    return -config.roll_damping * p + config.roll_torque


def dynamics_rhs(t: float, state, mu_p: float, mu_y: float, tau_r: float, wind,
                 config: VehicleConfig, margin: float = SINGULARITY_MARGIN) -> np.ndarray:
    """Time derivative of the 13-element plant state.

    ``wind`` is the inertial wind vector; it is rotated into the body frame
    before forming the air-relative velocity.
    """
    y = state.as_array() if isinstance(state, RigidBodyState) else np.asarray(state, dtype=float)
    pos, v, w, lam, m = y[IX_P], y[IX_V], y[IX_W], y[IX_LAM], y[IX_M]
    try:
        check_pitch(lam[1], margin)
    except SingularityError as exc:
        raise StateSnapshotError(str(exc), t, y) from None
    h = float(pos[0])
    atm = environment.atmosphere(min(max(h, 0.0), environment.MAX_ALTITUDE))
    R = rotation_from_euler(lam)
    v_rel = v - R.T @ np.asarray(wind, dtype=float)
    mach = float(np.linalg.norm(v_rel)) / atm.speed_of_sound
    mp = mass_properties(t, config, mach)
    T = thrust(t, h, config)

    f_g = gravity_force(lam, m, h)
    f_p, tau_p = propulsive(T, mu_p, mu_y, mp.l)
    f_a, tau_a = aero_forces(w, v_rel, config, atm.density, mp.static_margin, atm.speed_of_sound)
    f = f_g + f_p + f_a
    tau = tau_p + tau_a + np.array([tau_r, 0.0, 0.0])

    J = np.array([mp.J_l, mp.J_t, mp.J_t])
    dy = np.empty(STATE_SIZE)
    dy[IX_P] = R @ v
    dy[IX_V] = -np.cross(w, v) + f / m
    dy[IX_W] = (-np.cross(w, J * w) + tau) / J
    dy[IX_LAM] = euler_rates(lam, w, margin)
    dy[IX_M] = -config.curve.dynamic(t) / config.exhaust_velocity
    return dy
