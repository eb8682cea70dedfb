"""Sensor models and the attitude/position complementary filters.

The attitude filter (ACF) fuses Euler-angle readings with gyro rates and
estimates the gyro bias. The position filter (PCF) fuses GNSS position with
accelerometer specific force, rotated with the ACF attitude, and estimates
the accelerometer bias.

Accelerometer convention: readings are body specific force (thrust plus
aerodynamic force over mass). Gravity is added back in the inertial frame
inside the PCF, so the filter integrates the true kinematic acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from . import environment
from .frames import check_pitch, rotation_from_euler
from .riccati import solve_filter_care

I3 = np.eye(3)
ACF_GAIN = np.vstack([0.5 * I3, -I3])
PCF_GAINS = (I3.copy(), I3.copy(), -0.5 * I3)


@dataclass
class SensorSuiteConfig:
    """Noise standard deviations, constant biases and bias random walks.

    Units: gyro rad/s, accel m/s^2, Euler readings rad, GNSS m and m/s; bias
    walks are in unit/s per sqrt(s). Readings are drawn at ``rate_hz`` and
    held between samples.
    """

    gyro_noise: float = 0.002
    accel_noise: float = 0.05
    euler_noise: float = math.radians(0.1)
    gnss_pos_noise: float = 1.5
    gnss_vel_noise: float = 0.1
    gyro_bias: tuple = (math.radians(0.5),) * 3
    accel_bias: tuple = (0.1, 0.1, 0.1)
    gyro_bias_walk: float = 0.0
    accel_bias_walk: float = 0.0
    rate_hz: float = 100.0
    alignment_time: float = 30.0
    seed: int = 1

    def __post_init__(self):
        for name in ("gyro_noise", "accel_noise", "euler_noise", "gnss_pos_noise", "gnss_vel_noise",
                     "gyro_bias_walk", "accel_bias_walk", "alignment_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if len(self.gyro_bias) != 3 or len(self.accel_bias) != 3:
            raise ValueError("biases need three components")


class SensorReadings(NamedTuple):
    t: float
    omega_r: np.ndarray
    a_r: np.ndarray
    lambda_r: np.ndarray
    p_r: np.ndarray
    v_r: np.ndarray


@dataclass
class NavState:
    """Filter estimates. ``v_hat`` is the inertial velocity estimate."""

    lam_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def velocity_body(self) -> np.ndarray:
        return rotation_from_euler(self.lam_hat).T @ self.v_hat

    def omega_hat(self, omega_r) -> np.ndarray:
        return np.asarray(omega_r, dtype=float) - self.b_w

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lam_hat, self.b_w, self.p_hat, self.v_hat, self.b_a])

    @classmethod
    def from_array(cls, arr) -> "NavState":
        arr = np.asarray(arr, dtype=float)
        return cls(*(arr[i:i + 3].copy() for i in range(0, 15, 3)))


class SensorSuite:
    """Seeded sensor error generator owned by one run.

    :meth:`draw` returns the 18-element hold vector used by the plant kernel:
    Euler noise, gyro noise, gyro bias, accel noise, accel bias, GNSS noise.
    """

    def __init__(self, config: SensorSuiteConfig):
        self.config = config
        self.dt = 1.0 / config.rate_hz
        self.rng = np.random.default_rng(config.seed)
        self.gyro_bias = np.array(config.gyro_bias, dtype=float)
        self.accel_bias = np.array(config.accel_bias, dtype=float)
        self.vel_noise = np.zeros(3)

    def draw(self) -> np.ndarray:
        c = self.config
        n = self.rng.standard_normal(15)
        hold = np.empty(18)
        hold[0:3] = c.euler_noise * n[0:3]
        hold[3:6] = c.gyro_noise * n[3:6]
        hold[6:9] = self.gyro_bias
        hold[9:12] = c.accel_noise * n[6:9]
        hold[12:15] = self.accel_bias
        hold[15:18] = c.gnss_pos_noise * n[9:12]
        self.vel_noise = c.gnss_vel_noise * n[12:15]
        if c.gyro_bias_walk > 0 or c.accel_bias_walk > 0:
            w = self.rng.standard_normal(6) * math.sqrt(self.dt)
            self.gyro_bias = self.gyro_bias + c.gyro_bias_walk * w[:3]
            self.accel_bias = self.accel_bias + c.accel_bias_walk * w[3:]
        return hold


def readings_from_hold(t: float, y, specific_force, hold) -> SensorReadings:
    """Apply the additive sensor models to truth ``y`` (13+ plant state)."""
    y = np.asarray(y, dtype=float)
    hold = np.asarray(hold, dtype=float)
    R = rotation_from_euler(y[9:12])
    return SensorReadings(
        t,
        y[6:9] + hold[3:6] + hold[6:9],
        np.asarray(specific_force, dtype=float) + hold[9:12] + hold[12:15],
        y[9:12] + hold[0:3],
        y[0:3] + hold[15:18],
        R @ y[3:6],
    )


def sense(t: float, y, specific_force, sensors: SensorSuite) -> tuple[SensorReadings, np.ndarray]:
    """Draw one set of sensor errors and return the readings and hold vector."""
    hold = sensors.draw()
    readings = readings_from_hold(t, y, specific_force, hold)
    return readings._replace(v_r=readings.v_r + sensors.vel_noise), hold


def acf_matrix(lam_r) -> np.ndarray:
    """Attitude-filter process matrix built from the Euler readings."""
    phi, theta, _ = (float(a) for a in lam_r)
    check_pitch(theta)
    sf, cf = math.sin(phi), math.cos(phi)
    tt, ct = math.tan(theta), math.cos(theta)
    return np.array([
        [-1.0, -sf * tt, -cf * tt],
        [0.0, -cf, sf],
        [0.0, -sf / ct, -cf / ct],
    ])


def _zoh(F: np.ndarray, c: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    """Exact solution of ``x' = F x + c`` over ``dt`` with constant ``c``."""
    n = F.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = F
    M[:n, n] = c
    E = expm(M * dt)
    return E[:n, :n] @ x + E[:n, n]


def acf_update(nav: NavState, lambda_r, omega_r, dt: float, gain: np.ndarray = ACF_GAIN) -> NavState:
    """One exact zero-order-hold step of the attitude filter."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    lam_r = np.asarray(lambda_r, dtype=float)
    A = acf_matrix(lam_r)
    L_top, L_bot = gain[:3], gain[3:]
    F = np.block([[-L_top, A], [-L_bot, np.zeros((3, 3))]])
    c = np.concatenate([-A @ np.asarray(omega_r, dtype=float) + L_top @ lam_r, L_bot @ lam_r])
    x = _zoh(F, c, np.concatenate([nav.lam_hat, nav.b_w]), dt)
    check_pitch(x[1])
    return NavState(x[:3], x[3:], nav.p_hat.copy(), nav.v_hat.copy(), nav.b_a.copy())


def pcf_update(nav: NavState, p_r, a_r, lambda_hat, dt: float, gains=PCF_GAINS) -> NavState:
    """One exact zero-order-hold step of the position filter.

    Gravity at the current altitude estimate is held over the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    L1, L2, L3 = gains
    R = rotation_from_euler(lambda_hat)
    p_r = np.asarray(p_r, dtype=float)
    g_i = np.array([-environment.gravity(float(nav.p_hat[0])), 0.0, 0.0])
    Z = np.zeros((3, 3))
    F = np.block([[-L1, I3, Z], [-L2, Z, -R], [-R.T @ L3, Z, Z]])
    c = np.concatenate([L1 @ p_r, R @ np.asarray(a_r, dtype=float) + g_i + L2 @ p_r, R.T @ L3 @ p_r])
    x = _zoh(F, c, np.concatenate([nav.p_hat, nav.v_hat, nav.b_a]), dt)
    return NavState(nav.lam_hat.copy(), nav.b_w.copy(), x[:3], x[3:6], x[6:])


def acf_model():
    """Vertical-attitude attitude-filter model ``(A, C, G)``; noise = (gyro, bias walk)."""
    Z = np.zeros((3, 3))
    A = np.block([[Z, -I3], [Z, Z]])
    C = np.hstack([I3, Z])
    G = np.block([[I3, Z], [Z, I3]])
    return A, C, G


def pcf_model():
    """Vertical-attitude position-filter model ``(A, C, G)``; noise = (accel, bias walk)."""
    Z = np.zeros((3, 3))
    A = np.block([[Z, I3, Z], [Z, Z, -I3], [Z, Z, Z]])
    C = np.hstack([I3, Z, Z])
    G = np.block([[Z, Z], [I3, Z], [Z, I3]])
    return A, C, G


def recompute_filter_gains(config: SensorSuiteConfig, gyro_bias_walk: float | None = None,
                           accel_bias_walk: float | None = None):
    """Steady-state Kalman gains of both filters at vertical attitude.

    Noise intensities come from ``config`` (continuous-time densities are the
    per-sample variances times the sample period). The bias-walk intensities
    may be overridden as tuning knobs. Returns ``(L_acf, L1, L2, L3)``.
    """
    dt = 1.0 / config.rate_hz
    bw = config.gyro_bias_walk if gyro_bias_walk is None else gyro_bias_walk
    ba = config.accel_bias_walk if accel_bias_walk is None else accel_bias_walk
    if bw <= 0 or ba <= 0:
        raise ValueError("bias-walk intensities must be positive for a well-posed filter design")
    A, C, G = acf_model()
    Qn = np.diag([config.gyro_noise**2 * dt] * 3 + [bw**2] * 3)
    Rn = np.eye(3) * config.euler_noise**2 * dt
    _, L_acf = solve_filter_care(A, C, G, Qn, Rn)
    A, C, G = pcf_model()
    Qn = np.diag([config.accel_noise**2 * dt] * 3 + [ba**2] * 3)
    Rn = np.eye(3) * config.gnss_pos_noise**2 * dt
    _, L = solve_filter_care(A, C, G, Qn, Rn)
    # bias block equals R^T L3 with R = I at the design attitude
    return L_acf, L[0:3], L[3:6], L[6:9]


def acf_error_matrix(gain: np.ndarray = ACF_GAIN) -> np.ndarray:
    """Estimation-error dynamics ``A - L C`` of the attitude filter at vertical attitude."""
    A, C, _ = acf_model()
    return A - gain @ C


def pcf_error_matrix(gains=PCF_GAINS) -> np.ndarray:
    A, C, _ = pcf_model()
    L = np.vstack(gains)
    return A - L @ C
