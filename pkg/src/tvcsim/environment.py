"""Gravity, ISA-1976 atmosphere and a seeded Dryden wind field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import cholesky, expm, solve_continuous_lyapunov

G0 = 9.80665
R_EARTH = 6_371_000.0

# ISA-1976 constants
R_AIR = 287.05287
GAMMA_AIR = 1.4
_R0_GEOPOT = 6_356_766.0
_LAYER_BASE_H = (0.0, 11_000.0, 20_000.0, 32_000.0, 47_000.0, 51_000.0, 71_000.0, 84_852.0)
_LAYER_LAPSE = (-0.0065, 0.0, 0.001, 0.0028, 0.0, -0.0028, -0.002)
MAX_ALTITUDE = 80_000.0


def _layer_table():
    temps = [288.15]
    press = [101_325.0]
    for i, lapse in enumerate(_LAYER_LAPSE[:-1]):
        dh = _LAYER_BASE_H[i + 1] - _LAYER_BASE_H[i]
        t0, p0 = temps[-1], press[-1]
        t1 = t0 + lapse * dh
        if lapse == 0.0:
            p1 = p0 * math.exp(-G0 * dh / (R_AIR * t0))
        else:
            p1 = p0 * (t1 / t0) ** (-G0 / (lapse * R_AIR))
        temps.append(t1)
        press.append(p1)
    return tuple(temps), tuple(press)


_LAYER_T, _LAYER_P = _layer_table()


class AtmosphereSample(NamedTuple):
    pressure: float
    density: float
    speed_of_sound: float
    temperature: float


def gravity(h: float) -> float:
    """Inverse-square gravity magnitude at altitude ``h`` (m)."""
    if h <= -1000.0:
        raise ValueError(f"altitude {h} m is below the supported range")
    return G0 * R_EARTH**2 / (R_EARTH + h) ** 2


def atmosphere(h: float) -> AtmosphereSample:
    """ISA-1976 state at geometric altitude ``h`` in [0, 80 km]."""
    if not (0.0 <= h <= MAX_ALTITUDE):
        raise ValueError(f"altitude {h} m outside atmosphere model range [0, {MAX_ALTITUDE:g}]")
    hp = _R0_GEOPOT * h / (_R0_GEOPOT + h)
    i = 0
    while i < len(_LAYER_LAPSE) - 1 and hp >= _LAYER_BASE_H[i + 1]:
        i += 1
    lapse = _LAYER_LAPSE[i]
    dh = hp - _LAYER_BASE_H[i]
    t0, p0 = _LAYER_T[i], _LAYER_P[i]
    temp = t0 + lapse * dh
    if lapse == 0.0:
        p = p0 * math.exp(-G0 * dh / (R_AIR * t0))
    else:
        p = p0 * (temp / t0) ** (-G0 / (lapse * R_AIR))
    return AtmosphereSample(p, p / (R_AIR * temp), math.sqrt(GAMMA_AIR * R_AIR * temp), temp)


@dataclass
class WindModelConfig:
    """Mean horizontal wind profile plus Dryden gusts.

    ``mean_profile`` rows are ``(altitude m, speed m/s, direction rad)``; the
    direction is measured in the horizontal ``y-z`` inertial plane from ``+y``
    towards ``+z``. Gust filters use a fixed reference airspeed to convert the
    spatial length scales into time constants.
    """

    mean_profile: list = field(default_factory=lambda: [[0.0, 0.0, 0.0]])
    gust_intensity: float = 0.0
    gust_length_scales: list = field(default_factory=lambda: [200.0, 200.0, 50.0])
    airspeed: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.gust_intensity < 0:
            raise ValueError("gust_intensity must be non-negative")
        if any(L <= 0 for L in self.gust_length_scales) or len(self.gust_length_scales) != 3:
            raise ValueError("gust_length_scales needs three positive lengths (u, v, w)")
        if self.airspeed <= 0:
            raise ValueError("airspeed must be positive")
        alts = [row[0] for row in self.mean_profile]
        if any(b <= a for a, b in zip(alts, alts[1:])):
            raise ValueError("mean_profile altitudes must be strictly increasing")


def _dryden_filter(length: float, airspeed: float, second_order: bool):
    tau = length / airspeed
    if second_order:
        # (1 + sqrt(3) tau s) / (1 + tau s)^2 in controllable canonical form
        a = np.array([[0.0, 1.0], [-1.0 / tau**2, -2.0 / tau]])
        b = np.array([[0.0], [1.0]])
        c = np.array([[1.0 / tau**2, math.sqrt(3.0) / tau]])
    else:
        a = np.array([[-1.0 / tau]])
        b = np.array([[1.0]])
        c = np.array([[1.0 / tau]])
    # unit-intensity white noise -> scale so the output variance is exactly 1
    x = solve_continuous_lyapunov(a, -b @ b.T)
    c = c / math.sqrt(float((c @ x @ c.T)[0, 0]))
    return a, b, c, x


def _discretize_noise(a, b, dt):
    """Van Loan: exact transition and process-noise covariance over ``dt``."""
    n = a.shape[0]
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = -a
    m[:n, n:] = b @ b.T
    m[n:, n:] = a.T
    e = expm(m * dt)
    ad = e[n:, n:].T
    qd = ad @ e[:n, n:]
    return ad, 0.5 * (qd + qd.T)


class WindField:
    """Stateful wind generator owned by a single simulation run.

    Each call to :meth:`sample` advances the gust filters by ``dt`` and returns
    the inertial wind vector (m/s). Identical ``(config, dt)`` produce
    bit-identical sequences.
    """

    def __init__(self, config: WindModelConfig | None, dt: float):
        self.config = config or WindModelConfig()
        self.dt = float(dt)
        prof = np.asarray(self.config.mean_profile, dtype=float).reshape(-1, 3)
        self._alt, self._speed, self._dir = prof[:, 0], prof[:, 1], prof[:, 2]
        self._filters = []
        for length, second in zip(self.config.gust_length_scales, (False, True, True)):
            a, b, c, xss = _dryden_filter(length, self.config.airspeed, second)
            ad, qd = _discretize_noise(a, b, self.dt)
            self._filters.append((ad, cholesky(qd, lower=True), c, cholesky(xss, lower=True)))
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.config.seed)
        self._states = [chol_ss @ self._rng.standard_normal(ad.shape[0])
                        for ad, _, _, chol_ss in self._filters]

    def mean(self, h: float) -> np.ndarray:
        speed = float(np.interp(h, self._alt, self._speed))
        direction = float(np.interp(h, self._alt, self._dir))
        return np.array([0.0, speed * math.cos(direction), speed * math.sin(direction)])

    def gust(self) -> np.ndarray:
        """Advance the three shaping filters one step; return (x, y, z) gusts."""
        sigma = self.config.gust_intensity
        out = np.empty(3)
        for i, ((ad, chol_q, c, _), x) in enumerate(zip(self._filters, self._states)):
            out[i] = sigma * float((c @ x)[0])
            self._states[i] = ad @ x + chol_q @ self._rng.standard_normal(ad.shape[0])
        # u-filter (first order) drives the along-y axis, w-filter the vertical
        return np.array([out[2], out[0], out[1]])

    def sample(self, t: float, h: float) -> np.ndarray:
        if self.config.gust_intensity == 0.0:
            return self.mean(h)
        return self.mean(h) + self.gust()


def wind_at(t: float, h: float, wind: WindField) -> np.ndarray:
    """Inertial wind at ``(t, h)``; advances ``wind``'s gust state by one step."""
    return wind.sample(t, h)
