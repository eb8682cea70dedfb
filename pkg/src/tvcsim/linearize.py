"""Operating points, closed-form small-perturbation model and its
finite-difference check.

State order is ``(du, dv, dw, dq, dr, dtheta, dpsi)`` and input order
``(dmu_p, dmu_y)``. The model assumes zero roll rate, a frozen roll angle, no
wind and parameters frozen at the operating point (including dynamic pressure
and the speed ``V0`` that appears in the sideslip and damping terms).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import environment, vehicle
from .frames import check_pitch
from .vehicle import VehicleConfig

STATE_LABELS = ("du", "dv", "dw", "dq", "dr", "dtheta", "dpsi")
INPUT_LABELS = ("dmu_p", "dmu_y")
LON = (0, 2, 3, 5)
LAT = (1, 4, 6)
DECOUPLING_TOL = 1e-9


class OperatingPointError(ValueError):
    """Raised when a trajectory cannot be turned into valid operating points."""


@dataclass(frozen=True)
class OperatingPoint:
    """Trajectory snapshot with the parameters frozen for linearization.

    ``frozen`` keys: ``T, m, J_t, qbar, V0, g, C_N_alpha, C_Y_beta, C_mq,
    C_nr, SM, l, S, d``.
    """

    t0: float
    h0: float
    x0: tuple  # (u0, v0, w0, q0, r0, theta0, psi0)
    u_in0: tuple  # (mu_p0, mu_y0)
    phi0: float
    frozen: dict
    p0: float = 0.0

    def __post_init__(self):
        if not self.frozen["V0"] > 0:
            raise OperatingPointError(f"operating point at t={self.t0} has V0 <= 0")
        check_pitch(self.x0[5], 0.0)
        bad = [k for k, v in self.frozen.items() if not math.isfinite(v)]
        if bad:
            raise OperatingPointError(f"non-finite frozen parameters {bad} at t={self.t0}")

    def to_dict(self) -> dict:
        return {"t0": self.t0, "h0": self.h0, "x0": list(self.x0), "u_in0": list(self.u_in0),
                "phi0": self.phi0, "p0": self.p0, "frozen": dict(self.frozen)}

    @classmethod
    def from_dict(cls, data: dict) -> "OperatingPoint":
        return cls(float(data["t0"]), float(data["h0"]), tuple(data["x0"]), tuple(data["u_in0"]),
                   float(data["phi0"]), {k: float(v) for k, v in data["frozen"].items()},
                   float(data.get("p0", 0.0)))


@dataclass
class LinearModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.shape != (7, 7) or self.B.shape != (7, 2):
            raise ValueError("LinearModel expects A 7x7 and B 7x2")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise ValueError("LinearModel entries must be finite")

    def to_csv(self) -> str:
        """Row-major export with labelled header: one row per state equation."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", *STATE_LABELS, *INPUT_LABELS])
        for i, label in enumerate(STATE_LABELS):
            writer.writerow([label, *(repr(float(v)) for v in self.A[i]),
                             *(repr(float(v)) for v in self.B[i])])
        return buf.getvalue()


@dataclass
class Subsystem:
    A: np.ndarray
    B: np.ndarray
    states: tuple


@dataclass
class DecoupledModel:
    lon: Subsystem
    lat: Subsystem


@dataclass
class NominalLog:
    """Disturbance-free reference flight sampled at the control rate.

    ``x`` rows are the 13-element plant state, ``mu`` rows the commanded
    ``(mu_p, mu_y)``.
    """

    t: np.ndarray
    x: np.ndarray
    mu: np.ndarray
    config: VehicleConfig
    extras: dict = field(default_factory=dict)


def operating_point_at(t: float, x, mu, config: VehicleConfig) -> OperatingPoint:
    """Freeze the plant parameters at one trajectory sample."""
    x = np.asarray(x, dtype=float)
    h = float(x[0])
    u, v, w = x[3:6]
    V = float(np.linalg.norm(x[3:6]))
    atm = environment.atmosphere(min(max(h, 0.0), environment.MAX_ALTITUDE))
    mach = V / atm.speed_of_sound
    mp = vehicle.mass_properties(t, config, mach)
    _, C_Na, C_Yb = vehicle.aero_coefficients(mach, config)
    frozen = {
        "T": vehicle.thrust(t, h, config), "m": float(x[12]), "J_t": mp.J_t,
        "qbar": 0.5 * atm.density * V * V, "V0": V, "g": environment.gravity(h),
        "C_N_alpha": C_Na, "C_Y_beta": C_Yb, "C_mq": config.C_mq, "C_nr": config.C_nr,
        "SM": mp.static_margin, "l": mp.l, "S": config.area, "d": config.diameter,
    }
    return OperatingPoint(float(t), h, (float(u), float(v), float(w), float(x[7]), float(x[8]),
                                        float(x[10]), float(x[11])),
                          (float(mu[0]), float(mu[1])), float(x[9]), frozen, float(x[6]))


def extract_operating_points(log: NominalLog, interval: float = 5.0, diagnostics: list | None = None):
    """Sample ``log`` every ``interval`` seconds and freeze each sample.

    Samples with airspeed below the aerodynamic floor or without thrust
    (no control authority) are skipped and described in ``diagnostics``.
    """
    if interval <= 0:
        raise ValueError("sampling interval must be positive")
    t = np.asarray(log.t, dtype=float)
    if t.size < 2:
        raise OperatingPointError("nominal log is empty")
    dt = float(np.median(np.diff(t)))
    diagnostics = [] if diagnostics is None else diagnostics
    points = []
    k = 0
    while k * interval <= t[-1] + 1e-9:
        ts = k * interval
        k += 1
        idx = int(np.argmin(np.abs(t - ts)))
        if abs(t[idx] - ts) > 0.5 * dt + 1e-9:
            continue
        x, mu = log.x[idx], log.mu[idx]
        V = float(np.linalg.norm(x[3:6]))
        if V < log.config.velocity_floor:
            diagnostics.append(f"t={t[idx]:g} s rejected: airspeed {V:.3g} m/s below floor "
                               f"{log.config.velocity_floor:g} m/s")
            continue
        if vehicle.thrust(float(t[idx]), float(x[0]), log.config) <= 0.0:
            diagnostics.append(f"t={t[idx]:g} s rejected: no thrust, gimbal has no authority")
            continue
        points.append(operating_point_at(float(t[idx]), x, mu, log.config))
    h = [p.h0 for p in points]
    for a, b, pa, pb in zip(h, h[1:], points, points[1:]):
        if b <= a:
            raise OperatingPointError(
                f"altitude not strictly increasing between t={pa.t0:g} s (h={a:.3f} m) and "
                f"t={pb.t0:g} s (h={b:.3f} m); altitude cannot key the schedule")
    return points


def linearize(op: OperatingPoint) -> LinearModel:
    """Closed-form Jacobians of the reduced plant at ``op``."""
    u0, v0, w0, q0, r0, th, ps = op.x0
    mp0, my0 = op.u_in0
    f = op.frozen
    T, m, Jt, qbar, V0, g = f["T"], f["m"], f["J_t"], f["qbar"], f["V0"], f["g"]
    CNa, CYb, Cmq, Cnr, SM, l, S, d = (f["C_N_alpha"], f["C_Y_beta"], f["C_mq"], f["C_nr"],
                                        f["SM"], f["l"], f["S"], f["d"])
    root = 1.0 - v0 * v0 / (V0 * V0)
    if root <= 0.0:
        raise OperatingPointError(f"sideslip derivative singular at t={op.t0}: |v0| == V0")
    root = math.sqrt(root)
    uw2 = u0 * u0 + w0 * w0
    if uw2 == 0.0:
        raise OperatingPointError(f"angle-of-attack derivative singular at t={op.t0}: u0 = w0 = 0")
    sf, cf = math.sin(op.phi0), math.cos(op.phi0)
    st, ct = math.sin(th), math.cos(th)
    sp, cp = math.sin(ps), math.cos(ps)

    a16 = g * st * cp
    a17 = g * ct * sp
    a22 = qbar * S * CYb / (m * root * V0)
    # d/dtheta of -g (s_phi s_theta c_psi - c_phi s_psi); the c_phi s_psi term has no theta
    a26 = -g * sf * ct * cp
    a27 = g * (sf * st * sp + cf * cp)
    a31 = q0 + qbar * S * CNa * w0 / (m * uw2)
    a33 = -qbar * S * CNa * u0 / (m * uw2)
    a36 = -g * cf * ct * cp
    a37 = -g * (-cf * st * sp + sf * cp)
    a41 = qbar * S * d * SM * CNa * w0 / (Jt * uw2)
    a43 = -qbar * S * d * SM * CNa * u0 / (Jt * uw2)
    a44 = qbar * S * d * d * Cmq / (2.0 * Jt * V0)
    a52 = -qbar * S * d * SM * CYb / (Jt * V0 * root)
    a55 = qbar * S * d * d * Cnr / (2.0 * Jt * V0)
    a85 = cf / ct
    a86 = (q0 * sf + r0 * cf) * st / (ct * ct)

    A = np.array([
        [0.0, r0, -q0, -w0, v0, a16, a17],
        [-r0, a22, 0.0, 0.0, -u0, a26, a27],
        [a31, 0.0, a33, u0, 0.0, a36, a37],
        [a41, 0.0, a43, a44, 0.0, 0.0, 0.0],
        [0.0, a52, 0.0, 0.0, a55, 0.0, 0.0],
        [0.0, 0.0, 0.0, cf, -sf, 0.0, 0.0],
        [0.0, 0.0, 0.0, sf / ct, a85, a86, 0.0],
    ])
    s1, c1 = math.sin(mp0), math.cos(mp0)
    s2, c2 = math.sin(my0), math.cos(my0)
    Tm, Tl = T / m, T * l / Jt
    B = np.array([
        [-Tm * s1 * c2, -Tm * c1 * s2],
        [Tm * s1 * s2, -Tm * c1 * c2],
        [-Tm * c1, 0.0],
        [-Tl * c1, 0.0],
        [-Tl * s1 * s2, Tl * c1 * c2],
        [0.0, 0.0],
        [0.0, 0.0],
    ])
    return LinearModel(A, B)


def reduced_rhs(x, mu, op: OperatingPoint) -> np.ndarray:
    """Nonlinear 7-state plant with the linearization simplifications applied.

    Roll rate is zero, roll angle is ``op.phi0``, there is no wind, and all
    parameters (``qbar`` and the speed in the sideslip/damping terms included)
    are frozen at ``op``.
    """
    u, v, w, q, r, th, ps = (float(c) for c in x)
    f = op.frozen
    m, Jt, g, V0, qbar = f["m"], f["J_t"], f["g"], f["V0"], f["qbar"]
    S, d, SM = f["S"], f["d"], f["SM"]
    lam = (op.phi0, th, ps)
    fg = vehicle.gravity_force(lam, m, 0.0) * (g / environment.G0)
    fp, tp = vehicle.propulsive(f["T"], float(mu[0]), float(mu[1]), f["l"])
    alpha = math.atan2(w, u)
    beta = math.asin(v / V0)
    C_N = f["C_N_alpha"] * alpha
    C_Y = f["C_Y_beta"] * beta
    fa = np.array([0.0, qbar * S * C_Y, -qbar * S * C_N])  # axial drag frozen: no state derivative
    k = d / (2.0 * V0)
    tau_a = qbar * S * d * np.array([0.0, -C_N * SM + f["C_mq"] * q * k, -C_Y * SM + f["C_nr"] * r * k])
    omega = np.array([0.0, q, r])
    vel = np.array([u, v, w])
    force = fg + fp + fa
    torque = tp + tau_a
    dv = -np.cross(omega, vel) + force / m
    # with p = 0 and J = diag(J_l, J_t, J_t) the gyroscopic terms vanish for q and r
    dq = torque[1] / Jt
    dr = torque[2] / Jt
    sf, cf = math.sin(op.phi0), math.cos(op.phi0)
    dth = q * cf - r * sf
    dps = (q * sf + r * cf) / math.cos(th)
    return np.array([dv[0], dv[1], dv[2], dq, dr, dth, dps])


def finite_diff_jacobian(op: OperatingPoint, rel_step: float = 1e-5):
    """Central-difference Jacobians of :func:`reduced_rhs` at ``op``.

    Each variable is perturbed by ``rel_step * max(|x_i|, scale_i)`` where the
    floor scale is the airspeed for velocities and 1 for rates, angles and
    inputs.
    """
    x0 = np.array(op.x0, dtype=float)
    u0 = np.array(op.u_in0, dtype=float)
    floors = np.array([op.frozen["V0"]] * 3 + [1.0] * 4)
    A = np.empty((7, 7))
    B = np.empty((7, 2))
    for j in range(7):
        h = rel_step * max(abs(x0[j]), floors[j])
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        A[:, j] = (reduced_rhs(xp, u0, op) - reduced_rhs(xm, u0, op)) / (2.0 * h)
    for j in range(2):
        h = rel_step * max(abs(u0[j]), 1.0)
        up, um = u0.copy(), u0.copy()
        up[j] += h
        um[j] -= h
        B[:, j] = (reduced_rhs(x0, up, op) - reduced_rhs(x0, um, op)) / (2.0 * h)
    return A, B


def relative_mismatch(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Largest relative error over the analytically nonzero entries.

    Entries that are zero analytically must be numerically zero up to
    ``floor`` relative to the largest entry.
    """
    scale = max(float(np.max(np.abs(analytic))), 1.0)
    nz = np.abs(analytic) > floor * scale
    rel = 0.0
    if np.any(nz):
        rel = float(np.max(np.abs(analytic[nz] - numeric[nz]) / np.abs(analytic[nz])))
    zero_err = float(np.max(np.abs(numeric[~nz]), initial=0.0)) / scale
    return max(rel, zero_err)


def decouple(model: LinearModel, op: OperatingPoint, tol: float = DECOUPLING_TOL) -> DecoupledModel:
    """Split into longitudinal (du, dw, dq, dtheta)/dmu_p and lateral
    (dv, dr, dpsi)/dmu_y blocks after checking that they do not interact."""
    u0, v0, w0, q0, r0, th, ps = op.x0
    nominals = {"p0": op.p0, "v0": v0, "r0": r0, "psi0": ps, "phi0": op.phi0, "mu_y0": op.u_in0[1]}
    bad = {k: v for k, v in nominals.items() if abs(v) > tol}
    if bad:
        raise OperatingPointError(
            f"decoupling conditions violated at t={op.t0:g} s: "
            + ", ".join(f"{k}={v:.3e}" for k, v in bad.items()))
    A, B = model.A, model.B
    lon, lat = np.array(LON), np.array(LAT)
    cross = max(np.max(np.abs(A[np.ix_(lon, lat)])), np.max(np.abs(A[np.ix_(lat, lon)])),
                np.max(np.abs(B[lon, 1])), np.max(np.abs(B[lat, 0])))
    if cross > tol:
        raise OperatingPointError(f"lon/lat cross-coupling {cross:.3e} exceeds {tol:g} at t={op.t0:g} s")
    return DecoupledModel(
        Subsystem(A[np.ix_(lon, lon)], B[lon, 0:1], tuple(STATE_LABELS[i] for i in LON)),
        Subsystem(A[np.ix_(lat, lat)], B[lat, 1:2], tuple(STATE_LABELS[i] for i in LAT)),
    )
