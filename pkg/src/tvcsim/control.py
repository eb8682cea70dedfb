"""Gain-scheduled LQI attitude control with feedforward.

Pipeline pieces: the pitch program, the PID tracker that flies the nominal
trajectory to record feedforward inputs, LQI synthesis over operating points,
altitude interpolation of the gains, the runtime control law, spin correction
between the body and the non-spinning frame, and the gimbal actuator.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .frames import euler_rates
from .linearize import (DecoupledModel, NominalLog, OperatingPoint, decouple, linearize)
from .riccati import CareError, CareProblem, is_controllable, solve_care
from .vehicle import STATE_SIZE, VehicleConfig

SCHEDULE_VERSION = 1
# tracked-output rows inside the decoupled subsystems
LON_THETA = 3  # (du, dw, dq, dtheta)
LAT_PSI = 2  # (dv, dr, dpsi)
LON_FEEDBACK = (2, 3)  # dq, dtheta
# the axial-speed perturbation du is a neutral mode of the frozen-parameter
# model (exactly decoupled at vertical points, weakly coupled when pitched);
# it is kept out of the attitude design
LON_EXCLUDED = (0,)
LAT_FEEDBACK = (1, 2)  # dr, dpsi


class ScheduleError(RuntimeError):
    """Gain synthesis failed at one operating point."""

    def __init__(self, message: str, t0: float | None = None, h0: float | None = None):
        super().__init__(message)
        self.t0 = t0
        self.h0 = h0


class FeedforwardDivergence(RuntimeError):
    """The PID tracker lost the reference while recording the feedforward."""


# ---------------------------------------------------------------------------
# reference program


@dataclass(frozen=True)
class PitchProgram:
    """Piecewise-linear pitch reference with zero yaw.

    Vertical until ``t_start``, constant-rate pitch-over to ``amplitude`` by
    ``t_tilted``, hold until ``t_recover`` and constant-rate return to
    vertical by ``t_vertical``.
    """

    t_start: float = 25.0
    t_tilted: float = 45.0
    t_recover: float = 65.0
    t_vertical: float = 85.0
    amplitude: float = math.radians(5.0)

    def __post_init__(self):
        if not (0.0 <= self.t_start <= self.t_tilted <= self.t_recover <= self.t_vertical):
            raise ValueError("pitch program times must be non-decreasing")
        if abs(self.amplitude) >= math.radians(60.0):
            raise ValueError("pitch program amplitude must stay below 60 deg")

    @classmethod
    def vertical(cls) -> "PitchProgram":
        return cls(amplitude=0.0)

    def _knots(self):
        a = self.amplitude
        return ((self.t_start, 0.0), (self.t_tilted, a), (self.t_recover, a), (self.t_vertical, 0.0))

    def attitude(self, t: float) -> np.ndarray:
        """Desired ``(theta_d, psi_d)``."""
        ts, vs = zip(*self._knots())
        return np.array([float(np.interp(t, ts, vs)), 0.0])

    def rate(self, t: float) -> np.ndarray:
        """Time derivative of :meth:`attitude` (right-continuous)."""
        k = self._knots()
        for (t0, v0), (t1, v1) in zip(k, k[1:]):
            if t0 <= t < t1:
                return np.array([(v1 - v0) / (t1 - t0), 0.0])
        return np.zeros(2)


# ---------------------------------------------------------------------------
# actuator


@dataclass
class ActuatorState:
    deflection: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tau: float = kernels.ACTUATOR_TAU
    rate_limit: float = kernels.ACTUATOR_RATE
    limit: float = math.radians(7.0)

    def __post_init__(self):
        self.deflection = np.asarray(self.deflection, dtype=float).copy()
        if self.tau <= 0 or self.rate_limit <= 0 or self.limit <= 0:
            raise ValueError("actuator time constant and limits must be positive")


def actuator_update(command, state: ActuatorState, dt: float) -> ActuatorState:
    """Exact first-order lag step, then rate and position clipping.

    Same scheme as the plant kernel, which applies it once per plant step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = np.asarray(command, dtype=float)
    x = state.deflection
    target = cmd + (x - cmd) * math.exp(-dt / state.tau)
    step = np.clip(target - x, -state.rate_limit * dt, state.rate_limit * dt)
    new = np.clip(x + step, -state.limit, state.limit)
    return ActuatorState(new, state.tau, state.rate_limit, state.limit)


# ---------------------------------------------------------------------------
# spin correction


def spin_correct_rates(q: float, r: float, chi: float) -> tuple[float, float]:
    """Body pitch/yaw rates expressed in the non-spinning frame."""
    c, s = math.cos(chi), math.sin(chi)
    return q * c + r * s, -q * s + r * c


def spin_correct_inputs(mu_p_ns: float, mu_y_ns: float, chi: float) -> tuple[float, float]:
    """Gimbal commands computed in the non-spinning frame, rotated to the body."""
    c, s = math.cos(chi), math.sin(chi)
    return mu_p_ns * c - mu_y_ns * s, mu_p_ns * s + mu_y_ns * c


# ---------------------------------------------------------------------------
# LQI synthesis


@dataclass(frozen=True)
class LqiWeights:
    """Diagonal LQI weights; linear-velocity weights are fixed at zero."""

    q_q: float = 1.0
    q_r: float = 1.0
    q_theta: float = 1.0
    q_psi: float = 1.0
    q_theta_i: float = 1.0
    q_psi_i: float = 1.0
    r_mu_p: float = 1.0
    r_mu_y: float = 1.0

    def __post_init__(self):
        qs = (self.q_q, self.q_r, self.q_theta, self.q_psi, self.q_theta_i, self.q_psi_i)
        if any(not math.isfinite(q) or q < 0 for q in qs) or not any(q > 0 for q in qs):
            raise ValueError("Q weights must be non-negative with at least one positive")
        if not (self.r_mu_p > 0 and self.r_mu_y > 0):
            raise ValueError("R weights must be positive")

    def lon(self):
        return np.diag([0.0, 0.0, self.q_q, self.q_theta, self.q_theta_i]), np.array([[self.r_mu_p]])

    def lat(self):
        return np.diag([0.0, self.q_r, self.q_psi, self.q_psi_i]), np.array([[self.r_mu_y]])

    def scaled(self, lon: float = 1.0, lat: float = 1.0) -> "LqiWeights":
        return LqiWeights(self.q_q * lon, self.q_r * lat, self.q_theta * lon, self.q_psi * lat,
                          self.q_theta_i * lon, self.q_psi_i * lat, self.r_mu_p, self.r_mu_y)


@dataclass(frozen=True)
class WeightSegment:
    """Alternative weights applied to operating points with ``t_start <= t0 <= t_end``."""

    t_start: float
    t_end: float
    weights: LqiWeights


def augment_lqi(A, B, C):
    """Append integrators of ``-C x``: ``A_bar = [[A, 0], [-C, 0]]``, ``B_bar = [[B], [0]]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(n, 1)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if B.shape[0] != n or C.shape[1] != n:
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}, C {C.shape}")
    p, m = C.shape[0], B.shape[1]
    A_bar = np.block([[A, np.zeros((n, p))], [-C, np.zeros((p, p))]])
    B_bar = np.vstack([B, np.zeros((p, m))])
    return A_bar, B_bar


@dataclass
class AxisDesign:
    """LQI design for one decoupled axis at one operating point."""

    A_bar: np.ndarray
    B_bar: np.ndarray
    K_full: np.ndarray  # over all augmented states; zero on excluded states
    feedback: tuple  # augmented-state indices that are fed back
    kept: tuple  # augmented-state indices used in the Riccati solve
    excluded: tuple  # unweighted states left out of the Riccati solve
    residual: float

    @property
    def K_partial(self) -> np.ndarray:
        return self.K_full[:, list(self.feedback)]

    def closed_loop(self, partial: bool = True) -> np.ndarray:
        K = self.K_full.copy()
        if partial:
            mask = np.ones(K.shape[1], dtype=bool)
            mask[list(self.feedback)] = False
            K[:, mask] = 0.0
        return self.A_bar - self.B_bar @ K

    def closed_loop_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the designed loop ``A_bar - B_bar K_partial`` without excluded states."""
        kept = list(self.kept)
        return np.linalg.eigvals(self.closed_loop(partial=True)[np.ix_(kept, kept)])

    def full_closed_loop_eigenvalues(self) -> np.ndarray:
        """Eigenvalues with the excluded states coupled back in."""
        return np.linalg.eigvals(self.closed_loop(partial=True))


def design_axis(A, B, tracked: int, feedback: tuple, Q, R, exclude: tuple = ()) -> AxisDesign:
    """LQI design on the augmented model with the ``exclude`` states left out.

    Excluded states carry no weight and are not fed back. They must not be
    needed to stabilize the rest of the loop; callers check the full
    closed loop separately.
    """
    C = np.zeros((1, A.shape[0]))
    C[0, tracked] = 1.0
    A_bar, B_bar = augment_lqi(A, B, C)
    if any(Q[i, i] != 0.0 for i in exclude):
        raise ValueError("excluded states must have zero weight")
    kept = [i for i in range(A_bar.shape[0]) if i not in exclude]
    sol = solve_care(CareProblem(A_bar[np.ix_(kept, kept)], B_bar[kept], Q[np.ix_(kept, kept)], R))
    K_full = np.zeros((1, A_bar.shape[0]))
    K_full[0, kept] = sol.K[0]
    fb = tuple(feedback) + (A_bar.shape[0] - 1,)
    return AxisDesign(A_bar, B_bar, K_full, fb, tuple(kept), tuple(exclude), sol.residual_norm)


@dataclass
class ScheduleNode:
    t0: float
    h0: float
    K_lon: tuple  # (k_q, k_theta, k_theta_i)
    K_lat: tuple  # (k_r, k_psi, k_psi_i)
    x_c0: tuple  # (q0, r0, theta0, psi0)
    lam0: tuple  # (theta0, psi0)
    u0: tuple  # (mu_p0, mu_y0)


@dataclass
class GainSchedule:
    nodes: list

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a gain schedule needs at least one node")
        h = [n.h0 for n in self.nodes]
        if any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("schedule altitudes must be strictly increasing")
        for n in self.nodes:
            if not all(math.isfinite(k) for k in (*n.K_lon, *n.K_lat)):
                raise ValueError(f"non-finite gain at h0={n.h0}")
        self._h = np.array(h)
        self._fields = np.array([[*n.K_lon, *n.K_lat, *n.x_c0, *n.lam0, *n.u0] for n in self.nodes])

    def to_json(self) -> str:
        doc = {"schema_version": SCHEDULE_VERSION, "nodes": [asdict(n) for n in self.nodes]}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GainSchedule":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEDULE_VERSION:
            raise ValueError(f"unsupported gain schedule version {doc.get('schema_version')!r}")
        return cls([ScheduleNode(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in n.items()})
                    for n in doc["nodes"]])


@dataclass
class ScheduledGains:
    K_lon: np.ndarray
    K_lat: np.ndarray
    x_c0: np.ndarray
    lam0: np.ndarray
    u0: np.ndarray


def decoupled_model(op: OperatingPoint) -> DecoupledModel:
    return decouple(linearize(op), op)


def synthesize_node(op: OperatingPoint, weights: LqiWeights):
    """Lon and lat designs at one operating point (raises ScheduleError)."""
    where = f"t0={op.t0:g} s, h0={op.h0:.1f} m"
    try:
        dm = decoupled_model(op)
        out = []
        for sub, tracked, fb, ex, (Q, R) in (
                (dm.lon, LON_THETA, LON_FEEDBACK, LON_EXCLUDED, weights.lon()),
                (dm.lat, LAT_PSI, LAT_FEEDBACK, (), weights.lat())):
            design = design_axis(sub.A, sub.B, tracked, fb, Q, R, ex)
            kept = list(design.kept)
            if not is_controllable(design.A_bar[np.ix_(kept, kept)], design.B_bar[kept]):
                raise ScheduleError(f"augmented pair not controllable at {where}", op.t0, op.h0)
            designed = design.closed_loop_eigenvalues()
            if np.max(designed.real) >= 0:
                raise ScheduleError(
                    f"partial-feedback closed loop unstable at {where}: "
                    f"max Re = {np.max(designed.real):.3e}", op.t0, op.h0)
            out.append(design)
        return tuple(out)
    except ScheduleError:
        raise
    except (CareError, ValueError, ArithmeticError) as exc:
        raise ScheduleError(f"gain synthesis failed at {where}: {exc}", op.t0, op.h0) from exc


def weights_for(t0: float, weights: LqiWeights, segments=()) -> LqiWeights:
    for seg in segments:
        if seg.t_start <= t0 <= seg.t_end:
            return seg.weights
    return weights


def synthesize_schedule(points, weights: LqiWeights, segments=()) -> GainSchedule:
    """Gain schedule over ``points``; fails as a whole if any point fails."""
    nodes = []
    for op in points:
        lon, lat = synthesize_node(op, weights_for(op.t0, weights, segments))
        x = op.x0
        nodes.append(ScheduleNode(
            op.t0, op.h0,
            tuple(float(k) for k in lon.K_partial[0]),
            tuple(float(k) for k in lat.K_partial[0]),
            (x[3], x[4], x[5], x[6]), (x[5], x[6]), tuple(op.u_in0)))
    return GainSchedule(nodes)


def interpolate_gains(schedule: GainSchedule, h: float) -> ScheduledGains:
    """Piecewise-linear interpolation in altitude, clamped at the end nodes."""
    hs, F = schedule._h, schedule._fields
    if h <= hs[0]:
        row = F[0]
    elif h >= hs[-1]:
        row = F[-1]
    else:
        j = int(np.searchsorted(hs, h, side="right"))
        w = (h - hs[j - 1]) / (hs[j] - hs[j - 1])
        row = F[j - 1] + w * (F[j] - F[j - 1])
    return ScheduledGains(row[0:3], row[3:6], row[6:10], row[10:12], row[12:14])


# ---------------------------------------------------------------------------
# runtime control law


@dataclass
class ControllerState:
    integrators: np.ndarray = field(default_factory=lambda: np.zeros(2))
    frozen: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=bool))

    def __post_init__(self):
        self.integrators = np.asarray(self.integrators, dtype=float).copy()
        self.frozen = np.asarray(self.frozen, dtype=bool).copy()


def lqi_step(x_c_hat, lambda_d, gains: ScheduledGains, dt: float, state: ControllerState):
    """One LQI update in the non-spinning frame.

    ``x_c_hat = (q, r, theta, psi)``. The integrators accumulate the tracking
    error ``lambda_d - lambda_hat`` unless frozen by saturation; the output is
    ``-K dx_c - K_i x_i`` per axis. Returns ``(du, new_state)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x_c_hat, dtype=float)
    dx = x - gains.x_c0
    e = np.asarray(lambda_d, dtype=float) - x[2:4]
    xi = state.integrators + np.where(state.frozen, 0.0, e * dt)
    kl, kt = gains.K_lon, gains.K_lat
    du = np.array([
        -(kl[0] * dx[0] + kl[1] * dx[2] + kl[2] * xi[0]),
        -(kt[0] * dx[1] + kt[1] * dx[3] + kt[2] * xi[1]),
    ])
    return du, ControllerState(xi, state.frozen)


def total_command(du, u0, limit: float):
    """``u0 + du`` clamped to the gimbal limit; returns ``(u, saturated flags)``."""
    u = np.asarray(u0, dtype=float) + np.asarray(du, dtype=float)
    clipped = np.clip(u, -limit, limit)
    return clipped, clipped != u


@dataclass(frozen=True)
class PidGains:
    """Per-axis PID gains in the pitch sign convention; yaw mirrors the sign."""

    kp: float = -10.0
    ki: float = -20.0
    kd: float = -5.0


# Gains of the PID flown as a feedback controller. The derivative gain is
# softer than the feedforward tracker's, which sees no sensor noise.
FEEDBACK_PID = PidGains(kd=-3.0)


class PidController:
    """Pitch/yaw PID tracker with integrator freeze on saturation."""

    YAW_SIGN = -1.0

    def __init__(self, gains: PidGains = PidGains()):
        self.gains = gains
        self.integrators = np.zeros(2)
        self.frozen = np.zeros(2, dtype=bool)

    def step(self, lam_hat, lam_rate, lambda_d, lambda_d_rate, dt: float) -> np.ndarray:
        """Feedback deflections ``(mu_p, mu_y)`` for attitude ``(theta, psi)``."""
        g = self.gains
        e = np.asarray(lambda_d, dtype=float) - np.asarray(lam_hat, dtype=float)
        de = np.asarray(lambda_d_rate, dtype=float) - np.asarray(lam_rate, dtype=float)
        self.integrators = self.integrators + np.where(self.frozen, 0.0, e * dt)
        out = g.kp * e + g.ki * self.integrators + g.kd * de
        out[1] *= self.YAW_SIGN
        return out


# ---------------------------------------------------------------------------
# feedforward


@dataclass
class FeedforwardTable:
    """Nominal deflections keyed by time and altitude."""

    t: np.ndarray
    h: np.ndarray
    mu_p0: np.ndarray
    mu_y0: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.mu_p0 = np.asarray(self.mu_p0, dtype=float)
        self.mu_y0 = np.asarray(self.mu_y0, dtype=float)
        if np.any(np.diff(self.h) <= 0):
            raise ValueError("feedforward altitudes must be strictly increasing")

    def at_altitude(self, h: float) -> np.ndarray:
        return np.array([np.interp(h, self.h, self.mu_p0), np.interp(h, self.h, self.mu_y0)])

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "h", "mu_p0", "mu_y0"])
        for row in zip(self.t, self.h, self.mu_p0, self.mu_y0):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FeedforwardTable":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        if rows[0] != ["t", "h", "mu_p0", "mu_y0"]:
            raise ValueError(f"unexpected feedforward header {rows[0]}")
        data = np.array(rows[1:], dtype=float)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def initial_state(config: VehicleConfig) -> np.ndarray:
    """Launcher at rest on the pad, pointing up."""
    y = np.zeros(STATE_SIZE)
    y[12] = config.initial_mass
    return y


def generate_feedforward(program: PitchProgram, config: VehicleConfig, pid: PidGains = PidGains(),
                         dt_gnc: float = 0.01, dt_plant: float = 0.001, max_error: float = math.radians(30.0),
                         backend: str | None = None):
    """Fly the program with exact-state PID, no wind and no sensor errors.

    Returns ``(FeedforwardTable, NominalLog)``; both are sampled at the
    control rate up to the last full tick before apogee.
    """
    n_sub = int(round(dt_gnc / dt_plant))
    if n_sub < 1 or abs(n_sub * dt_plant - dt_gnc) > 1e-12:
        raise ValueError("dt_gnc must be an integer multiple of dt_plant")
    plant = kernels.make_plant(config, backend=backend, filters=False)
    y = np.zeros(kernels.N_STATE)
    y[:STATE_SIZE] = initial_state(config)
    act = np.zeros(2)
    zeros3, hold = np.zeros(3), np.zeros(kernels.N_HOLD)
    ctrl = PidController(pid)
    ts, xs, mus = [], [], []
    t = 0.0
    k = 0
    while True:
        lam = y[9:12]
        lam_d = program.attitude(t)
        err = lam_d - lam[1:3]
        if t < config.burn_time and np.max(np.abs(err)) > max_error:
            raise FeedforwardDivergence(
                f"PID attitude error {math.degrees(np.max(np.abs(err))):.1f} deg at t={t:.2f} s")
        rates = euler_rates(lam, y[6:9])
        mu = ctrl.step(lam[1:3], rates[1:3], lam_d, program.rate(t), dt_gnc)
        if t >= config.burn_time:
            mu = np.zeros(2)  # no thrust left to steer with
        mu_c = np.clip(mu, -config.gimbal_limit, config.gimbal_limit)
        ctrl.frozen = mu_c != mu
        ts.append(t)
        xs.append(y[:STATE_SIZE].copy())
        mus.append(mu_c)
        status, t_end = kernels.propagate(plant, t, y, act, mu_c, zeros3, hold, n_sub, dt_plant)
        if status == kernels.STATUS_APOGEE:
            break
        if status != kernels.STATUS_OK:
            raise FeedforwardDivergence(f"plant integration failed (status {status}) near t={t_end:.3f} s")
        k += 1
        t = k * dt_gnc
    x = np.array(xs)
    mu = np.array(mus)
    table = FeedforwardTable(np.array(ts), x[:, 0], mu[:, 0], mu[:, 1])
    log = NominalLog(np.array(ts), x, mu, config,
                     {"apogee_time": t_end, "apogee_state": y[:STATE_SIZE].copy()})
    return table, log
