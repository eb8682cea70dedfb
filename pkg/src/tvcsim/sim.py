"""Closed-loop simulation and the experiments built on it.

The plant (and, in continuous filter mode, the complementary filters) is
integrated by the compiled kernel with fixed-step RK4 at ``dt_plant``; sensing,
navigation and control run in Python at ``dt_gnc`` with zero-order hold.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import analysis, control, kernels, navigation
from .control import FeedforwardTable, GainSchedule, LqiWeights, PidGains, PitchProgram
from .defaults import default_vehicle
from .environment import WindField, WindModelConfig, gravity
from .frames import SingularityError, euler_rates
from .linearize import OperatingPoint, extract_operating_points
from .navigation import SensorSuite, SensorSuiteConfig
from .vehicle import STATE_SIZE, VehicleConfig

DEFAULT_WEIGHTS = LqiWeights(q_q=0.3, q_r=0.3, q_theta=300.0, q_psi=300.0, q_theta_i=20000.0,
                             q_psi_i=20000.0, r_mu_p=1.0, r_mu_y=1.0)
DIVERGENCE_ANGLE = math.radians(30.0)
COVERAGE_MARGIN = 1000.0  # m of altitude tolerated beyond the scheduled range


def default_wind() -> WindModelConfig:
    """Moderate shear towards 45 deg plus light Dryden gusts."""
    return WindModelConfig(
        mean_profile=[[0.0, 3.0, math.radians(45.0)], [1000.0, 6.0, math.radians(45.0)],
                      [5000.0, 9.0, math.radians(45.0)]],
        gust_intensity=1.0,
    )


class SimulationError(RuntimeError):
    """The closed loop failed; carries the time and plant state at failure."""

    def __init__(self, message: str, t: float, state=None):
        super().__init__(f"{message} (t={t:.3f} s)")
        self.t = t
        self.state = None if state is None else np.asarray(state, dtype=float).copy()


class ScheduleCoverageError(SimulationError):
    """The estimated altitude left the range covered by the gain schedule."""


# ---------------------------------------------------------------------------
# integration


def integrate_rk4(rhs, state, dt: float, t: float = 0.0):
    """One classical Runge-Kutta step of ``x' = rhs(t, x)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(rhs(t, x), dtype=float)
    k2 = np.asarray(rhs(t + 0.5 * dt, x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(rhs(t + 0.5 * dt, x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(rhs(t + dt, x + dt * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise SimulationError("non-finite derivative", t, x)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# scenario


@dataclass
class ScenarioConfig:
    """Everything that defines one run.

    ``sensors=None`` selects exact-state feedback. ``uncertainty`` maps a
    :meth:`VehicleConfig.scaled` parameter to a factor applied to the plant
    only; controller and estimator keep the nominal vehicle.
    """

    vehicle: VehicleConfig = field(default_factory=default_vehicle)
    program: PitchProgram = field(default_factory=PitchProgram)
    wind: WindModelConfig | None = None
    sensors: SensorSuiteConfig | None = None
    weights: LqiWeights = DEFAULT_WEIGHTS
    weight_segments: tuple = ()
    controller: str = "lqi"
    pid: PidGains = PidGains()
    feedback_pid: PidGains = control.FEEDBACK_PID
    uncertainty: dict = field(default_factory=dict)
    initial_state: tuple | None = None
    dt_plant: float = 0.001
    dt_gnc: float = 0.01
    duration: float = 150.0
    seed: int = 0
    filter_mode: str = "continuous"
    spin_source: str = "integrated"
    op_interval: float = 5.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.dt_plant <= 0 or self.dt_gnc <= 0:
            raise ValueError("time steps must be positive")
        n = self.dt_gnc / self.dt_plant
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("dt_gnc must be an integer multiple of dt_plant")
        if self.controller not in ("lqi", "pid"):
            raise ValueError(f"controller must be 'lqi' or 'pid', got {self.controller!r}")
        if self.filter_mode not in ("continuous", "discrete"):
            raise ValueError("filter_mode must be 'continuous' or 'discrete'")
        if self.spin_source not in ("integrated", "roll"):
            raise ValueError("spin_source must be 'integrated' or 'roll'")

    @property
    def n_sub(self) -> int:
        return int(round(self.dt_gnc / self.dt_plant))

    def plant_vehicle(self) -> VehicleConfig:
        cfg = self.vehicle
        for name, factor in sorted(self.uncertainty.items()):
            cfg = cfg.scaled(name, float(factor))
        return cfg

    def stream_seeds(self) -> tuple[int, int]:
        """Independent seeds for the wind and sensor streams."""
        ss = np.random.SeedSequence(self.seed)
        wind_ss, sens_ss = ss.spawn(2)
        return int(wind_ss.generate_state(1)[0]), int(sens_ss.generate_state(1)[0])

    def with_changes(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# logging


LOG_COLUMNS = (
    ["t"]
    + ["px", "py", "pz", "u", "v", "w", "p", "q", "r", "phi", "theta", "psi", "m"]
    + ["chi", "phi_hat", "theta_hat", "psi_hat", "p_hat", "q_hat", "r_hat",
       "px_hat", "py_hat", "pz_hat", "vx_hat", "vy_hat", "vz_hat",
       "bwx_hat", "bwy_hat", "bwz_hat", "bax_hat", "bay_hat", "baz_hat"]
    + ["theta_d", "psi_d", "mu_p0", "mu_y0", "dmu_p", "dmu_y", "mu_p_cmd", "mu_y_cmd",
       "mu_p", "mu_y", "wind_x", "wind_y", "wind_z", "sat_p", "sat_y", "int_p", "int_y"]
)


@dataclass
class SimLog:
    """Per-tick samples at the GNC rate; angles in radians."""

    t: np.ndarray
    data: np.ndarray  # rows aligned with ``t``, columns LOG_COLUMNS[1:]
    events: list = field(default_factory=list)
    apogee_time: float | None = None
    apogee_state: np.ndarray | None = None
    burn_time: float | None = None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, LOG_COLUMNS.index(name) - 1]

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        for ev_t, name in self.events:
            buf.write(f"# event {name} t={ev_t!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for ti, row in zip(self.t, self.data):
            w.writerow([repr(float(ti)), *(repr(float(v)) for v in row)])
        return buf.getvalue()


RunMetrics = analysis.RunMetrics  # re-exported for callers of run_closed_loop


# ---------------------------------------------------------------------------
# closed loop


def _nominal_pcf_gains() -> np.ndarray:
    return np.vstack(navigation.PCF_GAINS)


def _initial_nav(scenario: ScenarioConfig, sensors: SensorSuite, y13) -> navigation.NavState:
    """Static pad alignment of both filters before launch."""
    nav = navigation.NavState(p_hat=np.asarray(y13[0:3], dtype=float).copy())
    c = scenario.sensors
    steps = int(round(c.alignment_time * c.rate_hz))
    dt = 1.0 / c.rate_hz
    pad_force = np.array([gravity(float(y13[0])), 0.0, 0.0])
    y_pad = np.asarray(y13, dtype=float)
    for _ in range(steps):
        rd, _ = navigation.sense(0.0, y_pad, pad_force, sensors)
        nav = navigation.acf_update(nav, rd.lambda_r, rd.omega_r, dt)
        nav = navigation.pcf_update(nav, rd.p_r, rd.a_r, nav.lam_hat, dt)
    return nav


class _Controller:
    """Feedback law selected by the scenario, operating in the non-spinning frame."""

    def __init__(self, scenario: ScenarioConfig, schedule: GainSchedule | None, feedback: bool,
                 step=None):
        self.scenario = scenario
        self.schedule = schedule
        self.feedback = feedback
        self.kind = scenario.controller
        self.lqi_state = control.ControllerState()
        self.pid = control.PidController(scenario.feedback_pid)
        self.limit = scenario.vehicle.gimbal_limit
        self.step = step  # (t_inject, axis index, magnitude rad) or None
        if self.kind == "lqi" and feedback and schedule is None:
            raise ValueError("LQI feedback needs a gain schedule")
        if schedule is not None:
            self.h_range = (schedule.nodes[0].h0, schedule.nodes[-1].h0)

    def reference(self, t: float):
        lam_d = self.scenario.program.attitude(t)
        if self.step is not None and t >= self.step[0]:
            lam_d = lam_d.copy()
            lam_d[self.step[1]] += self.step[2]
        return lam_d, self.scenario.program.rate(t)

    def __call__(self, t, lam_hat, w_hat, h_hat, chi, u0):
        lam_d, lam_d_rate = self.reference(t)
        if t >= self.scenario.vehicle.burn_time:
            # no thrust, no authority: centre the gimbal and stop integrating
            z = np.zeros(2)
            integ = self.lqi_state.integrators if self.kind == "lqi" else self.pid.integrators
            return lam_d, z, z, z, np.zeros(2, dtype=bool), integ
        q_ns, r_ns = control.spin_correct_rates(w_hat[1], w_hat[2], chi)
        du = np.zeros(2)
        if self.feedback:
            if self.kind == "lqi":
                if h_hat > self.h_range[1] + COVERAGE_MARGIN or h_hat < self.h_range[0] - COVERAGE_MARGIN:
                    raise ScheduleCoverageError(
                        f"altitude estimate {h_hat:.1f} m outside scheduled range "
                        f"[{self.h_range[0]:.1f}, {self.h_range[1]:.1f}] m", t)
                gains = control.interpolate_gains(self.schedule, h_hat)
                du, self.lqi_state = control.lqi_step((q_ns, r_ns, lam_hat[1], lam_hat[2]), lam_d,
                                                      gains, self.scenario.dt_gnc, self.lqi_state)
            else:
                rates = euler_rates(lam_hat, (w_hat[0], q_ns, r_ns))
                du = self.pid.step(lam_hat[1:3], rates[1:3], lam_d, lam_d_rate, self.scenario.dt_gnc)
        u_ns, sat = control.total_command(du, u0, self.limit)
        self.lqi_state.frozen = sat.copy()
        self.pid.frozen = sat.copy()
        cmd = np.array(control.spin_correct_inputs(u_ns[0], u_ns[1], chi))
        integ = self.lqi_state.integrators if self.kind == "lqi" else self.pid.integrators
        return lam_d, du, u_ns, cmd, sat, integ


def run_closed_loop(scenario: ScenarioConfig, schedule: GainSchedule | None, feedforward: FeedforwardTable,
                    feedback: bool = True, step=None, stop_time: float | None = None,
                    backend: str | None = None):
    """Fly ``scenario`` until apogee (or ``duration``/``stop_time``).

    ``feedback=False`` flies the feedforward alone. ``step`` optionally adds
    ``(t_inject, axis, magnitude_rad)`` to the attitude reference
    (axis 0 = pitch, 1 = yaw). Returns ``(SimLog, RunMetrics)``.
    """
    plant_cfg = scenario.plant_vehicle()
    estimated = scenario.sensors is not None
    continuous = scenario.filter_mode == "continuous"
    plant = kernels.make_plant(plant_cfg, backend=backend, l_acf=navigation.ACF_GAIN,
                               l_pcf=_nominal_pcf_gains(), filters=estimated and continuous)
    wind_seed, sensor_seed = scenario.stream_seeds()
    wind = WindField(dataclasses.replace(scenario.wind, seed=wind_seed), scenario.dt_gnc) \
        if scenario.wind is not None else None
    y = np.zeros(kernels.N_STATE)
    y[:STATE_SIZE] = (control.initial_state(plant_cfg) if scenario.initial_state is None
                      else np.asarray(scenario.initial_state, dtype=float))
    act = np.zeros(2)
    hold = np.zeros(kernels.N_HOLD)
    sensors = None
    nav = None
    if estimated:
        sensors = SensorSuite(dataclasses.replace(scenario.sensors, seed=sensor_seed))
        nav = _initial_nav(scenario, sensors, y[:STATE_SIZE])
        y[14:29] = nav.as_array()
    ctrl = _Controller(scenario, schedule, feedback, step)
    end = scenario.duration if stop_time is None else min(stop_time, scenario.duration)
    dt, n_sub = scenario.dt_gnc, scenario.n_sub
    n_max = int(math.floor(end / dt + 1e-9))
    rows = np.empty((n_max + 1, len(LOG_COLUMNS) - 1))
    times = np.empty(n_max + 1)
    events = []
    wind_vec = np.zeros(3)
    prev_read = None
    burnout_logged = False
    apogee_time, apogee_state = None, None
    k = 0
    t = 0.0
    while True:
        t = k * dt
        truth = y[:STATE_SIZE]
        if wind is not None:
            wind_vec = wind.sample(t, float(truth[0]))
        if estimated:
            if not continuous:
                if prev_read is not None:
                    nav = navigation.acf_update(nav, prev_read.lambda_r, prev_read.omega_r, dt)
                    nav = navigation.pcf_update(nav, prev_read.p_r, prev_read.a_r, nav.lam_hat, dt)
                    y[14:29] = nav.as_array()
                sf = plant.specific_force(t, y, act[0], act[1], wind_vec)
                prev_read, hold = navigation.sense(t, truth, sf, sensors)
                omega_r = prev_read.omega_r
            else:
                hold = sensors.draw()
                omega_r = truth[6:9] + hold[3:6] + hold[6:9]
            lam_hat = y[14:17].copy()
            w_hat = omega_r - y[17:20]
            p_hat = y[20:23].copy()
            v_hat = y[23:26].copy()
            b_w, b_a = y[17:20].copy(), y[26:29].copy()
        else:
            lam_hat, w_hat, p_hat = truth[9:12].copy(), truth[6:9].copy(), truth[0:3].copy()
            v_hat = np.zeros(3)
            b_w = b_a = np.zeros(3)
        chi = float(y[13]) if scenario.spin_source == "integrated" else float(lam_hat[0])
        err = np.abs(scenario.program.attitude(t) - truth[10:12])
        if np.max(err) > DIVERGENCE_ANGLE:
            raise SimulationError(f"attitude error {math.degrees(np.max(err)):.1f} deg exceeds "
                                  f"{math.degrees(DIVERGENCE_ANGLE):.0f} deg", t, truth)
        u0 = feedforward.at_altitude(float(p_hat[0]))
        try:
            lam_d, du, u_ns, cmd, sat, integ = ctrl(t, lam_hat, w_hat, float(p_hat[0]), chi, u0)
        except SingularityError as exc:
            raise SimulationError(str(exc), t, truth) from exc
        if not burnout_logged and t >= plant_cfg.burn_time:
            events.append((plant_cfg.burn_time, "burnout"))
            burnout_logged = True
        if np.any(sat):
            if not events or events[-1][1] != "saturation" or events[-1][0] < t - 1.5 * dt:
                events.append((t, "saturation"))
            else:
                events[-1] = (events[-1][0], "saturation")
        times[k] = t
        rows[k] = np.concatenate([truth, [chi], lam_hat, w_hat, p_hat, v_hat, b_w, b_a,
                                  lam_d, u0, du, cmd, act, wind_vec, sat.astype(float), integ])
        if k >= n_max:
            break
        status, t_end = kernels.propagate(plant, t, y, act, cmd, wind_vec, hold, n_sub,
                                          scenario.dt_plant)
        if status == kernels.STATUS_APOGEE:
            apogee_time, apogee_state = t_end, y[:STATE_SIZE].copy()
            events.append((t_end, "apogee"))
            break
        if status == kernels.STATUS_SINGULAR:
            raise SimulationError("Euler-angle singularity in the plant", t_end, y[:STATE_SIZE])
        if status != kernels.STATUS_OK:
            raise SimulationError("plant state became non-finite", t_end, y[:STATE_SIZE])
        k += 1
    log = SimLog(times[:k + 1].copy(), rows[:k + 1].copy(), events, apogee_time, apogee_state,
                 plant_cfg.burn_time)
    return log, analysis.compute_metrics(log)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class BuildResult:
    feedforward: FeedforwardTable
    points: list
    schedule: GainSchedule
    nominal: object  # NominalLog
    diagnostics: list


def run_nominal_and_build(scenario: ScenarioConfig, backend: str | None = None) -> BuildResult:
    """Feedforward flight, operating-point extraction and gain synthesis."""
    ff, log = control.generate_feedforward(scenario.program, scenario.vehicle, scenario.pid,
                                           scenario.dt_gnc, scenario.dt_plant, backend=backend)
    diagnostics = []
    points = extract_operating_points(log, scenario.op_interval, diagnostics)
    schedule = control.synthesize_schedule(points, scenario.weights, scenario.weight_segments)
    return BuildResult(ff, points, schedule, log, diagnostics)


# ---------------------------------------------------------------------------
# experiments


def nearest_point(points, t: float) -> OperatingPoint:
    return min(points, key=lambda p: abs(p.t0 - t))


def linear_step_response(op: OperatingPoint, weights: LqiWeights, axis: str = "pitch",
                         duration: float = 3.0, dt: float = 1e-3):
    """Unit step of the attitude reference on the closed-loop LTI model at ``op``.

    The reference enters through the integrator, as in the runtime law; the
    partial-feedback gains act on the full decoupled model.
    """
    lon, lat = control.synthesize_node(op, weights)
    design, out = (lon, control.LON_THETA) if axis == "pitch" else (lat, control.LAT_PSI)
    Acl = design.closed_loop(partial=True)
    n = Acl.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = Acl
    M[n - 1, n] = 1.0  # integrator input
    Ed = expm(M * dt)
    steps = int(round(duration / dt))
    z = np.zeros(n + 1)
    z[n] = 1.0
    ys = np.empty(steps + 1)
    ys[0] = 0.0
    for i in range(steps):
        z = Ed @ z
        ys[i + 1] = z[out]
    return np.arange(steps + 1) * dt, ys


@dataclass
class StepResult:
    linear: analysis.StepMetrics
    nonlinear: analysis.StepMetrics | None
    t_point: float
    traces: dict


def step_response_experiment(scenario: ScenarioConfig, build: BuildResult, t_inject: float,
                             magnitude_deg: float = 3.0, axis: str = "pitch", window: float = 2.0,
                             nonlinear: bool = True, backend: str | None = None) -> StepResult:
    """Step metrics in the linear domain and, optionally, in the nonlinear loop.

    The nonlinear response is the difference between a run with the step and
    an otherwise identical disturbance-free run without it.
    """
    if axis not in ("pitch", "yaw"):
        raise ValueError("axis must be 'pitch' or 'yaw'")
    op = nearest_point(build.points, t_inject)
    t_lin, y_lin = linear_step_response(op, scenario.weights if not scenario.weight_segments else
                                        control.weights_for(op.t0, scenario.weights, scenario.weight_segments),
                                        axis)
    lin = analysis.step_metrics(t_lin, y_lin, 1.0)
    if not (math.isfinite(lin.settling_time) and np.all(np.isfinite(y_lin))):
        raise SimulationError(f"linear step response does not settle at t0={op.t0:g} s", t_inject)
    traces = {"linear_t": t_lin, "linear_y": y_lin}
    nl = None
    if nonlinear:
        base = scenario.with_changes(wind=None, sensors=None, controller="lqi")
        idx = 0 if axis == "pitch" else 1
        mag = math.radians(magnitude_deg)
        stop = t_inject + window
        log0, _ = run_closed_loop(base, build.schedule, build.feedforward, stop_time=stop, backend=backend)
        log1, _ = run_closed_loop(base, build.schedule, build.feedforward, stop_time=stop,
                                  step=(t_inject, idx, mag), backend=backend)
        col = "theta" if axis == "pitch" else "psi"
        n = min(log0.t.size, log1.t.size)
        sel = log1.t[:n] >= t_inject - 1e-9
        t_nl = log1.t[:n][sel]
        y_nl = (log1.column(col)[:n] - log0.column(col)[:n])[sel]
        nl = analysis.step_metrics(t_nl, y_nl, mag)
        traces.update(nonlinear_t=t_nl - t_nl[0], nonlinear_y=y_nl / mag,
                      nonlinear_mu=(log1.column("mu_p" if idx == 0 else "mu_y")[:n][sel]))
    return StepResult(lin, nl, op.t0, traces)


@dataclass
class PoleRow:
    t0: float
    h0: float
    open_lon: np.ndarray
    open_lat: np.ndarray
    closed_lon: np.ndarray  # designed loop (speed state excluded)
    closed_lat: np.ndarray
    closed_lon_full: np.ndarray  # with the axial-speed state coupled back in

    @property
    def open_unstable(self) -> bool:
        return bool(max(self.open_lon.real.max(), self.open_lat.real.max()) > 0)

    @property
    def closed_stable(self) -> bool:
        return bool(max(self.closed_lon.real.max(), self.closed_lat.real.max()) < 0)


def pole_analysis(points, weights: LqiWeights, segments=()) -> list:
    """Open- and closed-loop eigenvalues at each operating point."""
    rows = []
    for op in points:
        dm = control.decoupled_model(op)
        lon, lat = control.synthesize_node(op, control.weights_for(op.t0, weights, segments))
        rows.append(PoleRow(op.t0, op.h0, np.linalg.eigvals(dm.lon.A), np.linalg.eigvals(dm.lat.A),
                            lon.closed_loop_eigenvalues(), lat.closed_loop_eigenvalues(),
                            lon.full_closed_loop_eigenvalues()))
    return rows


def poles_to_csv(rows, header: str = "") -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t0", "h0", "mode", "loop", "real", "imag", "stable"])
    for r in rows:
        for mode, loop, eig in (("lon", "open", r.open_lon), ("lat", "open", r.open_lat),
                                ("lon", "closed", r.closed_lon), ("lat", "closed", r.closed_lat),
                                ("lon", "closed_with_speed", r.closed_lon_full)):
            for e in sorted(eig, key=lambda z: (z.real, z.imag)):
                w.writerow([repr(r.t0), repr(r.h0), mode, loop, repr(float(e.real)),
                            repr(float(e.imag)), int(e.real < 0)])
    return buf.getvalue()


@dataclass
class SweepRow:
    factor: float
    metrics: RunMetrics | None
    error: str | None = None

    @property
    def stable(self) -> bool:
        return self.metrics is not None


def robustness_sweep(scenario: ScenarioConfig, build: BuildResult, parameter: str, factors,
                     admissible=(0.5, 1.5), backend: str | None = None) -> list:
    """Re-fly ``scenario`` with one plant parameter scaled; failures become rows."""
    rows = []
    for f in factors:
        f = float(f)
        if not admissible[0] <= f <= admissible[1]:
            raise ValueError(f"factor {f} outside admissible range {admissible}")
        sc = scenario.with_changes(uncertainty={**scenario.uncertainty, parameter: f})
        try:
            _, metrics = run_closed_loop(sc, build.schedule, build.feedforward, backend=backend)
            rows.append(SweepRow(f, metrics))
        except (SimulationError, SingularityError) as exc:
            rows.append(SweepRow(f, None, str(exc)))
    return rows
