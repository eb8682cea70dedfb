import math

import numpy as np
import pytest

from tvcsim import control, navigation, sim
from tvcsim.sim import LOG_COLUMNS, ScenarioConfig, SimulationError, integrate_rk4, run_closed_loop


def _integrate(rhs, x0, t_end, dt):
    x = np.asarray(x0, dtype=float)
    for k in range(int(round(t_end / dt))):
        x = integrate_rk4(rhs, x, dt, k * dt)
    return x


def test_rk4_exponential_decay():
    x = _integrate(lambda t, x: -x, [1.0], 1.0, 0.01)
    assert abs(x[0] - math.exp(-1.0)) < 1e-9


def test_rk4_fourth_order_convergence():
    rhs = lambda t, x: np.array([x[1], -x[0] + math.cos(t)])  # noqa: E731
    exact = lambda t: np.array([0.5 * t * math.sin(t), 0.5 * (math.sin(t) + t * math.cos(t))])  # noqa: E731
    errs = [np.abs(_integrate(rhs, [0.0, 0.0], 2.0, dt) - exact(2.0)).max() for dt in (0.1, 0.05, 0.025)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(3.8 < p < 4.2 for p in orders)


def test_rk4_rejects_non_finite_derivative():
    with pytest.raises(SimulationError):
        integrate_rk4(lambda t, x: np.array([np.nan]), [1.0], 0.1)
    with pytest.raises(ValueError):
        integrate_rk4(lambda t, x: x, [1.0], 0.0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(dt_plant=0.003, dt_gnc=0.01)
    with pytest.raises(ValueError):
        ScenarioConfig(controller="mpc")
    with pytest.raises(ValueError):
        ScenarioConfig(filter_mode="magic")
    assert ScenarioConfig().n_sub == 10


def test_stream_seeds_are_independent_and_stable():
    a = ScenarioConfig(seed=4).stream_seeds()
    assert a == ScenarioConfig(seed=4).stream_seeds()
    assert a[0] != a[1]
    assert a != ScenarioConfig(seed=5).stream_seeds()


def test_uncertainty_only_touches_plant(vehicle):
    sc = ScenarioConfig(uncertainty={"x_cm": 1.1})
    assert sc.plant_vehicle().x_cm_table[0][1] == pytest.approx(1.1 * vehicle.x_cm_table[0][1])
    assert sc.vehicle == vehicle


def _short(build, **changes):
    sc = ScenarioConfig(wind=sim.default_wind(), **changes)
    return run_closed_loop(sc, build.schedule, build.feedforward, stop_time=3.0)


def test_short_flight_is_reproducible(build):
    sensors = navigation.SensorSuiteConfig(alignment_time=1.0)
    a, ma = _short(build, sensors=sensors, seed=2)
    b, mb = _short(build, sensors=sensors, seed=2)
    assert a.to_csv() == b.to_csv()
    assert ma == mb
    c, _ = _short(build, sensors=sensors, seed=3)
    assert not np.array_equal(a.data, c.data)


def test_log_layout(build):
    log, m = _short(build)
    assert log.data.shape == (301, len(LOG_COLUMNS) - 1)
    np.testing.assert_allclose(np.diff(log.t), 0.01)
    text = log.to_csv("tvcsim schema_version=1")
    lines = text.splitlines()
    assert lines[0] == "# tvcsim schema_version=1"
    assert lines[1].split(",") == LOG_COLUMNS
    assert m.samples == 301
    # exact-state mode feeds back the truth
    np.testing.assert_array_equal(log.column("theta_hat"), log.column("theta"))


def test_discrete_filter_mode_runs(build):
    sensors = navigation.SensorSuiteConfig(alignment_time=1.0)
    log, _ = _short(build, sensors=sensors, filter_mode="discrete")
    err = np.abs(log.column("theta_hat") - log.column("theta"))
    assert np.degrees(err.max()) < 0.5


def test_feedforward_only_flight(build):
    sc = ScenarioConfig()
    log, _ = run_closed_loop(sc, None, build.feedforward, feedback=False, stop_time=2.0)
    np.testing.assert_array_equal(log.column("dmu_p"), 0.0)


def test_pid_flights_use_feedback_gains(build):
    base = ScenarioConfig(controller="pid", wind=sim.default_wind())
    soft = base.with_changes(feedback_pid=control.PidGains(kd=-1.0))
    logs = [run_closed_loop(sc, build.schedule, build.feedforward, stop_time=20.0)[0] for sc in (base, soft)]
    assert not np.array_equal(logs[0].column("dmu_p"), logs[1].column("dmu_p"))
    # the feedforward gains do not enter a feedback flight
    other = base.with_changes(pid=control.PidGains(kd=-1.0))
    log, _ = run_closed_loop(other, build.schedule, build.feedforward, stop_time=20.0)
    np.testing.assert_array_equal(log.data, logs[0].data)


def test_lqi_needs_schedule(build):
    with pytest.raises(ValueError):
        run_closed_loop(ScenarioConfig(), None, build.feedforward, stop_time=1.0)


def test_schedule_coverage_guard(build):
    y0 = control.initial_state(ScenarioConfig().vehicle)
    y0[0] = 20_000.0
    sc = ScenarioConfig(initial_state=tuple(y0))
    with pytest.raises(sim.ScheduleCoverageError):
        run_closed_loop(sc, build.schedule, build.feedforward, stop_time=1.0)


def test_divergence_is_reported(build):
    y0 = control.initial_state(ScenarioConfig().vehicle)
    y0[10] = math.radians(40.0)
    with pytest.raises(SimulationError) as info:
        run_closed_loop(ScenarioConfig(initial_state=tuple(y0)), build.schedule, build.feedforward, stop_time=1.0)
    assert info.value.t == 0.0


def test_linear_step_settles_to_reference(points):
    t, y = sim.linear_step_response(sim.nearest_point(points, 35.0), sim.DEFAULT_WEIGHTS, "yaw")
    assert y[0] == 0.0
    assert y[-1] == pytest.approx(1.0, abs=1e-3)


def test_pole_analysis(points):
    rows = sim.pole_analysis(points, sim.DEFAULT_WEIGHTS)
    assert len(rows) == len(points)
    assert all(r.closed_stable and r.open_unstable for r in rows)
    text = sim.poles_to_csv(rows, "h")
    assert text.splitlines()[1] == "t0,h0,mode,loop,real,imag,stable"


def test_sweep_rejects_inadmissible_factor(build):
    with pytest.raises(ValueError):
        sim.robustness_sweep(ScenarioConfig(), build, "x_cm", [2.0])


def test_default_wind_profile():
    w = sim.default_wind()
    assert w.gust_intensity > 0
    speeds = [row[1] for row in w.mean_profile]
    assert speeds == sorted(speeds)
