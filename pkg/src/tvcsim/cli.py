"""Command-line interface: ``tvcsim <command> ...``.

Commands: ``init-scenario``, ``build``, ``fly``, ``poles``, ``step``, ``sweep``
and ``compare``. Outputs go to ``--out`` or ``$TVCSIM_OUT_DIR`` (default
``./tvcsim-out``). Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, control, sim
from .control import FeedforwardTable, GainSchedule, LqiWeights, PidGains, PitchProgram, WeightSegment
from .environment import WindModelConfig
from .linearize import OperatingPoint
from .navigation import SensorSuiteConfig
from .vehicle import VehicleConfig

SCHEMA_VERSION = 1
OUT_ENV = "TVCSIM_OUT_DIR"
DEFAULT_OUT = "tvcsim-out"


class ConfigError(ValueError):
    """Invalid scenario file or command-line input (exit code 2)."""


# ---------------------------------------------------------------------------
# scenario files


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _listify(value):
    if isinstance(value, (tuple, list)):
        return [_listify(v) for v in value]
    if isinstance(value, np.ndarray):
        return _listify(value.tolist())
    return value


def _build(cls, data, where: str, tuples: bool = True):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {k: (_tuplify(v) if tuples else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _plain(obj) -> dict:
    return {f.name: _listify(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def scenario_to_dict(sc: sim.ScenarioConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "vehicle": _plain(sc.vehicle),
        "program": _plain(sc.program),
        "wind": None if sc.wind is None else _plain(sc.wind),
        "sensors": None if sc.sensors is None else _plain(sc.sensors),
        "weights": _plain(sc.weights),
        "weight_segments": [{"t_start": s.t_start, "t_end": s.t_end, "weights": _plain(s.weights)}
                            for s in sc.weight_segments],
        "controller": sc.controller,
        "pid": _plain(sc.pid),
        "feedback_pid": _plain(sc.feedback_pid),
        "uncertainty": dict(sorted(sc.uncertainty.items())),
        "initial_state": None if sc.initial_state is None else _listify(sc.initial_state),
        "dt_plant": sc.dt_plant,
        "dt_gnc": sc.dt_gnc,
        "duration": sc.duration,
        "seed": sc.seed,
        "filter_mode": sc.filter_mode,
        "spin_source": sc.spin_source,
        "op_interval": sc.op_interval,
    }


SCENARIO_KEYS = set(scenario_to_dict(sim.ScenarioConfig()))


def scenario_from_dict(doc: dict) -> sim.ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    version = doc.get("schema_version")
    if version is None:
        raise ConfigError("scenario is missing schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported scenario schema_version {version!r} (expected {SCHEMA_VERSION})")
    unknown = sorted(set(doc) - SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"scenario: unknown field(s) {', '.join(unknown)}")
    kw = {}
    if "vehicle" in doc:
        kw["vehicle"] = _build(VehicleConfig, doc["vehicle"], "vehicle")
    if "program" in doc:
        kw["program"] = _build(PitchProgram, doc["program"], "program")
    if doc.get("wind") is not None:
        kw["wind"] = _build(WindModelConfig, doc["wind"], "wind", tuples=False)
    if doc.get("sensors") is not None:
        kw["sensors"] = _build(SensorSuiteConfig, doc["sensors"], "sensors")
    if "weights" in doc:
        kw["weights"] = _build(LqiWeights, doc["weights"], "weights")
    if "weight_segments" in doc:
        segs = []
        for i, s in enumerate(doc["weight_segments"]):
            if set(s) != {"t_start", "t_end", "weights"}:
                raise ConfigError(f"weight_segments[{i}]: expected t_start, t_end, weights")
            segs.append(WeightSegment(float(s["t_start"]), float(s["t_end"]),
                                      _build(LqiWeights, s["weights"], f"weight_segments[{i}].weights")))
        kw["weight_segments"] = tuple(segs)
    if "pid" in doc:
        kw["pid"] = _build(PidGains, doc["pid"], "pid")
    if "feedback_pid" in doc:
        kw["feedback_pid"] = _build(PidGains, doc["feedback_pid"], "feedback_pid")
    if doc.get("initial_state") is not None:
        kw["initial_state"] = tuple(float(v) for v in doc["initial_state"])
    for key in ("controller", "uncertainty", "dt_plant", "dt_gnc", "duration", "seed",
                "filter_mode", "spin_source", "op_interval"):
        if key in doc:
            kw[key] = doc[key]
    try:
        return sim.ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenario: {exc}") from None


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_hash(sc: sim.ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(scenario_to_dict(sc)).encode()).hexdigest()[:16]


def load_scenario(path: str | None) -> sim.ScenarioConfig:
    if path is None:
        return default_scenario()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc)


def default_scenario() -> sim.ScenarioConfig:
    """Shipped scenario: wind on, estimated state, LQI."""
    return sim.ScenarioConfig(wind=sim.default_wind(), sensors=SensorSuiteConfig())


# ---------------------------------------------------------------------------
# artifacts


def _provenance(sc: sim.ScenarioConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "scenario_hash": scenario_hash(sc)}


def _csv_header(sc: sim.ScenarioConfig) -> str:
    return f"tvcsim schema_version={SCHEMA_VERSION} scenario_hash={scenario_hash(sc)}"


def _write_json(path: Path, sc: sim.ScenarioConfig, body: dict) -> None:
    doc = {**_provenance(sc), **body}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_text(path: Path, text: str) -> None:
    path.write_text(text)


def write_build(out: Path, sc: sim.ScenarioConfig, build: sim.BuildResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "feedforward.csv", build.feedforward.to_csv(_csv_header(sc)))
    _write_json(out / "operating_points.json", sc,
                {"points": [p.to_dict() for p in build.points], "diagnostics": build.diagnostics})
    sched = json.loads(build.schedule.to_json())
    _write_json(out / "gain_schedule.json", sc, {"schedule": sched})


def read_build(art: Path) -> sim.BuildResult:
    try:
        ff = FeedforwardTable.from_csv((art / "feedforward.csv").read_text())
        pts_doc = json.loads((art / "operating_points.json").read_text())
        sched_doc = json.loads((art / "gain_schedule.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"missing build artifact {exc.filename}; run 'tvcsim build' first") from None
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"unreadable build artifacts in {art}: {exc}") from None
    points = [OperatingPoint.from_dict(d) for d in pts_doc["points"]]
    schedule = GainSchedule.from_json(json.dumps(sched_doc["schedule"]))
    return sim.BuildResult(ff, points, schedule, None, list(pts_doc.get("diagnostics", [])))


def _build_summary(build: sim.BuildResult) -> dict:
    log = build.nominal
    speed = np.linalg.norm(log.x[:, 3:6], axis=1)
    return {"apogee_m": float(log.extras["apogee_state"][0]),
            "max_velocity_mps": float(max(speed.max(), np.linalg.norm(log.extras["apogee_state"][3:6]))),
            "time_to_apogee_s": float(log.extras["apogee_time"]),
            "operating_points": len(build.points), "schedule_nodes": len(build.schedule.nodes)}


# ---------------------------------------------------------------------------
# plotting (optional)


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise ConfigError("--plot needs matplotlib (pip install 'artifact[plot]')") from None
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "tvcsim"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


# ---------------------------------------------------------------------------
# commands


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _artifacts(args, out: Path) -> sim.BuildResult:
    return read_build(Path(args.artifacts) if args.artifacts else out)


def cmd_init_scenario(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        raise ConfigError(f"{path} exists (use --force to overwrite)")
    path.write_text(json.dumps(scenario_to_dict(default_scenario()), indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_build(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    build = sim.run_nominal_and_build(sc)
    write_build(out, sc, build)
    summary = _build_summary(build)
    _write_json(out / "build_summary.json", sc, {"summary": summary, "diagnostics": build.diagnostics})
    print(f"apogee          {summary['apogee_m']:9.1f} m")
    print(f"max velocity    {summary['max_velocity_mps']:9.2f} m/s")
    print(f"time to apogee  {summary['time_to_apogee_s']:9.2f} s")
    print(f"operating points {summary['operating_points']}, schedule nodes {summary['schedule_nodes']}")
    for d in build.diagnostics:
        print(f"note: {d}")
    return 0


def _fly_scenario(args, sc: sim.ScenarioConfig) -> sim.ScenarioConfig:
    changes = {}
    if args.wind is True and sc.wind is None:
        changes["wind"] = sim.default_wind()
    elif args.wind is False:
        changes["wind"] = None
    if args.exact_state:
        changes["sensors"] = None
    if args.controller:
        changes["controller"] = args.controller
    if args.seed is not None:
        changes["seed"] = args.seed
    return sc.with_changes(**changes)


def cmd_fly(args) -> int:
    sc = _fly_scenario(args, load_scenario(args.scenario))
    out = _out_dir(args)
    build = _artifacts(args, out)
    log, metrics = sim.run_closed_loop(sc, build.schedule, build.feedforward)
    _write_text(out / "run.csv", log.to_csv(_csv_header(sc)))
    _write_json(out / "metrics.json", sc, {"metrics": metrics.to_dict(), "controller": sc.controller,
                                           "exact_state": sc.sensors is None, "seed": sc.seed})
    print(f"sum sq pitch error {metrics.sum_sq_pitch_error:.4f} deg^2, yaw {metrics.sum_sq_yaw_error:.4f} deg^2")
    print(f"rms mu_p {metrics.rms_mu_p:.4f} deg, mu_y {metrics.rms_mu_y:.4f} deg")
    print(f"apogee {metrics.apogee:.1f} m at {metrics.time_to_apogee:.2f} s")
    if args.plot:
        plt = _pyplot()
        fig, axs = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        axs[0].plot(log.t, np.degrees(log.column("theta_d")), label="theta_d")
        axs[0].plot(log.t, np.degrees(log.column("theta")), label="theta")
        axs[0].set_ylabel("deg")
        axs[0].legend()
        axs[1].plot(log.t, np.degrees(log.column("mu_p")), label="mu_p")
        axs[1].plot(log.t, np.degrees(log.column("mu_y")), label="mu_y")
        axs[1].set_xlabel("t (s)")
        axs[1].set_ylabel("deg")
        axs[1].legend()
        _save(fig, out / "run.svg")
    return 0


def cmd_poles(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    build = _artifacts(args, out)
    rows = sim.pole_analysis(build.points, sc.weights, sc.weight_segments)
    _write_text(out / "poles.csv", sim.poles_to_csv(rows, _csv_header(sc)))
    bad = [r.t0 for r in rows if not r.closed_stable]
    print(f"{len(rows)} points; closed loop stable at {len(rows) - len(bad)}; "
          f"open loop unstable at {sum(r.open_unstable for r in rows)}")
    if args.plot:
        plt = _pyplot()
        fig, axs = plt.subplots(1, 2, figsize=(10, 4))
        for r in rows:
            axs[0].plot(r.open_lon.real, r.open_lon.imag, "x", color="C0")
            axs[1].plot(r.closed_lon.real, r.closed_lon.imag, "x", color="C1")
        axs[0].set_title("open loop (lon)")
        axs[1].set_title("closed loop (lon)")
        for ax in axs:
            ax.axvline(0.0, color="k", lw=0.5)
            ax.set_xlabel("Re")
            ax.set_ylabel("Im")
        _save(fig, out / "poles.svg")
    return 1 if bad else 0


def cmd_step(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    build = _artifacts(args, out)
    res = sim.step_response_experiment(sc, build, args.t, args.deg, args.axis,
                                       nonlinear=not args.linear_only)
    body = {"t_inject": args.t, "t_point": res.t_point, "magnitude_deg": args.deg, "axis": args.axis,
            "linear": dataclasses.asdict(res.linear),
            "nonlinear": None if res.nonlinear is None else dataclasses.asdict(res.nonlinear)}
    _write_json(out / "step.json", sc, body)
    lines = [f"# {_csv_header(sc)}", "mode,t,response"]
    lines += [f"linear,{t!r},{y!r}" for t, y in zip(res.traces["linear_t"], res.traces["linear_y"])]
    if res.nonlinear is not None:
        lines += [f"nonlinear,{t!r},{y!r}" for t, y in zip(res.traces["nonlinear_t"], res.traces["nonlinear_y"])]
    _write_text(out / "step.csv", "\n".join(lines) + "\n")
    for label, m in (("linear", res.linear), ("nonlinear", res.nonlinear)):
        if m is not None:
            print(f"{label:9s} rise {m.rise_time:.3f} s  settling {m.settling_time:.3f} s  "
                  f"overshoot {m.overshoot:.2f} %")
    if args.plot:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(res.traces["linear_t"], res.traces["linear_y"], label="linear")
        if res.nonlinear is not None:
            ax.plot(res.traces["nonlinear_t"], res.traces["nonlinear_y"], label="nonlinear")
        ax.set_xlabel("t (s)")
        ax.set_ylabel("normalized response")
        ax.legend()
        _save(fig, out / "step.svg")
    return 0


def _parse_factors(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--factors must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("--factors is empty")
    return vals


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    if args.exact_state:
        sc = sc.with_changes(sensors=None)
    out = _out_dir(args)
    build = _artifacts(args, out)
    factors = _parse_factors(args.factors)
    try:
        rows = sim.robustness_sweep(sc, build, args.param, factors)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fields = analysis.REPORT_METRICS
    lines = [f"# {_csv_header(sc)}", ",".join(["factor", "stable", *fields, "error"])]
    doc_rows = []
    for r in rows:
        vals = [repr(float(getattr(r.metrics, f))) if r.metrics else "" for f in fields]
        lines.append(",".join([repr(r.factor), str(int(r.stable)), *vals, json.dumps(r.error or "")]))
        doc_rows.append({"factor": r.factor, "stable": r.stable, "error": r.error,
                         "metrics": r.metrics.to_dict() if r.metrics else None})
    _write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    _write_json(out / "sweep.json", sc, {"parameter": args.param, "rows": doc_rows})
    for r in rows:
        if r.metrics:
            print(f"{args.param}={r.factor:<5g} sum sq pitch {r.metrics.sum_sq_pitch_error:.4f} deg^2  "
                  f"rms mu_p {r.metrics.rms_mu_p:.4f} deg")
        else:
            print(f"{args.param}={r.factor:<5g} FAILED: {r.error}")
    if args.plot:
        plt = _pyplot()
        ok = [r for r in rows if r.metrics]
        fig, axs = plt.subplots(1, 2, figsize=(9, 4))
        axs[0].plot([r.factor for r in ok], [r.metrics.sum_sq_pitch_error for r in ok], "o-")
        axs[0].set_ylabel("sum sq pitch error (deg^2)")
        axs[1].plot([r.factor for r in ok], [r.metrics.rms_mu_p for r in ok], "o-")
        axs[1].set_ylabel("rms mu_p (deg)")
        for ax in axs:
            ax.set_xlabel(f"{args.param} factor")
        _save(fig, out / "sweep.svg")
    return 0 if all(r.stable for r in rows) else 1


def cmd_compare(args) -> int:
    """LQI vs PID, exact vs estimated state, under the same seeded wind."""
    sc = load_scenario(args.scenario)
    if sc.wind is None:
        sc = sc.with_changes(wind=sim.default_wind())
    sensors = sc.sensors or SensorSuiteConfig()
    out = _out_dir(args)
    build = _artifacts(args, out)
    runs = []
    for ctrl in ("lqi", "pid"):
        for mode, sens in (("exact", None), ("estimated", sensors)):
            _, m = sim.run_closed_loop(sc.with_changes(controller=ctrl, sensors=sens),
                                       build.schedule, build.feedforward)
            runs.append((f"{ctrl}-{mode}", m))
    tol = analysis.Tolerances(
        comparisons=[analysis.Comparison(metric, f"lqi-{mode}", f"pid-{mode}")
                     for mode in ("exact", "estimated")
                     for metric in ("sum_sq_pitch_error", "sum_sq_yaw_error")]
        + [analysis.Comparison(metric, f"{ctrl}-exact", f"{ctrl}-estimated")
           for ctrl in ("lqi", "pid") for metric in ("sum_sq_pitch_error", "sum_sq_yaw_error")],
        agreement=[(metric, [f"lqi-{mode}", f"pid-{mode}"], 0.25)
                   for mode in ("exact", "estimated") for metric in ("rms_mu_p", "rms_mu_y")],
    )
    report = analysis.build_report(runs, tol, scenario_hash(sc))
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return report.status


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvcsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, artifacts: bool = True):
        sp.add_argument("--scenario", help="scenario JSON (default: built-in scenario)")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        if artifacts:
            sp.add_argument("--artifacts", help="directory with build artifacts (default: --out)")
        sp.add_argument("--plot", action="store_true", help="also write SVG plots")

    sp = sub.add_parser("init-scenario", help="write the default scenario file")
    sp.add_argument("path")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_init_scenario)

    sp = sub.add_parser("build", help="feedforward, operating points and gain schedule")
    common(sp, artifacts=False)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("fly", help="closed-loop flight to apogee")
    common(sp)
    sp.add_argument("--wind", action=argparse.BooleanOptionalAction, default=None,
                    help="force wind on/off (default: as in the scenario)")
    sp.add_argument("--exact-state", action="store_true", help="feed back the true state")
    sp.add_argument("--controller", choices=("lqi", "pid"))
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_fly)

    sp = sub.add_parser("poles", help="open- and closed-loop eigenvalues per operating point")
    common(sp)
    sp.set_defaults(func=cmd_poles)

    sp = sub.add_parser("step", help="attitude step response, linear and nonlinear")
    common(sp)
    sp.add_argument("--t", type=float, default=60.0, help="injection time (s)")
    sp.add_argument("--deg", type=float, default=3.0, help="step size (deg)")
    sp.add_argument("--axis", choices=("pitch", "yaw"), default="pitch")
    sp.add_argument("--linear-only", action="store_true")
    sp.set_defaults(func=cmd_step)

    sp = sub.add_parser("sweep", help="robustness sweep over one plant parameter")
    common(sp)
    sp.add_argument("--param", default="x_cm",
                    choices=("x_cm", "inertia", "thrust", "aero_normal", "drag", "dry_mass"))
    sp.add_argument("--factors", default="0.8,0.9,1.0,1.1,1.2")
    sp.add_argument("--exact-state", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="LQI vs PID and exact vs estimated state report")
    common(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tvcsim {args.command}: {exc}", file=sys.stderr)
        return 2
    except (sim.SimulationError, control.ScheduleError, control.FeedforwardDivergence) as exc:
        print(f"tvcsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"tvcsim {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
