"""Run metrics, step-response metrics and comparison reports.

Logs stay in radians; conversion to degrees happens here only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

REPORT_VERSION = 1


class TruncatedLogError(ValueError):
    """The log is too short or inconsistent to compute metrics."""


@dataclass
class StepMetrics:
    rise_time: float  # 10-90 %, s
    settling_time: float  # last exit from the +-2 % band, s
    overshoot: float  # percent of the step
    steady_state_error: float  # fraction of the step at the end of the record


def step_metrics(t, y, final: float, band: float = 0.02) -> StepMetrics:
    """Standard metrics of a step response ``y(t)`` starting at 0 towards ``final``.

    Time is measured from ``t[0]``. The settling time is the first instant
    after which the response stays within ``band`` of ``final``.
    """
    t = np.asarray(t, dtype=float) - float(t[0])
    y = np.asarray(y, dtype=float) / final
    if t.size < 3 or not np.all(np.isfinite(y)):
        raise TruncatedLogError("step response needs at least three finite samples")

    def crossing(level: float) -> float:
        idx = np.nonzero(y >= level)[0]
        if idx.size == 0:
            return math.inf
        i = int(idx[0])
        if i == 0:
            return 0.0
        return float(t[i - 1] + (level - y[i - 1]) * (t[i] - t[i - 1]) / (y[i] - y[i - 1]))

    rise = crossing(0.9) - crossing(0.1)
    outside = np.nonzero(np.abs(y - 1.0) > band)[0]
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] == t.size - 1:
        settle = math.inf
    else:
        i = int(outside[-1])
        # interpolate the last exit from the band
        target = 1.0 + band * np.sign(y[i] - 1.0)
        settle = float(t[i] + (target - y[i]) * (t[i + 1] - t[i]) / (y[i + 1] - y[i]))
    overshoot = max(0.0, float(np.max(y)) - 1.0) * 100.0
    return StepMetrics(rise, settle, overshoot, float(abs(1.0 - y[-1])))


@dataclass
class RunMetrics:
    """Tracking and actuation metrics of one flight (degrees, metres, seconds)."""

    sum_sq_pitch_error: float
    sum_sq_yaw_error: float
    rms_mu_p: float
    rms_mu_y: float
    apogee: float
    max_velocity: float
    time_to_apogee: float
    samples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, extra: dict | None = None) -> str:
        doc = {**(extra or {}), "metrics": self.to_dict()}
        return json.dumps(doc, indent=2, sort_keys=True)


def compute_metrics(log) -> RunMetrics:
    """Metrics of a :class:`tvcsim.sim.SimLog` over all GNC samples.

    Tracking errors compare the truth attitude with the reference and RMS
    actuation uses the realized gimbal deflections, both over the controlled
    (powered) part of the flight, ``t < log.burn_time``. Apogee figures use
    every sample plus the interpolated apogee event when present.
    """
    t = np.asarray(log.t, dtype=float)
    if t.size < 2 or log.data.shape[0] != t.size:
        raise TruncatedLogError("log needs at least two complete samples")
    if np.any(np.diff(t) <= 0):
        raise TruncatedLogError("log time stamps are not increasing")
    ctl = t < log.burn_time if log.burn_time is not None else np.ones(t.size, dtype=bool)
    if not np.any(ctl):
        raise TruncatedLogError("log has no controlled samples")
    e_th = np.degrees(log.column("theta_d") - log.column("theta"))[ctl]
    e_ps = np.degrees(log.column("psi_d") - log.column("psi"))[ctl]
    mu_p = np.degrees(log.column("mu_p"))[ctl]
    mu_y = np.degrees(log.column("mu_y"))[ctl]
    h = log.column("px")
    speed = np.sqrt(log.column("u") ** 2 + log.column("v") ** 2 + log.column("w") ** 2)
    if log.apogee_state is not None:
        apogee = float(log.apogee_state[0])
        t_apo = float(log.apogee_time)
        speed_max = max(float(speed.max()), float(np.linalg.norm(log.apogee_state[3:6])))
    else:
        i = int(np.argmax(h))
        apogee, t_apo, speed_max = float(h[i]), float(t[i]), float(speed.max())
    return RunMetrics(
        float(np.sum(e_th**2)), float(np.sum(e_ps**2)),
        float(np.sqrt(np.mean(mu_p**2))), float(np.sqrt(np.mean(mu_y**2))),
        apogee, speed_max, t_apo, int(np.count_nonzero(ctl)))


@dataclass
class Comparison:
    """``lhs.metric < rhs.metric`` (or ``<=`` if not strict)."""

    metric: str
    lhs: str
    rhs: str
    strict: bool = True


@dataclass
class AbsoluteCheck:
    """``lo <= label.metric <= hi``."""

    label: str
    metric: str
    lo: float = -math.inf
    hi: float = math.inf


@dataclass
class Tolerances:
    comparisons: list = field(default_factory=list)
    absolute: list = field(default_factory=list)
    # runs listed together whose ``metric`` values must pairwise differ by at most ``rel`` of the larger
    agreement: list = field(default_factory=list)  # (metric, labels, rel)


@dataclass
class ComparisonReport:
    scenario_hash: str
    labels: list
    table: dict  # metric -> {label: value}
    checks: list  # (description, passed)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)

    @property
    def status(self) -> int:
        return 0 if self.passed else 1

    def to_json(self) -> str:
        doc = {"schema_version": REPORT_VERSION, "scenario_hash": self.scenario_hash,
               "labels": self.labels, "table": self.table,
               "checks": [{"check": d, "passed": ok} for d, ok in self.checks],
               "passed": self.passed}
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_text(self) -> str:
        metrics = list(self.table)
        width = max(len(m) for m in metrics) if metrics else 6
        lines = ["metric".ljust(width) + "".join(f"{lab:>16}" for lab in self.labels)]
        for m in metrics:
            lines.append(m.ljust(width) + "".join(f"{self.table[m][lab]:>16.4g}" for lab in self.labels))
        for d, ok in self.checks:
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {d}")
        return "\n".join(lines) + "\n"


REPORT_METRICS = ("sum_sq_pitch_error", "sum_sq_yaw_error", "rms_mu_p", "rms_mu_y",
                  "apogee", "max_velocity", "time_to_apogee")


def build_report(runs, tolerances: Tolerances | None = None, scenario_hash: str = "") -> ComparisonReport:
    """Tabulate labelled runs and evaluate the configured checks."""
    runs = list(runs)
    if not runs:
        raise ValueError("build_report needs at least one run")
    tolerances = tolerances or Tolerances()
    by_label = {label: m for label, m in runs}
    labels = [label for label, _ in runs]
    table = {metric: {lab: float(getattr(by_label[lab], metric)) for lab in labels}
             for metric in REPORT_METRICS}
    checks = []
    for c in tolerances.comparisons:
        a, b = table[c.metric][c.lhs], table[c.metric][c.rhs]
        ok = a < b if c.strict else a <= b
        checks.append((f"{c.metric}: {c.lhs} ({a:.4g}) {'<' if c.strict else '<='} {c.rhs} ({b:.4g})", ok))
    for c in tolerances.absolute:
        v = table[c.metric][c.label]
        checks.append((f"{c.metric}[{c.label}] = {v:.4g} in [{c.lo:g}, {c.hi:g}]", c.lo <= v <= c.hi))
    for metric, labs, rel in tolerances.agreement:
        vals = [table[metric][lab] for lab in labs]
        ok = all(abs(a - b) <= rel * max(abs(a), abs(b)) for a in vals for b in vals)
        checks.append((f"{metric} of {', '.join(labs)} within {rel:.0%} of each other", ok))
    return ComparisonReport(scenario_hash, labels, table, checks)
