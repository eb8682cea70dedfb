"""Grid search behind the shipped LQI weights.

For each candidate pair of attitude / integral weights (rate weight and
control weight held fixed) this designs the pitch loop at the nominal
operating points 5, 35, 65 and 95 s and reports the worst linear 3 deg step
metrics. Candidates whose rise time, settling time and overshoot stay in
0.2-0.5 s, 0.4-0.8 s and under 5 % at every point are marked. Yaw uses the
same weights, so only pitch is searched.

Usage: python3 tools/tune_lqi.py
"""

import itertools
import math

from tvcsim import analysis, sim
from tvcsim.control import LqiWeights

ATTITUDE = (30.0, 100.0, 300.0, 1000.0)
INTEGRAL = (2000.0, 5000.0, 20000.0, 50000.0)
RATE = 0.3
TIMES = (5.0, 35.0, 65.0, 95.0)


def worst_metrics(points, weights):
    rise, settle, over = 0.0, 0.0, 0.0
    for t in TIMES:
        op = sim.nearest_point(points, t)
        ts, ys = sim.linear_step_response(op, weights, "pitch")
        m = analysis.step_metrics(ts, ys, 1.0)
        rise = max(rise, m.rise_time) if math.isfinite(m.rise_time) else math.inf
        settle = max(settle, m.settling_time)
        over = max(over, m.overshoot)
    return rise, settle, over


def main():
    build = sim.run_nominal_and_build(sim.ScenarioConfig())
    shipped = sim.ScenarioConfig().weights
    print(f"{'q_theta':>8} {'q_theta_i':>10} {'rise':>7} {'settle':>7} {'overshoot':>9}")
    for q_att, q_int in itertools.product(ATTITUDE, INTEGRAL):
        w = LqiWeights(RATE, RATE, q_att, q_att, q_int, q_int)
        rise, settle, over = worst_metrics(build.points, w)
        ok = 0.2 <= rise <= 0.5 and 0.4 <= settle <= 0.8 and over < 5.0
        tag = " shipped" if w == shipped else ""
        print(f"{q_att:8g} {q_int:10g} {rise:7.3f} {settle:7.3f} {over:8.2f}%{'  in band' if ok else ''}{tag}")


if __name__ == "__main__":
    main()
