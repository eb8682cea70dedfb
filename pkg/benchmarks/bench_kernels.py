"""Compare the compiled and pure-Python plant kernels.

Propagates the plant with both filters co-integrated, in 10 ms control
chunks of 1 ms RK4 steps, exactly as a closed-loop flight does, and reports
the best wall time per backend, the speed-up and the state difference.

Usage: python3 benchmarks/bench_kernels.py [--seconds 5] [--repeat 3]
"""

import argparse
import time

import numpy as np

from tvcsim import control, kernels, navigation
from tvcsim.defaults import default_vehicle


def fly(backend: str, seconds: float):
    vehicle = default_vehicle()
    plant = kernels.make_plant(vehicle, backend=backend, l_acf=navigation.ACF_GAIN,
                               l_pcf=np.vstack(navigation.PCF_GAINS), filters=True)
    y = np.zeros(kernels.N_STATE)
    y[:13] = control.initial_state(vehicle)
    act = np.zeros(2)
    hold = np.zeros(kernels.N_HOLD)
    cmd = np.array([0.005, -0.003])
    wind = np.array([0.0, 2.0, 1.0])
    t = 0.0
    start = time.perf_counter()
    for _ in range(int(round(seconds / 0.01))):
        status, t = kernels.propagate(plant, t, y, act, cmd, wind, hold, 10, 1e-3)
        if status != kernels.STATUS_OK:
            raise RuntimeError(f"{backend} kernel stopped with status {status} at t={t:.3f} s")
    return time.perf_counter() - start, y


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seconds", type=float, default=5.0, help="simulated flight time per run")
    parser.add_argument("--repeat", type=int, default=3, help="runs per backend; the best is kept")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    best, states = {}, {}
    for backend in backends:
        times = []
        for _ in range(args.repeat):
            elapsed, states[backend] = fly(backend, args.seconds)
            times.append(elapsed)
        best[backend] = min(times)
        steps = args.seconds / 1e-3
        print(f"{backend:>7}: {best[backend]:8.4f} s for {args.seconds:g} s of flight "
              f"({steps / best[backend]:,.0f} plant steps/s)")
    if "cython" in best:
        diff = np.abs(states["cython"] - states["python"]).max()
        print(f"speed-up: {best['python'] / best['cython']:.1f}x, max state difference {diff:.2e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
