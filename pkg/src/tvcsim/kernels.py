"""Backend selection for the plant kernel.

The compiled Cython extension is used when it imports; otherwise, or when
``TVCSIM_PURE_PYTHON=1`` is set, the pure-Python transliteration is used.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import environment
from . import _pykernel
from .frames import SINGULARITY_MARGIN
from .vehicle import VehicleConfig

N_STATE = _pykernel.N_STATE
N_HOLD = _pykernel.N_HOLD
STATUS_OK = _pykernel.STATUS_OK
STATUS_APOGEE = _pykernel.STATUS_APOGEE
STATUS_SINGULAR = _pykernel.STATUS_SINGULAR
STATUS_NONFINITE = _pykernel.STATUS_NONFINITE

# extended-state slices (see _pykernel module docstring)
IX_CHI = 13
IX_LAM_HAT = slice(14, 17)
IX_BW_HAT = slice(17, 20)
IX_P_HAT = slice(20, 23)
IX_V_HAT = slice(23, 26)
IX_BA_HAT = slice(26, 29)

ACTUATOR_TAU = 0.02
ACTUATOR_RATE = 2.0 * math.pi

_ckernel = None
if os.environ.get("TVCSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernel  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _ckernel = None

BACKEND = "cython" if _ckernel is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernel is not None else [])


def _union_resample(*tables):
    """Resample piecewise-linear tables onto the union of their keys (exact)."""
    keys = np.unique(np.concatenate([np.asarray(t, dtype=float)[:, 0] for t in tables]))
    cols = []
    for t in tables:
        arr = np.asarray(t, dtype=float)
        cols.extend(np.interp(keys, arr[:, 0], arr[:, j]) for j in range(1, arr.shape[1]))
    return keys, cols


def plant_tables(config: VehicleConfig, l_acf=None, l_pcf=None, filters: bool = True,
                 tau: float = ACTUATOR_TAU, rate_limit: float = ACTUATOR_RATE,
                 margin: float = SINGULARITY_MARGIN):
    """Flatten a vehicle config and filter gains into kernel inputs."""
    if l_acf is None:
        l_acf = np.zeros((6, 3))
    if l_pcf is None:
        l_pcf = np.zeros((9, 3))
    curve = np.asarray(config.thrust_curve, dtype=float)
    mass_t, (xcm, jl, jt) = _union_resample(config.x_cm_table, config.inertia_table)
    xcp = np.asarray(config.x_cp_table, dtype=float)
    aero = np.asarray(config.aero_table, dtype=float)
    nl = len(environment._LAYER_LAPSE)
    tables = {
        "thrust_t": curve[:, 0], "thrust_f": curve[:, 1],
        "mass_t": mass_t, "xcm": xcm, "jl": jl, "jt": jt,
        "xcp_mach": xcp[:, 0], "xcp": xcp[:, 1],
        "aero_mach": aero[:, 0], "ca": aero[:, 1], "cna": aero[:, 2], "cyb": aero[:, 3],
        "isa_h": np.array(environment._LAYER_BASE_H[:nl]),
        "isa_lapse": np.array(environment._LAYER_LAPSE),
        "isa_t": np.array(environment._LAYER_T[:nl]),
        "isa_p": np.array(environment._LAYER_P[:nl]),
        "l_acf": np.asarray(l_acf, dtype=float).reshape(-1),
        "l_pcf": np.asarray(l_pcf, dtype=float).reshape(-1),
    }
    scalars = {
        "S": config.area, "d": config.diameter, "x_gimbal": config.x_gimbal,
        "C_lp": config.C_lp, "C_mq": config.C_mq, "C_nr": config.C_nr,
        "v_e": config.exhaust_velocity, "A_e": config.nozzle_exit_area,
        "p_e": config.exit_pressure, "k_roll": config.roll_damping,
        "roll_torque": config.roll_torque, "floor": config.velocity_floor,
        "tau": tau, "rate_limit": rate_limit, "limit": config.gimbal_limit,
        "margin": margin, "g0": environment.G0, "r_earth": environment.R_EARTH,
        "r_air": environment.R_AIR, "gamma": environment.GAMMA_AIR,
        "r0_geopot": environment._R0_GEOPOT, "h_max": environment.MAX_ALTITUDE,
        "filters": 1.0 if filters else 0.0,
    }
    return tables, scalars


def make_plant(config: VehicleConfig, backend: str | None = None, **kwargs):
    """Build a kernel ``Plant`` for ``config`` on the requested backend."""
    backend = backend or BACKEND
    tables, scalars = plant_tables(config, **kwargs)
    if backend == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not available; rebuild the package")
        return _ckernel.Plant(tables, scalars)
    if backend == "python":
        return _pykernel.Plant(tables, scalars)
    raise ValueError(f"unknown kernel backend {backend!r}")


def propagate(plant, t0: float, y: np.ndarray, act: np.ndarray, cmd, wind, hold,
              n_steps: int, dt: float, detect_apogee: bool = True):
    """Backend-neutral wrapper around ``Plant.propagate`` (mutates ``y``/``act``)."""
    cmd = np.ascontiguousarray(cmd, dtype=float)
    wind = np.ascontiguousarray(wind, dtype=float)
    hold = np.ascontiguousarray(hold, dtype=float)
    if isinstance(plant, _pykernel.Plant):
        ylist, alist = list(y), list(act)
        status, t = plant.propagate(t0, ylist, alist, list(cmd), list(wind), list(hold),
                                    int(n_steps), float(dt), bool(detect_apogee))
        y[:] = ylist
        act[:] = alist
        return status, t
    return plant.propagate(t0, y, act, cmd, wind, hold, int(n_steps), float(dt),
                           bool(detect_apogee))
