"""Gain-scheduled thrust-vector control of a finless launcher.

Nonlinear 6-DOF plant, analytic linearization, LQI gain scheduling on
altitude, complementary-filter navigation and a multirate closed-loop
simulator. The plant kernel is compiled with Cython when available and
falls back to pure Python otherwise (see :mod:`tvcsim.kernels`).
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
