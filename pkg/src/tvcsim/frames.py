"""Euler-angle attitude kinematics.

Angles are radians throughout, ordered ``(phi, theta, psi)`` = (roll, pitch,
yaw). The inertial frame has ``x`` pointing up, so the launcher stands at
``theta = 0`` on the pad. Rotations are Z-Y-X: ``R = Rz(psi) Ry(theta) Rx(phi)``
maps body-frame vectors into the inertial frame.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

SINGULARITY_MARGIN = 1e-3


class SingularityError(ValueError):
    """Pitch angle too close to +-90 deg for the Euler representation."""


class EulerAngles(NamedTuple):
    phi: float
    theta: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])


def check_pitch(theta: float, margin: float = SINGULARITY_MARGIN) -> None:
    if not math.isfinite(theta):
        raise SingularityError(f"pitch angle theta={theta!r} is not finite")
    if abs(theta) >= 0.5 * math.pi - margin:
        raise SingularityError(
            f"pitch angle theta={theta:.6f} rad is within {margin:g} rad of the "
            "Euler-angle singularity at +-pi/2"
        )


def rotation_from_euler(lam) -> np.ndarray:
    """Body-to-inertial rotation matrix for Euler angles ``lam``."""
    phi, theta, psi = (float(a) for a in lam)
    check_pitch(theta, 0.0)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
            [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
            [-st, sf * ct, cf * ct],
        ]
    )


def skew(w) -> np.ndarray:
    """Cross-product matrix: ``skew(w) @ v == np.cross(w, v)``."""
    x, y, z = (float(c) for c in w)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def euler_rates(lam, omega, margin: float = SINGULARITY_MARGIN) -> np.ndarray:
    """Time derivative of ``(phi, theta, psi)`` for body rates ``(p, q, r)``."""
    phi, theta, _ = (float(a) for a in lam)
    p, q, r = (float(c) for c in omega)
    check_pitch(theta, margin)
    cf, sf = math.cos(phi), math.sin(phi)
    ct = math.cos(theta)
    return np.array(
        [
            p + (q * sf + r * cf) * math.tan(theta),
            q * cf - r * sf,
            (q * sf + r * cf) / ct,
        ]
    )
