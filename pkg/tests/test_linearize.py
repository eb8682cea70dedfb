import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jacobian_oracle import central_difference
from tvcsim import linearize as lin
from tvcsim.linearize import (LON, LAT, LinearModel, NominalLog, OperatingPoint, OperatingPointError,
                              decouple, extract_operating_points, linearize, relative_mismatch)


def _frozen(**over):
    f = {"T": 2500.0, "m": 70.0, "J_t": 60.0, "qbar": 1500.0, "V0": 50.0, "g": 9.8,
         "C_N_alpha": 2.5, "C_Y_beta": -2.5, "C_mq": -20.0, "C_nr": -20.0, "SM": -1.5,
         "l": 1.4, "S": 0.045, "d": 0.24}
    f.update(over)
    return f


def test_nominal_points_match_finite_differences(points):
    start = time.perf_counter()
    worst = 0.0
    for op in points:
        model = linearize(op)
        A_fd, B_fd = central_difference(op)
        worst = max(worst, relative_mismatch(model.A, A_fd), relative_mismatch(model.B, B_fd))
    assert worst <= 1e-6
    assert time.perf_counter() - start < 10.0


ang = st.floats(-0.3, 0.3)


@settings(max_examples=80, deadline=None)
@given(st.floats(20.0, 250.0), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.5, 0.5),
       st.floats(-0.5, 0.5), ang, ang, st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-math.pi, math.pi))
def test_general_point_matches_finite_differences(u, v, w, q, r, th, ps, mp, my, phi):
    V = math.sqrt(u * u + (v * u) ** 2 + (w * u) ** 2)
    op = OperatingPoint(0.0, 100.0, (u, v * u, w * u, q, r, th, ps), (mp, my), phi, _frozen(V0=V))
    model = linearize(op)
    A_fd, B_fd = central_difference(op)
    # entry-wise check scaled by the row magnitude (random points can cancel to tiny entries)
    scale = np.maximum(np.abs(model.A).max(axis=1, keepdims=True), 1.0)
    np.testing.assert_allclose(model.A / scale, A_fd / scale, rtol=0, atol=1e-7)
    np.testing.assert_allclose(model.B, B_fd, rtol=1e-7, atol=1e-7)


def test_rolled_pitch_sensitivity_of_side_force():
    # d(vdot)/dtheta for a rolled, pitched, yawed attitude exercises the
    # gravity term that depends on phi, theta and psi together
    f = _frozen()
    op = OperatingPoint(0.0, 100.0, (50.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.3), (0.0, 0.0), 0.7, f)
    A = linearize(op).A
    A_fd, _ = central_difference(op)
    g = f["g"]
    assert A[1, 5] == pytest.approx(-g * math.sin(0.7) * math.cos(0.2) * math.cos(0.3), rel=1e-12)
    assert A_fd[1, 5] == pytest.approx(A[1, 5], rel=1e-7)


def test_decouple_blocks(points):
    op = points[5]
    model = linearize(op)
    dm = decouple(model, op)
    np.testing.assert_array_equal(dm.lon.A, model.A[np.ix_(LON, LON)])
    np.testing.assert_array_equal(dm.lat.B[:, 0], model.B[list(LAT), 1])
    assert dm.lon.states == ("du", "dw", "dq", "dtheta")


def test_decouple_rejects_rolling_point(points):
    from dataclasses import replace

    op = replace(points[3], p0=0.5)
    with pytest.raises(OperatingPointError, match="p0"):
        decouple(linearize(op), op)


def test_open_loop_unstable_at_atmospheric_points(points):
    for op in points:
        dm = decouple(linearize(op), op)
        assert np.linalg.eigvals(dm.lon.A).real.max() > 0
        assert np.linalg.eigvals(dm.lat.A).real.max() > 0


def test_extraction_rejects_pad_and_orders_altitude(build, points):
    assert points[0].t0 == pytest.approx(5.0)
    assert any("t=0" in d for d in build.diagnostics)
    assert all(b.h0 > a.h0 for a, b in zip(points, points[1:]))
    assert all(p.frozen["T"] > 0 for p in points)


def test_extraction_requires_increasing_altitude(vehicle):
    t = np.arange(0.0, 20.01, 0.01)
    x = np.zeros((t.size, 13))
    x[:, 3] = 30.0
    x[:, 12] = 70.0
    x[:, 0] = 100.0 - t  # descending
    log = NominalLog(t, x, np.zeros((t.size, 2)), vehicle)
    with pytest.raises(OperatingPointError, match="strictly increasing"):
        extract_operating_points(log, 5.0)


def test_operating_point_roundtrip(points):
    op = points[7]
    assert OperatingPoint.from_dict(op.to_dict()) == op


def test_linear_model_csv():
    m = LinearModel(np.eye(7), np.ones((7, 2)))
    lines = m.to_csv().splitlines()
    assert lines[0].split(",") == ["row", *lin.STATE_LABELS, *lin.INPUT_LABELS]
    assert len(lines) == 8
    with pytest.raises(ValueError):
        LinearModel(np.eye(6), np.ones((6, 2)))


def test_operating_point_validation():
    with pytest.raises(OperatingPointError):
        OperatingPoint(0.0, 0.0, (0.0,) * 7, (0.0, 0.0), 0.0, _frozen(V0=0.0))
    with pytest.raises(OperatingPointError):
        OperatingPoint(0.0, 0.0, (1.0,) * 7, (0.0, 0.0), 0.0, _frozen(qbar=float("nan")))
