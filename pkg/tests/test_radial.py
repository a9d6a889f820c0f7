"""Radial flows on the disk, the circle moment ODE, the fixed point, and the radial map."""
import math

import numpy as np
import pytest

from loewner_lab.measures import (
    MeasureError, MeasurePath, Segment, circle_moments, circle_point, constant_path, haar, point,
    poisson_law,
)
from loewner_lab.radial import (
    conformal_radius, double_speed_residual, fixed_point_closed, forward_flow_radial, psi_flow,
    radial_moment_flow, radial_moment_rhs, reverse_flow_radial, rl_map, taylor_coefficients,
)
from loewner_lab.series import exp_linear_s, s_transform_series

HAAR = constant_path(haar(), 2.0)
ATOM = constant_path(circle_point(0.0), 1.0)


def disk_grid(n=16, r=0.6, seed=4):
    rng = np.random.default_rng(seed)
    return r * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * math.pi * rng.uniform(0, 1, n))


def test_origin_is_fixed_and_radius_grows():
    res = forward_flow_radial(ATOM, [0.0, 0.3j], 1.0)
    assert np.all(res.values[:, 0] == 0)
    assert conformal_radius(res, 0.0) == 1.0
    assert conformal_radius(res, 1.0) == pytest.approx(math.e, abs=1e-8)
    half = constant_path(circle_point(1.0, 0.5), 2.0)
    assert conformal_radius(forward_flow_radial(half, [0.1], 2.0), 2.0) == pytest.approx(math.e, abs=1e-8)


def test_haar_forward_closed_form():
    t = math.log(2)
    res = forward_flow_radial(HAAR, [0.25, 0.1 + 0.2j], t, tol=1e-12)
    assert res.values[-1, 0] == pytest.approx(0.5, abs=1e-8)
    assert res.values[-1, 1] == pytest.approx(2 * (0.1 + 0.2j), abs=1e-8)


def test_haar_herglotz_mean_value_by_quadrature():
    # (1/2pi) int (e^{it} + g) / (e^{it} - g) dt = 1 for |g| < 1
    th = np.linspace(0, 2 * math.pi, 4097)[:-1]
    g = 0.4 - 0.3j
    val = np.mean((np.exp(1j * th) + g) / (np.exp(1j * th) - g))
    assert val == pytest.approx(1.0, abs=1e-13)


def test_radial_points_move_outward_and_get_swallowed():
    res = forward_flow_radial(ATOM, [0.9, -0.5], 1.0, times=np.linspace(0, 1, 21))
    assert np.isfinite(res.swallow_times[0]) and not np.isfinite(res.swallow_times[1])
    r = np.abs(res.values[:, 1])
    assert np.all(np.diff(r) >= 0) and np.all(r < 1)


def test_log_radius_is_integrated_mass():
    path = MeasurePath((Segment(0.0, 0.5, circle_point(0.0, 2.0)), Segment(0.5, 1.0, haar(0.5))))
    res = forward_flow_radial(path, [0.2j], 1.0, times=[0.25, 0.5, 0.75, 1.0])
    assert res.log_radius == pytest.approx([0, 0.5, 1.0, 1.125, 1.25], abs=1e-8)


def test_reverse_flow_radial():
    assert reverse_flow_radial(HAAR, 0.5, 1.0) == pytest.approx(0.5 / math.e, abs=1e-9)
    z = disk_grid()
    assert np.array_equal(reverse_flow_radial(ATOM, z, 0.5, 0.5), z)
    w = reverse_flow_radial(ATOM, z, 1.0, tol=1e-12)
    assert np.all(np.abs(w) <= np.abs(z))
    back = forward_flow_radial(ATOM, w, 1.0, tol=1e-12).values[-1]
    assert np.max(np.abs(back - z)) < 1e-8
    with pytest.raises(ValueError):
        reverse_flow_radial(ATOM, 1.0, 0.5)


def test_radial_rejects_real_line_paths():
    with pytest.raises(MeasureError):
        forward_flow_radial(constant_path(point(), 1.0), [0.1], 0.5)


def test_psi_flow_examples():
    assert psi_flow(ATOM, 0.5, 0.0) == pytest.approx(1.0)
    # Haar: f_1(z) = z / e
    q = 0.5 / math.e
    assert psi_flow(HAAR, 0.5, 1.0) == pytest.approx(q / (1 - q), abs=1e-9)
    assert psi_flow(HAAR, 0.5, 1.0) == pytest.approx(0.225400, abs=1e-6)
    z = 1e-4
    assert psi_flow(ATOM, z, 0.7) / z == pytest.approx(math.exp(-0.7), rel=1e-3)


def test_moment_flow_closed_forms():
    times = np.linspace(0, 1, 6)
    hf = radial_moment_flow(HAAR, 6, 1.0, times=times)
    for m in range(1, 7):
        assert np.allclose(hf.values[:, m], np.exp(-m * times), atol=1e-9)
    af = radial_moment_flow(ATOM, 6, 1.0, times=times)
    assert np.allclose(af.values[:, 1], np.exp(-times), atol=1e-9)
    assert np.all(af.values[0] == 1)


def test_moment_rhs_matches_explicit_formula():
    rng = np.random.default_rng(1)
    c = rng.normal(size=6) + 1j * rng.normal(size=6)
    p = rng.normal(size=6) + 1j * rng.normal(size=6)
    d = radial_moment_rhs(c, 1.3, p)
    for m in range(1, 6):
        ref = -(m * c[m] * 1.3 + 2 * sum(k * c[k] * p[m - k] for k in range(1, m)))
        assert d[m] == pytest.approx(ref)


def test_psi_flow_agrees_with_moment_series():
    # at |z| = 0.3 the truncation error of order 30 is ~0.3^31
    path = MeasurePath((Segment(0.0, 0.5, circle_point(0.0)), Segment(0.5, 1.0, circle_point(2.0))))
    mf = radial_moment_flow(path, 30, 1.0, tol=1e-12, times=[1.0])
    z = 0.3 * np.exp(1j * np.linspace(0, 2 * math.pi, 9)[:-1])
    assert np.max(np.abs(psi_flow(path, z, 1.0, tol=1e-12) - mf.psi(z, -1))) < 1e-6


def test_moment_flow_driver_callable_and_errors():
    drv = lambda t: (1.0, np.zeros(7))
    mf = radial_moment_flow(drv, 6, 1.0, times=[1.0])
    assert mf.at(1.0)[3] == pytest.approx(math.exp(-3))
    with pytest.raises(ValueError):
        radial_moment_flow(lambda t: (1.0, np.zeros(3)), 6, 1.0)
    with pytest.raises(ValueError):
        radial_moment_flow(HAAR, 0, 1.0)


def test_taylor_coefficients_of_geometric_series():
    c = taylor_coefficients(lambda z: z / (1 - 0.5 * z), 8)
    assert np.allclose(c, [0] + [0.5 ** (k - 1) for k in range(1, 9)], atol=1e-14)


def test_rl_map_haar_is_poisson():
    samples = rl_map(HAAR, [0.0, 0.5, 1.0], order=6)
    s0 = samples[0]
    assert np.allclose(s0.moments.as_array(), 1)
    for s in samples[1:]:
        rho = math.exp(-s.time)
        ref = (1 - rho ** 2) / (2 * math.pi * np.abs(1 - rho * np.exp(1j * s.curve.grid)) ** 2)
        assert np.max(np.abs(s.curve.values - ref)) < 1e-3
        assert abs(s.curve.mass_defect) < 1e-3
        assert np.allclose(s.moments.as_array(), circle_moments(poisson_law(rho), 6).as_array(), atol=1e-8)
        assert not s.flagged


def test_herglotz_mass_of_output_law():
    z0 = np.array([1e-300 + 0j])
    for path in (ATOM, HAAR):
        f0 = reverse_flow_radial(path, z0, 1.0)
        assert np.real((1 + f0) / (1 - f0))[0] == pytest.approx(1.0, abs=1e-14)


def test_fixed_point_consistency(radial_fp):
    fp = radial_fp
    closed = fixed_point_closed(fp.order, 1.0, times=fp.times)
    assert np.max(np.abs(closed.values - fp.moments)) < 1e-7
    assert fp.history[-1] < 1e-10
    # c_1 = e^{-t} for any probability driver
    assert np.allclose(fp.moments[:, 1], np.exp(-fp.times), atol=1e-9)


def test_fixed_point_s_transform(radial_fp):
    for t in (0.25, 0.5, 1.0):
        s = np.array(s_transform_series(radial_fp.at(t)).coefficients)[:5]
        ref = np.array(exp_linear_s(t, 5).coefficients)
        assert np.max(np.abs(s - ref)) < 1e-6


def test_fixed_point_double_speed(radial_fp):
    z = 0.2 * np.exp(1j * np.linspace(0, 2 * math.pi, 13)[:-1])
    for t in (0.3, 0.6, 0.9):
        assert double_speed_residual(radial_fp, z, t) <= 1e-4
    with pytest.raises(ValueError):
        double_speed_residual(radial_fp, z, 0.0)


def test_rl_map_on_fixed_point(radial_fp):
    samples = rl_map(radial_fp, [0.5, 1.0])
    assert all(not s.flagged for s in samples)
    with pytest.raises(ValueError):
        rl_map(radial_fp, [0.5], order=radial_fp.order + 1)
