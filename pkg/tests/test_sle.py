"""Brownian drivers, exact slit maps and the SLE property report."""
import math

import numpy as np
import pytest

from loewner_lab.chordal import capacity, forward_flow, moment_flow, reverse_flow
from loewner_lab.sle import (
    atom_step_forward, atom_step_reverse, batched_atom_moments, driver_to_path, sample_driver,
    sle_property_report, slit_forward, slit_reverse, step_normals,
)

import oracles


def test_zero_kappa_is_the_point_driver():
    d = sample_driver(0.0, 1.0, dt=1e-2)
    assert np.all(d.values == 0)
    path = driver_to_path(d)
    assert path.sup_mass == 2.0
    z = oracles.upper_grid(8) + 1j
    assert np.max(np.abs(slit_forward(d, z, 100) - oracles.g_arcsine(z, 1.0))) < 1e-12


def test_driver_is_deterministic_and_order_independent():
    a = sample_driver(2.0, 0.5, dt=1e-3, seed=9, path_index=4)
    b = sample_driver(2.0, 0.5, dt=1e-3, seed=9, path_index=4)
    assert np.array_equal(a.values, b.values)
    # a longer draw extends the shorter one
    longer = step_normals(9, 4, 1000)
    assert np.array_equal(step_normals(9, 4, 500), longer[:500])
    assert not np.array_equal(step_normals(9, 5, 10), longer[:10])


def test_driver_variance_is_kappa_t():
    kappa, t = 3.0, 0.5
    end = np.array([sample_driver(kappa, t, dt=1e-2, seed=s).values[-1] for s in range(1000)])
    se = np.std(end ** 2, ddof=1) / math.sqrt(end.size)
    assert abs(np.mean(end ** 2) - kappa * t) <= 3 * se


def test_step_normals_are_standard():
    x = step_normals(0, 0, 200_000)
    assert abs(x.mean()) < 0.01 and abs(x.var() - 1) < 0.01


def test_sample_driver_validates():
    with pytest.raises(ValueError):
        sample_driver(-1.0, 1.0)
    with pytest.raises(ValueError):
        sample_driver(1.0, 1.0, dt=0.3)


def test_atom_steps_invert_and_match_the_ode():
    z = oracles.upper_grid(10) + 0.5j
    g = atom_step_forward(z, 0.3, 2.0, 0.05)
    assert np.max(np.abs(atom_step_reverse(g, 0.3, 2.0, 0.05) - z)) < 1e-13
    d = sample_driver(2.0, 0.2, dt=1e-2, seed=1)
    path = driver_to_path(d)
    ref = forward_flow(path, z, 0.2, tol=1e-12).values[-1]
    assert np.max(np.abs(slit_forward(d, z, 20) - ref)) < 1e-9
    # reverse_flow uses the closed form on held atoms; check it against the RK forward flow
    w = reverse_flow(path, z, 0.2, tol=1e-12)
    assert np.max(np.abs(slit_reverse(d, z, 20) - w)) < 1e-12
    assert np.max(np.abs(forward_flow(path, w, 0.2, tol=1e-12).values[-1] - z)) < 1e-9


def test_sampled_path_capacity_is_deterministic():
    d = sample_driver(4.0, 1.0, dt=1e-2, seed=2)
    assert capacity(driver_to_path(d), [0.5, 1.0]) == pytest.approx([1.0, 2.0], abs=1e-12)


def test_batched_moments_match_moment_flow():
    d = sample_driver(2.0, 0.3, dt=1e-2, seed=6)
    exact = batched_atom_moments(d.values[None, :-1], d.dt, 8)[0]
    ode = moment_flow(driver_to_path(d), 8, 0.3, tol=1e-12).at(0.3).as_array()
    assert np.max(np.abs(exact - ode)) < 1e-10
    assert exact[2] == pytest.approx(0.6, abs=1e-14)


def test_sle_report_small_ensemble():
    rep = sle_property_report(2.0, 200, 0.25, 0.5, seed=4, dt=1e-3)
    assert rep.a2_deviation <= 1e-12
    assert rep.extra["disjoint_windows"]
    assert rep.passed()
    text = rep.to_text()
    assert "kappa=2.0" in text and len(rep.rows()) == rep.order - 1
    again = sle_property_report(2.0, 200, 0.25, 0.5, seed=4, dt=1e-3)
    assert np.array_equal(rep.full, again.full)


def test_sle_report_validates():
    with pytest.raises(ValueError):
        sle_property_report(2.0, 50, 0.5, 1.0)
    with pytest.raises(ValueError):
        sle_property_report(2.0, 200, 1.0, 0.5)
    with pytest.raises(ValueError):
        sle_property_report(2.0, 200, 0.5, 1.0, order=2)
