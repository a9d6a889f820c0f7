"""Formal series reversion and the R/S-transform calculus, checked on exact rationals."""
import cmath
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from loewner_lab.measures import MeasureError, MomentSeries
from loewner_lab.series import (
    INVERSE, POWER, FormalSeries, SeriesError, arcsine_moments, compose, exp_linear_s,
    free_add_convolve, free_mult_convolve, moments_from_r, moments_from_s, r_transform_series,
    revert, revert_lagrange, s_transform_series, semicircle_moments, series_revert,
)

import oracles


def point_moments(a, n):
    return MomentSeries(tuple(F(a) ** k for k in range(n + 1)))


def bernoulli(n):
    return MomentSeries(tuple(F(1) if k % 2 == 0 else F(0) for k in range(n + 1)))


def circle_atom(angle, n):
    return MomentSeries(tuple(cmath.exp(-1j * k * angle) for k in range(n + 1)), kind="circle")


def test_newton_reversion_matches_lagrange_exactly():
    a = [F(0), F(2), F(-1, 3), F(5), F(1, 7), F(-2), F(3, 11), F(1)]
    n = 7
    assert revert(a, n) == revert_lagrange(a, n)
    ident = compose(a, revert(a, n), n)
    assert ident == [0, 1] + [0] * (n - 1)


@given(st.lists(st.integers(-9, 9), min_size=9, max_size=9), st.integers(1, 9))
@settings(max_examples=40, deadline=None)
def test_reversion_round_trip(tail, lead):
    a = [F(0), F(lead)] + [F(c, 3) for c in tail]
    n = 10
    b = revert(a, n)
    assert compose(a, b, n) == [0, 1] + [0] * (n - 1)
    assert compose(b, a, n) == [0, 1] + [0] * (n - 1)


def test_reversion_round_trip_in_floats():
    a = [0.0, 1.3, -0.4, 0.25, 0.9, -0.1, 0.05]
    b = revert(a, 6)
    ident = compose(a, b, 6)
    assert max(abs(c - e) for c, e in zip(ident, [0, 1, 0, 0, 0, 0, 0])) <= 1e-12


def test_reversion_rejects_non_units():
    with pytest.raises(SeriesError):
        revert([1, 1, 0], 3)
    with pytest.raises(SeriesError):
        revert([0, 0, 1], 3)
    with pytest.raises(SeriesError):
        series_revert(FormalSeries((0, 1, 2), INVERSE))


def test_cauchy_reversion_examples():
    # G = 1/z -> K = 1/w
    K = series_revert(FormalSeries((F(1), F(0), F(0), F(0)), INVERSE))
    assert K.pole == 1 and all(c == 0 for c in K.coefficients)
    # semicircle: K(w) = 1/w + v w
    v = F(3, 2)
    K = series_revert(FormalSeries(semicircle_moments(v, 6).coefficients, INVERSE))
    assert K.pole == 1 and K.coefficients[:3] == (0, v, 0)
    # and back again
    G = series_revert(K)
    assert G.convention == INVERSE
    assert G.coefficients[:6] == semicircle_moments(v, 5).coefficients


def test_psi_reverts_to_chi():
    n = 10
    psi = [F(0)] + [F(1)] * n
    chi = revert(psi, n)
    assert chi == [F(0)] + [F((-1) ** (k + 1)) for k in range(1, n + 1)]


def test_convention_mismatch_is_rejected():
    with pytest.raises(SeriesError):
        FormalSeries((1, 2, 3), INVERSE) + FormalSeries((1, 2, 3), POWER)
    with pytest.raises(SeriesError):
        FormalSeries((1, 2), POWER)


def test_r_transform_examples():
    v = F(2, 5)
    r = r_transform_series(semicircle_moments(v, 10)).coefficients
    assert r == (0, v) + (0,) * (len(r) - 2)
    a = F(-3, 4)
    r = r_transform_series(point_moments(a, 8)).coefficients
    assert r == (a,) + (0,) * (len(r) - 1)
    assert all(c == 0 for c in r_transform_series(point_moments(0, 6)).coefficients)
    with pytest.raises(MeasureError):
        r_transform_series(MomentSeries((F(2), F(0), F(1), F(0))))


def test_free_cumulants_agree_with_noncrossing_partitions():
    # random rational cumulants -> moments by NC enumeration -> back to cumulants
    kappa = [None, F(1, 2), F(3), F(-1, 5), F(2, 7), F(1), F(-3, 2)]
    m = oracles.moments_from_free_cumulants(kappa, 6)
    r = r_transform_series(MomentSeries(tuple(m))).coefficients
    assert list(r) == kappa[1:]
    back = moments_from_r(FormalSeries(tuple(kappa[1:]), POWER))
    assert list(back.coefficients) == m


def test_bernoulli_square_is_arcsine():
    out = free_add_convolve(bernoulli(6), bernoulli(6))
    assert (out[2], out[4], out[6]) == (2, 6, 20)
    assert out.coefficients == arcsine_moments(F(2), 6).coefficients
    # independent oracle: Bernoulli cumulants doubled, moments by NC enumeration
    kb = r_transform_series(bernoulli(6)).coefficients
    m = oracles.moments_from_free_cumulants([None] + [2 * c for c in kb], 6)
    assert list(out.coefficients) == m


def test_point_masses_translate():
    out = free_add_convolve(point_moments(F(1, 3), 8), point_moments(F(-2), 8))
    assert out.coefficients == point_moments(F(-5, 3), 8).coefficients


@pytest.mark.parametrize("n", [2, 4])
def test_semicircle_semigroup(n):
    # mu_{1/n} boxplus ... boxplus mu_{1/n} = mu_1
    part = semicircle_moments(F(1, n), 14)
    acc = part
    for _ in range(n - 1):
        acc = free_add_convolve(acc, part)
    assert acc.coefficients == semicircle_moments(F(1), 14).coefficients


@pytest.mark.parametrize("n", [2, 4])
def test_bernoulli_powers_match_noncrossing_enumeration(n):
    acc = bernoulli(6)
    for _ in range(n - 1):
        acc = free_add_convolve(acc, bernoulli(6))
    kb = r_transform_series(bernoulli(6)).coefficients
    m = oracles.moments_from_free_cumulants([None] + [n * c for c in kb], 6)
    assert list(acc.coefficients) == m


def test_r_additivity_through_order_14():
    a = semicircle_moments(F(2, 3), 14)
    b = arcsine_moments(F(1, 4), 14)
    c = point_moments(F(1, 5), 14)
    for x, y in ((a, b), (b, c), (a, c)):
        lhs = r_transform_series(free_add_convolve(x, y)).coefficients
        rx, ry = r_transform_series(x).coefficients, r_transform_series(y).coefficients
        assert list(lhs) == [p + q for p, q in zip(rx, ry)]


def test_s_transform_examples():
    s = s_transform_series(MomentSeries(tuple(F(1) for _ in range(9)), kind="circle")).coefficients
    assert s == (1,) + (0,) * (len(s) - 1)
    alpha = 0.7
    s = s_transform_series(circle_atom(alpha, 8)).coefficients
    # with p_n = int e^{-in theta}: psi(z) = z e^{-i alpha} / (1 - z e^{-i alpha}) and S = e^{i alpha}
    assert abs(s[0] - cmath.exp(1j * alpha)) < 1e-13
    assert max(abs(c) for c in s[1:]) < 1e-13
    with pytest.raises(MeasureError):
        s_transform_series(MomentSeries((1, 0, 0.5, 0.1), kind="circle"))


def test_s_transform_of_atom_by_direct_reversion():
    # chi(w) = e^{i alpha} w / (1 + w) inverts psi = e^{-i a} z / (1 - e^{-i a} z)
    a = 1.1
    e = cmath.exp(-1j * a)
    for w in (0.1, -0.05 + 0.1j):
        chi = w / (e * (1 + w))
        psi = e * chi / (1 - e * chi)
        assert abs(psi - w) < 1e-15
        assert abs((1 + w) / w * chi - cmath.exp(1j * a)) < 1e-14


def test_rotations_compose():
    a, b = 0.4, 1.9
    out = free_mult_convolve(circle_atom(a, 8), circle_atom(b, 8)).as_array()
    ref = circle_atom(a + b, 8).as_array()
    assert max(abs(out - ref)) < 1e-12


def test_identity_element_of_multiplicative_convolution():
    mu = MomentSeries((F(1), F(1, 2), F(1, 3), F(1, 5), F(-1, 7), F(1, 9)), kind="circle")
    one = MomentSeries(tuple(F(1) for _ in range(6)), kind="circle")
    assert free_mult_convolve(mu, one).coefficients == mu.coefficients


def test_s_multiplicativity_through_order_14():
    p = MomentSeries(tuple([F(1)] + [F(1, k + 1) for k in range(1, 15)]), kind="circle")
    q = MomentSeries(tuple([F(1)] + [F((-1) ** k, 2 ** k) for k in range(1, 15)]), kind="circle")
    prod = free_mult_convolve(p, q)
    lhs = s_transform_series(prod).coefficients
    sp, sq = s_transform_series(p), s_transform_series(q)
    assert lhs == (sp * sq).coefficients[: len(lhs)]


def test_s_round_trip():
    p = MomentSeries(tuple([F(1)] + [F(k, 2 * k + 3) for k in range(1, 9)]), kind="circle")
    assert moments_from_s(s_transform_series(p)).coefficients == p.coefficients


def test_exp_linear_family_is_a_semigroup_under_boxtimes():
    # law(t) boxtimes law(s) = law(t + s), pushed through the whole pipeline
    t, s, n = 0.3, 0.45, 5
    law = lambda u: moments_from_s(exp_linear_s(u, n))
    out = free_mult_convolve(law(t), law(s)).as_array()
    ref = law(t + s).as_array()
    assert max(abs(out - ref)) < 1e-12
    assert exp_linear_s(t, 3).coefficients[0] == pytest.approx(math.exp(t))
