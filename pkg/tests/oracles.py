"""Independent reference computations used by the tests.

Nothing here calls into loewner_lab: closed forms, brute-force enumeration of
non-crossing partitions, and adaptive quadrature from scipy.
"""
import cmath
import math
from fractions import Fraction
from itertools import product

import numpy as np
from scipy import integrate


def set_partitions(n):
    """All set partitions of {0..n-1} as lists of blocks (restricted growth strings)."""
    if n == 0:
        yield []
        return
    for rgs in product(range(n), repeat=n):
        if rgs[0] != 0 or any(rgs[i] > max(rgs[:i]) + 1 for i in range(1, n)):
            continue
        blocks = {}
        for i, b in enumerate(rgs):
            blocks.setdefault(b, []).append(i)
        yield list(blocks.values())


def is_noncrossing(blocks):
    for p in blocks:
        for q in blocks:
            if p is q:
                continue
            for a, c in ((a, c) for a in p for c in p if a < c):
                for b, d in ((b, d) for b in q for d in q if b < d):
                    if a < b < c < d:
                        return False
    return True


def noncrossing_partitions(n):
    return [p for p in set_partitions(n) if is_noncrossing(p)]


def moments_from_free_cumulants(kappa, n_max):
    """m_n = sum over NC(n) of prod kappa_{|V|}; ``kappa[j]`` is the j-th cumulant (kappa[0] unused)."""
    out = [Fraction(1)]
    for n in range(1, n_max + 1):
        s = 0
        for blocks in noncrossing_partitions(n):
            term = 1
            for v in blocks:
                term *= kappa[len(v)]
            s += term
        out.append(s)
    return out


def catalan(k):
    return math.comb(2 * k, k) // (k + 1)


def semicircle_density(x, v):
    return np.sqrt(np.maximum(4 * v - x * x, 0.0)) / (2 * math.pi * v)


def arcsine_density_t(x, t):
    """Output law of the constant driver 2 delta_0 at time t: 1/(pi sqrt(4t - x^2))."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(np.abs(x) < 2 * math.sqrt(t), 1.0 / (math.pi * np.sqrt(4 * t - x * x)), 0.0)


def quad_cauchy_semicircle(z, v=1.0):
    """int rho(x) / (z - x) dx by adaptive quadrature (x = 2 sqrt(v) cos th)."""
    r = 2 * math.sqrt(v)

    def f(th, part):
        x = r * math.cos(th)
        val = semicircle_density(x, v) * r * math.sin(th) / (z - x)
        return val.real if part == 0 else val.imag

    re = integrate.quad(f, 0, math.pi, args=(0,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    im = integrate.quad(f, 0, math.pi, args=(1,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return complex(re, im)


def quad_cauchy_arcsine_t(z, t):
    """Cauchy transform of 1/(pi sqrt(4t - x^2)) via x = 2 sqrt(t) cos th (density dx = dth / pi)."""
    r = 2 * math.sqrt(t)

    def f(th, part):
        val = 1.0 / (math.pi * (z - r * math.cos(th)))
        return val.real if part == 0 else val.imag

    re = integrate.quad(f, 0, math.pi, args=(0,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    im = integrate.quad(f, 0, math.pi, args=(1,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return complex(re, im)


def g_arcsine(z, t):
    """Closed-form chordal map of the constant driver 2 delta_0: sqrt(z^2 + 4t) with Im > 0."""
    w = np.sqrt(np.asarray(z, dtype=complex) ** 2 + 4 * t)
    return np.where(w.imag < 0, -w, w)


def g_semicircle_closed(z, v):
    """(z - sqrt(z^2 - 4v)) / (2v) with the branch that behaves like 1/z at infinity."""
    s = cmath.sqrt(z * z - 4 * v)
    g = (z - s) / (2 * v)
    if abs(g * z - 1) > abs((z + s) / (2 * v) * z - 1):
        g = (z + s) / (2 * v)
    return g


def upper_grid(n=20, seed=7):
    """Deterministic scatter of points in the upper half-plane away from the axis."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-3, 3, n) + 1j * rng.uniform(0.3, 3, n)
