"""Truncated formal power series and the R/S-transform calculus.

Coefficient lists are plain Python sequences so that ``fractions.Fraction``
inputs stay exact end to end; floats and complex numbers work the same way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .measures import MeasureError, MomentSeries

INVERSE = "1/z"
POWER = "z"


class SeriesError(ValueError):
    pass


def _zero(x):
    return x - x


def _one(x):
    return x - x + 1


def mul(a: Sequence, b: Sequence, n: int) -> list:
    """Product truncated to degree ``n``."""
    z = _zero(a[0])
    out = [z] * (n + 1)
    for i, ai in enumerate(a[: n + 1]):
        if ai == 0:
            continue
        for j, bj in enumerate(b[: n + 1 - i]):
            out[i + j] += ai * bj
    return out


def reciprocal(a: Sequence, n: int) -> list:
    if a[0] == 0:
        raise SeriesError("reciprocal needs a nonzero constant term")
    out = [_one(a[0]) / a[0]]
    for k in range(1, n + 1):
        s = _zero(a[0])
        for j in range(1, min(k, len(a) - 1) + 1):
            s += a[j] * out[k - j]
        out.append(-s / a[0])
    return out


def compose(a: Sequence, b: Sequence, n: int) -> list:
    """``a(b(x))`` truncated to degree ``n``; requires ``b[0] == 0``."""
    if b[0] != 0:
        raise SeriesError("inner series must have zero constant term")
    z = _zero(a[0] * b[0])
    out = [z] * (n + 1)
    for coeff in reversed(list(a[: n + 1])):
        out = mul(out, b, n)
        out[0] += coeff
    return out


def derivative(a: Sequence) -> list:
    return [k * a[k] for k in range(1, len(a))] or [_zero(a[0])]


def _pad(a: Sequence, n: int) -> list:
    a = list(a[: n + 1])
    return a + [_zero(a[0])] * (n + 1 - len(a))


def revert(a: Sequence, n: int) -> list:
    """Compositional inverse of ``a`` (``a[0] = 0``, ``a[1] != 0``) through degree ``n``.

    Newton iteration ``b <- b - (a(b) - x) / a'(b)``; each pass doubles the
    number of correct coefficients.
    """
    a = _pad(a, n)
    if a[0] != 0:
        raise SeriesError("series to revert must vanish at 0")
    if a[1] == 0:
        raise SeriesError("series to revert needs a nonzero linear term")
    z = _zero(a[1])
    b = [z, _one(a[1]) / a[1]] + [z] * (n - 1)
    da = derivative(a)
    correct = 2
    while correct <= n:
        resid = compose(a, b, n)
        resid[1] -= 1
        step = mul(resid, reciprocal(compose(da, b, n), n), n)
        b = [bi - si for bi, si in zip(b, step)]
        correct *= 2
    return b


def revert_lagrange(a: Sequence, n: int) -> list:
    """Reversion by Lagrange inversion, ``[x^k] b = (1/k) [u^{k-1}] (u / a(u))^k``.

    Independent of :func:`revert`; used to cross-check it.
    """
    a = _pad(a, n + 1)
    if a[0] != 0 or a[1] == 0:
        raise SeriesError("series must have a[0] = 0 and a[1] != 0")
    q = reciprocal(a[1:], n)  # u / a(u)
    out = [_zero(a[1])]
    power = [_one(a[1])] + [_zero(a[1])] * n
    for k in range(1, n + 1):
        power = mul(power, q, n)
        out.append(power[k - 1] / k)
    return out


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormalSeries:
    """Truncated series with a fixed variable convention.

    ``convention == "1/z"``: ``sum_n c_n z^{-(n+1)}`` (Cauchy-transform type).
    ``convention == "z"``: ``pole / z + sum_n c_n z^n``.
    """

    coefficients: tuple
    convention: str = POWER
    pole: object = 0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if self.convention not in (INVERSE, POWER):
            raise SeriesError(f"unknown convention {self.convention!r}")
        if self.convention == INVERSE and self.pole != 0:
            raise SeriesError("a pole term only exists in the z convention")
        if len(self.coefficients) < 3:
            raise SeriesError("need at least three coefficients")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def _check(self, other: "FormalSeries"):
        if self.convention != other.convention:
            raise SeriesError(f"convention mismatch: {self.convention} vs {other.convention}")

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        n = min(self.order, other.order)
        return FormalSeries(tuple(a + b for a, b in zip(self.coefficients[: n + 1], other.coefficients)),
                            self.convention, self.pole + other.pole)

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        if self.convention != POWER or self.pole != 0 or other.pole != 0:
            raise SeriesError("products are defined for pole-free power series only")
        n = min(self.order, other.order)
        return FormalSeries(tuple(mul(self.coefficients, other.coefficients, n)), POWER)

    def __call__(self, z: complex) -> complex:
        if self.convention == INVERSE:
            return sum(c * z ** (-(k + 1)) for k, c in enumerate(self.coefficients))
        value = sum(c * z ** k for k, c in enumerate(self.coefficients))
        return value + self.pole / z if self.pole != 0 else value


def series_revert(series: FormalSeries, order: int | None = None) -> FormalSeries:
    """Compositional inverse.

    * ``z`` convention without pole, ``c_0 = 0``, ``c_1 != 0``: ordinary reversion.
    * ``1/z`` convention with ``c_0 != 0`` (a Cauchy-type series ``G``): returns
      ``K`` with ``G(K(w)) = w`` in the ``z`` convention with pole ``c_0``.
    * ``z`` convention with a nonzero pole: the inverse of the previous case.
    """
    c = list(series.coefficients)
    if series.convention == POWER and series.pole == 0:
        n = series.order if order is None else order
        if n > series.order:
            raise SeriesError("requested order exceeds the input order")
        return FormalSeries(tuple(revert(c, n)), POWER)
    if series.convention == INVERSE:
        if c[0] == 0:
            raise SeriesError("leading 1/z coefficient must be nonzero")
        n = series.order if order is None else order
        if not 3 <= n <= series.order:
            raise SeriesError(f"order must lie in [3, {series.order}]")
        # G(z) = g(1/z), g(u) = sum c_k u^{k+1};  K = 1/k with k = revert(g)
        g = [_zero(c[0])] + c
        k = revert(g, n + 1)
        r = reciprocal(k[1:], n)  # w / k(w)
        return FormalSeries(tuple(r[1:]), POWER, r[0])
    p = series.pole
    n = series.order + 1 if order is None else order
    # 1/K(w) = w / (p + sum d_j w^{j+1}) = k(w);  G(z) = g(1/z), g = revert(k)
    denom = [p] + c
    k = [_zero(p)] + reciprocal(denom, n)
    g = revert(k, n + 1)
    return FormalSeries(tuple(g[1: n + 2]), INVERSE)


# ---------------------------------------------------------------------------
# R-transform

def _is_one(x, tol=1e-12) -> bool:
    if isinstance(x, (int, float, complex)):
        return abs(x - 1) <= tol
    return x == 1


def cauchy_series(moments: MomentSeries) -> FormalSeries:
    return FormalSeries(moments.coefficients, INVERSE)


def r_transform_series(moments: MomentSeries) -> FormalSeries:
    """``R(z) = K(z) - 1/z = sum_n kappa_{n+1} z^n`` from moments ``m_0..m_N``.

    Returns the free cumulants ``kappa_1..kappa_N``.
    """
    if moments.kind != "real":
        raise MeasureError("R-transform needs real moments")
    if not _is_one(moments[0]):
        raise MeasureError("R-transform needs a probability measure (m_0 = 1)")
    n = moments.order
    if n < 3:
        raise SeriesError("need moments through order 3")
    K = series_revert(cauchy_series(moments), n)
    return FormalSeries(K.coefficients, POWER)


def moments_from_r(r: FormalSeries, time: float = 0.0) -> MomentSeries:
    """Inverse pipeline ``R -> K -> G -> moments``; returns ``m_0..m_N`` with ``N = len(R)``."""
    kappa = list(r.coefficients)
    one = _one(kappa[0])
    K = FormalSeries(tuple(kappa), POWER, one)
    G = series_revert(K, len(kappa))
    return MomentSeries(G.coefficients[: len(kappa) + 1], time)


def free_add_convolve(a: MomentSeries, b: MomentSeries, order: int | None = None) -> MomentSeries:
    n = min(a.order, b.order) if order is None else order
    if n > min(a.order, b.order):
        raise SeriesError("requested order exceeds operand order")
    ra = r_transform_series(a.truncate(n))
    rb = r_transform_series(b.truncate(n))
    return moments_from_r(ra + rb)


# ---------------------------------------------------------------------------
# S-transform

def psi_series(moments: MomentSeries) -> FormalSeries:
    c = list(moments.coefficients)
    return FormalSeries(tuple([_zero(c[1])] + c[1:]), POWER)


def s_transform_series(moments: MomentSeries) -> FormalSeries:
    """``S(z) = (1+z)/z * chi(z)`` with ``chi`` the inverse of ``psi = sum p_n z^n``.

    From ``p_1..p_N`` this yields ``N`` coefficients ``s_0..s_{N-1}``.
    """
    if moments.kind != "circle":
        raise MeasureError("S-transform needs circle moments")
    c = list(moments.coefficients)
    if c[1] == 0 or (isinstance(c[1], (float, complex)) and abs(c[1]) < 1e-14):
        raise MeasureError("S-transform needs a nonzero first moment")
    n = moments.order
    if n < 3:
        raise SeriesError("need moments through order 3")
    chi = revert([_zero(c[1])] + c[1:], n)
    chi_over_w = chi[1:]
    s = mul([_one(c[1]), _one(c[1])], chi_over_w, n - 1)
    return FormalSeries(tuple(s), POWER)


def moments_from_s(s: FormalSeries, time: float = 0.0) -> MomentSeries:
    """Inverse pipeline ``S -> chi -> psi -> p_1..p_N`` for a probability measure."""
    coeffs = list(s.coefficients)
    n = len(coeffs)
    one = _one(coeffs[0])
    # chi(w) = w S(w) / (1 + w)
    geo = [one if k % 2 == 0 else -one for k in range(n)]
    chi = [_zero(one)] + mul(coeffs, geo, n - 1)
    p = revert(chi, n)
    return MomentSeries(tuple([one] + p[1:]), time, kind="circle")


def free_mult_convolve(a: MomentSeries, b: MomentSeries, order: int | None = None) -> MomentSeries:
    n = min(a.order, b.order) if order is None else order
    if n > min(a.order, b.order):
        raise SeriesError("requested order exceeds operand order")
    sa = s_transform_series(a.truncate(n))
    sb = s_transform_series(b.truncate(n))
    return moments_from_s(sa * sb)


def exp_linear_s(t: float, n: int) -> FormalSeries:
    """Coefficients of ``exp(2 t (z + 1/2)) = e^t sum (2t)^k z^k / k!``."""
    return FormalSeries(tuple(math.exp(t) * (2 * t) ** k / math.factorial(k) for k in range(n)), POWER)


def semicircle_moments(variance, n: int) -> MomentSeries:
    """Exact moments of the centered semicircle law (Catalan numbers)."""
    out = []
    for k in range(n + 1):
        out.append(0 * variance if k % 2 else math.comb(k, k // 2) // (k // 2 + 1) * variance ** (k // 2))
    return MomentSeries(tuple(out))


def arcsine_moments(variance, n: int) -> MomentSeries:
    """Exact moments of the arcsine law on ``[-sqrt(2v), sqrt(2v)]``: ``(2v)^k C(2k,k)/4^k``."""
    out = []
    for k in range(n + 1):
        j = k // 2
        out.append(0 * variance if k % 2 else (2 * variance) ** j * math.comb(2 * j, j) / 4 ** j)
    return MomentSeries(tuple(out))
