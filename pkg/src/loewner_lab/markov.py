"""Transition maps and kernels of the chordal and radial output processes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chordal import DEFAULT_TOL, capacity, cauchy_flow, contour_moments, driver_range, reverse_flow
from .measures import MeasurePath, MomentSeries
from .radial import reverse_flow_radial, taylor_coefficients
from .transforms import DEFAULT_LADDER, DensityCurve, stieltjes_invert


def transition_map(path: MeasurePath, s: float, t: float, z, tol: float = DEFAULT_TOL):
    """``H_{s,t} = g_s o g_t^{-1}`` on the upper half-plane."""
    if s > t:
        raise ValueError(f"need s <= t, got s = {s}, t = {t}")
    return reverse_flow(path, z, t, s, tol)


@dataclass
class KernelProbe:
    s: float
    t: float
    x: float
    curve: DensityCurve

    @property
    def mass_ok(self) -> bool:
        return abs(self.curve.mass_defect) <= 1e-3


def _driver_extent(path: MeasurePath, s: float, t: float) -> float:
    return float(max(np.abs(driver_range(path, s, t))))


def default_kernel_window(path: MeasurePath, s: float, t: float, x: float, pad: float = 0.5):
    da = float(capacity(path, [s, t])[1] - capacity(path, [s, t])[0]) if t > s else 0.0
    half = 2.0 * math.sqrt(da) + abs(x) + _driver_extent(path, s, t) + pad
    return (x - half, x + half)


def transition_kernel_density(path: MeasurePath, s: float, t: float, x: float, window=None,
                              grid_size: int | None = None, eps_ladder: Sequence[float] = DEFAULT_LADDER,
                              tol: float = 1e-10) -> KernelProbe:
    """Density of ``k_{s,t}(x; .)`` by inverting ``z -> 1 / (H_{s,t}(z) - x)``."""
    if s > t:
        raise ValueError(f"need s <= t, got s = {s}, t = {t}")
    window = default_kernel_window(path, s, t, x) if window is None else window
    if s == t:
        G = lambda z: 1.0 / (z - x)
    else:
        G = lambda z: 1.0 / (transition_map(path, s, t, z, tol) - x)
    curve = stieltjes_invert(G, window, grid_size, eps_ladder)
    curve.meta.update({"s": s, "t": t, "x": x})
    return KernelProbe(s, t, x, curve)


def kernel_moments(path: MeasurePath, s: float, t: float, x: float, order: int,
                   tol: float = 1e-10) -> MomentSeries:
    """Moments of ``k_{s,t}(x; .)`` from contour integrals of ``1 / (H_{s,t}(z) - x)``."""
    if s > t:
        raise ValueError(f"need s <= t, got s = {s}, t = {t}")
    lo, hi = default_kernel_window(path, s, t, x, pad=0.0)
    radius = 1.5 * max(abs(lo), abs(hi)) + 0.25
    if s == t:
        G = lambda z: 1.0 / (z - x)
    else:
        G = lambda z: 1.0 / (transition_map(path, s, t, z, tol) - x)
    m = contour_moments(G, radius, order, n_points=max(64, 4 * order))
    return MomentSeries(tuple(float(v) for v in m), t)


def chapman_kolmogorov_residual(path: MeasurePath, s: float, r: float, t: float, probes,
                                tol: float = DEFAULT_TOL) -> float:
    """``max |H_{s,r}(H_{r,t}(z)) - H_{s,t}(z)|`` over the probe points."""
    if not s <= r <= t:
        raise ValueError("need s <= r <= t")
    z = np.asarray(probes, dtype=complex)
    lhs = transition_map(path, s, r, transition_map(path, r, t, z, tol), tol)
    rhs = transition_map(path, s, t, z, tol)
    return float(np.max(np.abs(lhs - rhs)))


def composition_residual(path: MeasurePath, s: float, t: float, probes, tol: float = DEFAULT_TOL) -> float:
    """``max |G_s(H_{s,t}(z)) - G_t(z)|``."""
    z = np.asarray(probes, dtype=complex)
    h = transition_map(path, s, t, z, tol)
    gs = 1.0 / h if s == 0 else cauchy_flow(path, h, s, tol)
    return float(np.max(np.abs(gs - cauchy_flow(path, z, t, tol))))


def probe_arc(radius: float = 5.0, n: int = 16) -> np.ndarray:
    """Points on the upper half of ``|z| = radius``, away from the real axis."""
    th = (np.arange(n) + 0.5) * math.pi / n
    return radius * np.exp(1j * th)


def radial_transition_moments(path: MeasurePath, s: float, t: float, xi: complex, order: int,
                              tol: float = 1e-10, radius: float = 0.5, n_points: int = 64) -> MomentSeries:
    """Moments ``int zeta^n k_{s,t}(xi; d zeta)``, ``n = 0..order``.

    Read off as Taylor coefficients of ``H xi / (1 - H xi)`` with ``H = H_{s,t}``
    (FFT on a circle of ``radius``); for ``s = t`` this gives ``xi^n``.
    """
    if s > t:
        raise ValueError(f"need s <= t, got s = {s}, t = {t}")
    if abs(abs(xi) - 1) > 1e-12:
        raise ValueError("xi must lie on the unit circle")
    if order < 1:
        raise ValueError("order must be >= 1")

    def fn(z):
        h = reverse_flow_radial(path, z, t, s, tol) if t > s else z
        return h * xi / (1 - h * xi)

    c = taylor_coefficients(fn, order, radius, max(n_points, 2 * order + 2))
    c[0] = 1.0
    return MomentSeries(tuple(complex(v) for v in c), t, kind="circle")
