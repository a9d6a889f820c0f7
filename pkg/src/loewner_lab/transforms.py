"""Cauchy and psi transforms, Stieltjes inversion, and the random-matrix moment oracle."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import CircleMeasure, MeasureError, MomentSeries, RealMeasure

log = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-6


class InversionError(RuntimeError):
    """Evaluator failure during Stieltjes inversion; ``probe`` is the failing point."""

    def __init__(self, message: str, probe: complex):
        super().__init__(f"{message} at probe {probe!r}")
        self.probe = probe


def _sqrt_cut(z, c):
    """Branch of sqrt(z^2 - c^2) with cut [-c, c] and sqrt ~ z at infinity."""
    return np.sqrt(z - c) * np.sqrt(z + c)


def cauchy_values(measure: RealMeasure, z, method: str = "auto"):
    """``int mu(dx) / (z - x)`` for arbitrary off-support ``z`` (no half-plane check).

    ``method="auto"`` uses the closed form for catalog laws and quadrature
    on the density nodes otherwise; ``"quadrature"`` forces the latter.
    """
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for x, m in measure.atoms:
        out += m / (z - x)
    law = measure.law
    if method == "auto" and law is not None and law.name in ("semicircle", "arcsine"):
        v = law.get("variance")
        if law.name == "semicircle":
            out += 2.0 / (z + _sqrt_cut(z, 2.0 * math.sqrt(v)))
        else:
            out += 1.0 / _sqrt_cut(z, math.sqrt(2.0 * v))
        return out
    flat = z.reshape(-1)
    acc = out.reshape(-1)
    for d in measure.densities:
        for i in range(0, flat.size, 256):
            acc[i:i + 256] += (d.node_mass[None, :] / (flat[i:i + 256, None] - d.grid[None, :])).sum(axis=1)
    return acc.reshape(z.shape)


def cauchy_transform(measure: RealMeasure, z, method: str = "auto"):
    """Cauchy transform on the upper half-plane; the result has ``Im <= 0``."""
    za = np.asarray(z, dtype=complex)
    if np.any(za.imag <= 0):
        raise ValueError("cauchy_transform needs Im z > 0; reflect lower half-plane points yourself")
    val = cauchy_values(measure, za, method)
    return complex(val) if np.ndim(z) == 0 else val


def herglotz_values(measure: CircleMeasure, w):
    """``int (e^{i theta} + w) / (e^{i theta} - w) mu(d theta)`` for ``|w| < 1``."""
    w = np.asarray(w, dtype=complex)
    out = np.zeros_like(w)
    for a, m in measure.atoms:
        e = np.exp(1j * a)
        out += m * (e + w) / (e - w)
    law = measure.law
    if law is not None and law.name == "haar":
        return out + law.get("mass")
    if law is not None and law.name == "poisson":
        rho = law.get("rho")
        return out + (1 + rho * w) / (1 - rho * w)
    flat = w.reshape(-1)
    acc = out.reshape(-1)
    for d in measure.densities:
        e = np.exp(1j * d.grid)[None, :]
        for i in range(0, flat.size, 256):
            ww = flat[i:i + 256, None]
            acc[i:i + 256] += (e + ww) / (e - ww) @ d.node_mass
    return acc.reshape(w.shape)


def psi_transform(measure: CircleMeasure, z):
    """``int z e^{-i theta} / (1 - z e^{-i theta}) mu(d theta)`` for ``|z| < 1``."""
    za = np.asarray(z, dtype=complex)
    if np.any(np.abs(za) >= 1):
        raise ValueError("psi_transform needs |z| < 1")
    val = 0.5 * (herglotz_values(measure, za) - measure.total_mass)
    return complex(val) if np.ndim(z) == 0 else val


# ---------------------------------------------------------------------------

@dataclass
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    mass_defect: float
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return 1.0 - self.mass_defect

    def cdf(self) -> np.ndarray:
        dx = np.diff(self.grid)
        return np.concatenate([[0.0], np.cumsum(0.5 * dx * (self.values[1:] + self.values[:-1]))])

    def mass_between(self, lo: float, hi: float) -> float:
        x = np.linspace(lo, hi, 2001)
        return float(np.trapezoid(np.interp(x, self.grid, self.values, left=0, right=0), x))

    def moments(self, n_max: int) -> np.ndarray:
        return np.array([np.trapezoid(self.values * self.grid ** k, self.grid) for k in range(n_max + 1)])


def richardson(values: Sequence[np.ndarray], eps: Sequence[float], mode: str = "linear") -> np.ndarray:
    """Extrapolate samples taken at decreasing ``eps`` to ``eps = 0``.

    ``linear`` uses the two smallest rungs; ``full`` runs Neville's scheme
    over every rung (polynomial in eps).
    """
    if mode == "linear":
        e1, e2 = eps[-2], eps[-1]
        return (e1 * values[-1] - e2 * values[-2]) / (e1 - e2)
    if mode != "full":
        raise ValueError(f"unknown extrapolation mode {mode!r}")
    p = [np.asarray(v, dtype=float) for v in values]
    n = len(p)
    for m in range(1, n):
        p = [(eps[i] * p[i + 1] - eps[i + m] * p[i]) / (eps[i] - eps[i + m]) for i in range(n - m)]
    return p[0]


DEFAULT_LADDER = (1e-2, 5e-3, 2.5e-3)


def auto_grid_size(window: tuple[float, float], eps_ladder: Sequence[float] = DEFAULT_LADDER,
                   per_eps: float = 2.0) -> int:
    """Grid size giving ``per_eps`` points per smallest rung; coarser grids bias the mass."""
    width = window[1] - window[0]
    return int(math.ceil(width * per_eps / min(eps_ladder))) + 1


def stieltjes_invert(evaluator: Callable[[np.ndarray], np.ndarray], window: tuple[float, float],
                     grid_size: int | None = None, eps_ladder: Sequence[float] = DEFAULT_LADDER,
                     mode: str = "linear") -> DensityCurve:
    """Density ``-(1/pi) lim Im G(x + i eps)`` on a uniform grid over ``window``.

    ``evaluator`` maps an array of upper half-plane points to ``G`` values.
    ``grid_size=None`` picks :func:`auto_grid_size`.
    Values in ``[-1e-6, 0)`` are clipped silently; more negative values are
    clipped too but counted in ``meta["negative"]`` and logged.
    """
    eps = [float(e) for e in eps_ladder]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("eps ladder needs >= 2 strictly decreasing positive rungs")
    lo, hi = window
    if grid_size is None:
        grid_size = auto_grid_size(window, eps)
    x = np.linspace(lo, hi, grid_size)
    used = eps[-2:] if mode == "linear" else eps
    probes = (x[None, :] + 1j * np.asarray(used)[:, None]).ravel()
    try:
        g = np.asarray(evaluator(probes), dtype=complex)
    except Exception as exc:  # locate the failing probe
        for p in probes:
            try:
                evaluator(np.array([p]))
            except Exception:
                raise InversionError(f"evaluator failed: {exc}", complex(p)) from exc
        raise
    if g.shape != probes.shape:
        g = g.reshape(probes.shape)
    bad = ~np.isfinite(g)
    if bad.any():
        raise InversionError("evaluator returned a non-finite value", complex(probes[np.argmax(bad)]))
    dens = -g.imag.reshape(len(used), grid_size) / math.pi
    est = richardson(list(dens), used, mode)
    neg = est < -NEGATIVE_TOL
    meta = {"window": (lo, hi), "ladder": tuple(eps), "mode": mode,
            "negative": int(neg.sum()), "min_value": float(est.min())}
    if neg.any():
        log.warning("stieltjes_invert: %d values below %g (min %.3g)", neg.sum(), -NEGATIVE_TOL, est.min())
    values = np.clip(est, 0.0, None)
    mass = float(np.trapezoid(values, x))
    return DensityCurve(x, values, 1.0 - mass, meta)


# ---------------------------------------------------------------------------

def empirical_matrix_moments(n: int, samples: int, seed: int, k_max: int = 4) -> MomentSeries:
    """Averaged normalized trace moments ``E (1/n) Tr X^k`` of a Wigner (GUE) ensemble.

    Off-diagonal entries are complex Gaussian with ``E|X_ij|^2 = 1/n``, diagonal
    entries real Gaussian with variance ``1/n``.  Sample ``j`` draws from its own
    child of ``SeedSequence(seed)``, so results do not depend on evaluation order.
    ``stderr`` carries the Monte Carlo standard errors.
    """
    if n < 2 or samples < 1 or k_max < 2:
        raise ValueError("need n >= 2, samples >= 1, k_max >= 2")
    children = np.random.SeedSequence(seed).spawn(samples)
    traces = np.empty((samples, k_max + 1))
    for j, child in enumerate(children):
        rng = np.random.default_rng(child)
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        # (A + A^*)/2 has off-diagonal E|.|^2 = 1, diagonal variance 1
        h = (a + a.conj().T) / (2.0 * math.sqrt(n))
        p = np.eye(n, dtype=complex)
        for k in range(k_max + 1):
            traces[j, k] = np.trace(p).real / n
            p = p @ h
    mean = traces.mean(axis=0)
    se = traces.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.full(k_max + 1, np.inf)
    return MomentSeries(tuple(float(v) for v in mean), stderr=tuple(float(s) for s in se))
