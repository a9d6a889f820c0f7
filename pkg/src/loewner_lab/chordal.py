"""Chordal Loewner flows driven by paths of measures on the real line."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .measures import MeasureError, MeasurePath, MomentSeries, RealMeasure, real_moments
from .ode import StepStats, dopri5
from .parallel import max_workers
from .transforms import DEFAULT_LADDER, DensityCurve, cauchy_values, stieltjes_invert

SWALLOW_DIST = 1e-6
MIN_STEP = 1e-12
DEFAULT_TOL = 1e-9


def support_distance(measure: RealMeasure, w: np.ndarray) -> np.ndarray:
    """Euclidean distance from each ``w`` to the support of ``measure``."""
    w = np.asarray(w, dtype=complex)
    d = np.full(w.shape, np.inf)
    for lo, hi in measure.support_intervals():
        x = np.clip(w.real, lo, hi)
        d = np.minimum(d, np.abs(w - x))
    return d


def _refined_pieces(path: MeasurePath, lo: float, hi: float, extra: Sequence[float] = ()):
    cuts = sorted({lo, hi, *path.breakpoints(lo, hi), *(t for t in extra if lo < t < hi)})
    out = []
    for a, b in zip(cuts, cuts[1:]):
        ((_, _, at, const),) = path.pieces(a, b)
        out.append((a, b, at, const))
    return out


def driver_range(path: MeasurePath, lo: float, hi: float) -> tuple[float, float]:
    """Smallest interval containing the supports of the driving measures on ``[lo, hi]``."""
    left, right = math.inf, -math.inf
    for a, b, at, const in _refined_pieces(path, lo, hi) if hi > lo else []:
        for u in ([a] if const else np.linspace(a, b, 9)):
            for l, r in at(float(u)).support_intervals():
                left, right = min(left, l), max(right, r)
    return (left, right) if left <= right else (0.0, 0.0)


def output_window(path: MeasurePath, t: float, a: float, pad: float) -> tuple[float, float]:
    """Window ``[min U - 2 sqrt(a) - pad, max U + 2 sqrt(a) + pad]`` around the driver's range."""
    dl, dr = driver_range(path, 0.0, t)
    half = 2.0 * math.sqrt(a)
    return min(dl, 0.0) - half - pad, max(dr, 0.0) + half + pad


def _mass_integral(a: float, b: float, at: Callable, const: bool) -> float:
    if const:
        return at(a).total_mass * (b - a)
    return quad(lambda s: at(s).total_mass, a, b, epsabs=1e-14, epsrel=1e-12)[0]


def capacity(path: MeasurePath, times: Sequence[float]) -> np.ndarray:
    """``a(t) = int_0^t mu_s(R) ds`` at each time."""
    times = np.asarray(times, dtype=float)
    t_max = float(times.max()) if times.size else 0.0
    out = np.zeros_like(times)
    acc, t_acc = 0.0, 0.0
    for a, b, at, const in _refined_pieces(path, 0.0, t_max, times):
        acc += _mass_integral(a, b, at, const)
        t_acc = b
        out[np.isclose(times, b, rtol=0, atol=1e-14)] = acc
    return out


@dataclass
class FlowResult:
    times: np.ndarray
    points: np.ndarray
    values: np.ndarray           # (len(times), len(points))
    alive: np.ndarray            # same shape, bool
    swallow_times: np.ndarray    # inf when not swallowed before the horizon
    swallow_brackets: np.ndarray  # (len(points), 2)
    capacity: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _time_grid(t_end: float, times) -> np.ndarray:
    if times is None:
        times = np.linspace(0.0, t_end, 11)
    times = np.unique(np.concatenate([[0.0], np.asarray(times, dtype=float), [t_end]]))
    if times[0] < 0 or times[-1] > t_end:
        raise ValueError("sample times must lie in [0, t_end]")
    return times


def forward_flow(path: MeasurePath, points, t_end: float, tol: float = DEFAULT_TOL, times=None,
                 swallow_dist: float = SWALLOW_DIST, min_step: float = MIN_STEP,
                 cap_mode: str = "speed") -> FlowResult:
    """Integrate ``d/dt g_t(z) = int mu_t(dx) / (g_t(z) - x)``, ``g_0(z) = z``.

    Steps are capped so no point can cross the support in one step:
    ``cap_mode="bound"`` uses the worst case ``dist^2 / (2 mass)``;
    ``"speed"`` uses ``dist / (2 |velocity|)``, which is never smaller and
    coincides with it next to an atom.

    Points closer than ``swallow_dist`` to the support of the driver, or whose
    step size underflows ``min_step``, are frozen; their swallow time is the
    midpoint of the bracketing step.
    """
    if cap_mode not in ("speed", "bound"):
        raise ValueError(f"unknown cap_mode {cap_mode!r}")
    z = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    if np.any(z.imag <= 0):
        raise ValueError("initial points must lie in the upper half-plane")
    if t_end > path.end:
        raise MeasureError(f"path ends at {path.end}, before t_end = {t_end}")
    times = _time_grid(t_end, times)
    n = z.size
    values = np.empty((times.size, n), dtype=complex)
    alive_rows = np.empty((times.size, n), dtype=bool)
    values[0], alive_rows[0] = z, True
    state = z.copy()
    alive = np.ones(n, dtype=bool)
    t_swallow = np.full(n, np.inf)
    brackets = np.full((n, 2), np.nan)
    stats = StepStats()
    violations = [0]
    row = 1
    for a, b, at, _ in _refined_pieces(path, 0.0, t_end, times):
        idx = np.flatnonzero(alive)
        if idx.size:
            def rhs(t, g, at=at):
                return cauchy_values(at(t), g)

            def cap(t, g, at=at):
                m = at(t)
                d = support_distance(m, g)
                if cap_mode == "bound":
                    return 0.5 * float(d.min()) ** 2 / m.total_mass
                v = np.abs(cauchy_values(m, g))
                return 0.5 * float(np.min(d / np.maximum(v, 1e-300)))

            def monitor(t0, t1, g0, g1, at=at):
                violations[0] += int(np.sum(g1.imag >= g0.imag))
                return (support_distance(at(t1), g1) < swallow_dist) | (g1.imag <= 0)

            res = dopri5(rhs, a, b, state[idx], rtol=tol, atol=tol * 1e-3, step_cap=cap,
                         monitor=monitor, min_step=min_step, retire_on_underflow=True)
            stats.merge(res.stats)
            state[idx] = res.y
            for r in res.retired:
                j = idx[r.index]
                alive[j] = False
                t_swallow[j] = 0.5 * (r.t_lo + r.t_hi)
                brackets[j] = (r.t_lo, r.t_hi)
        if row < times.size and math.isclose(b, times[row], abs_tol=1e-14):
            values[row], alive_rows[row] = state, alive
            row += 1
    diag = {"accepted": stats.accepted, "rejected": stats.rejected, "min_step": stats.min_step,
            "retired_on_underflow": stats.retired_on_underflow, "monotonicity_violations": violations[0],
            "swallow_dist": swallow_dist, "tol": tol}
    return FlowResult(times, z, values, alive_rows, t_swallow, brackets, capacity(path, times), diag)


def _initial_reverse_step(w: np.ndarray, mass: float) -> float:
    return float(np.min(w.imag)) ** 2 / (4.0 * mass)


def _upper(w):
    return np.where(w.imag < 0, -w, w)


def atom_map_forward(g, u, mass, tau):
    """Flow of ``dg/dt = mass / (g - u)`` over time ``tau`` (closed form)."""
    return u + _upper(np.sqrt((g - u) ** 2 + 2.0 * mass * tau))


def atom_map_reverse(w, u, mass, tau):
    """Inverse of :func:`atom_map_forward`."""
    return u + _upper(np.sqrt((w - u) ** 2 - 2.0 * mass * tau))


def _single_atom(measure):
    if isinstance(measure, RealMeasure) and len(measure.atoms) == 1 and not measure.densities:
        return measure.atoms[0]
    return None


def _reverse_block(pieces, w: np.ndarray, tol: float) -> np.ndarray:
    for a, b, at, const in reversed(pieces):
        atom = _single_atom(at(a)) if const else None
        if atom is not None:  # held atom: exact slit map
            w = atom_map_reverse(w, atom[0], atom[1], b - a)
            continue

        def rhs(tau, v, at=at, b=b):
            return -cauchy_values(at(b - tau), v)

        h0 = min(_initial_reverse_step(w, at(b).total_mass), b - a)
        w = dopri5(rhs, 0.0, b - a, w, rtol=tol, atol=tol * 1e-3, h0=h0, min_step=1e-15).y
    return w


REVERSE_CHUNK = 256


def reverse_flow(path: MeasurePath, z, t_hi: float, t_lo: float = 0.0, tol: float = DEFAULT_TOL):
    """``g_{t_lo}(g_{t_hi}^{-1}(z))`` by integrating the characteristic ODE backwards in time.

    ``dw/dtau = -int mu_{t_hi - tau}(dx) / (w - x)``, ``w(0) = z``.  With
    ``t_lo = 0`` this is the inverse map ``f_{t_hi}(z)``.  Large point sets are
    sorted by real part and integrated in chunks, since neighbouring points
    pass their stiff stretches at similar times.
    """
    za = np.asarray(z, dtype=complex)
    w = np.atleast_1d(za).ravel().copy()
    if np.any(w.imag <= 0):
        raise ValueError("reverse_flow needs Im z > 0")
    if not 0 <= t_lo <= t_hi <= path.end * (1 + 1e-12):
        raise ValueError(f"need 0 <= t_lo <= t_hi <= {path.end}")
    pieces = _refined_pieces(path, t_lo, t_hi) if t_hi > t_lo else []
    exact = all(const and _single_atom(at(a)) is not None for a, _, at, const in pieces)
    if w.size <= REVERSE_CHUNK or exact:  # closed-form pieces need no chunking
        w = _reverse_block(pieces, w, tol)
    else:
        order = np.argsort(w.real, kind="stable")
        blocks = [order[i:i + REVERSE_CHUNK] for i in range(0, w.size, REVERSE_CHUNK)]
        with ThreadPoolExecutor(max_workers()) as pool:
            done = list(pool.map(lambda idx: _reverse_block(pieces, w[idx], tol), blocks))
        out = np.empty_like(w)
        for idx, vals in zip(blocks, done):
            out[idx] = vals
        w = out
    return complex(w[0]) if za.ndim == 0 else w.reshape(za.shape)


def cauchy_flow(path: MeasurePath, z, t: float, tol: float = DEFAULT_TOL):
    """``G_t(z) = 1 / f_t(z)``, the Cauchy transform of the output law at time t."""
    return 1.0 / reverse_flow(path, z, t, 0.0, tol)


# ---------------------------------------------------------------------------

@dataclass
class MomentFlow:
    times: np.ndarray
    values: np.ndarray  # (len(times), order + 1)
    order: int

    def at(self, t: float) -> MomentSeries:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, abs_tol=1e-12):
            raise ValueError(f"t = {t} not on the moment-flow grid")
        return MomentSeries(tuple(float(v) for v in self.values[i]), float(t))

    def trajectory(self, k: int) -> np.ndarray:
        return self.values[:, k]


def moment_rhs(a: np.ndarray, m: np.ndarray, unit_weights: bool = False) -> np.ndarray:
    """``d/dt a_{n+2} = sum_{k<=n} (k+1) a_k m_{n-k}``; ``a_0``, ``a_1`` are constant.

    ``a`` and ``m`` may carry leading batch axes.  ``unit_weights`` drops the
    ``(k+1)`` factor; that variant is wrong and only kept for comparison.
    """
    N = a.shape[-1] - 1
    w = np.ones(N + 1) if unit_weights else np.arange(1, N + 2, dtype=float)
    da = np.zeros_like(a)
    wa = a * w
    for n in range(N - 1):
        da[..., n + 2] = np.sum(wa[..., : n + 1] * m[..., n::-1][..., : n + 1], axis=-1)
    return da


def moment_flow(path: MeasurePath, order: int, t_end: float, tol: float = DEFAULT_TOL, times=None,
                unit_weights: bool = False) -> MomentFlow:
    """Moments ``a_0..a_N`` of the output laws, integrated from the coefficient ODE."""
    if order < 4:
        raise ValueError("moment_flow needs order >= 4")
    if t_end > path.end:
        raise MeasureError(f"path ends at {path.end}, before t_end = {t_end}")
    times = _time_grid(t_end, times)
    a = np.zeros(order + 1)
    a[0] = 1.0
    out = np.empty((times.size, order + 1))
    out[0] = a
    row = 1
    for lo, hi, at, const in _refined_pieces(path, 0.0, t_end, times):
        if const:
            m_const = np.array(real_moments(at(lo), order - 2).coefficients)

            def rhs(t, y, m=m_const):
                return moment_rhs(y, m, unit_weights)
        else:
            def rhs(t, y, at=at):
                return moment_rhs(y, np.array(real_moments(at(t), order - 2).coefficients), unit_weights)
        a = dopri5(rhs, lo, hi, a, rtol=tol, atol=tol * 1e-3).y
        if row < times.size and math.isclose(hi, times[row], abs_tol=1e-14):
            out[row] = a
            row += 1
    return MomentFlow(times, out, order)


# ---------------------------------------------------------------------------

def contour_moments(G: Callable[[np.ndarray], np.ndarray], radius: float, n_max: int,
                    n_points: int = 64) -> np.ndarray:
    """Moments from Cauchy-transform values on the upper half of ``|z| = radius``.

    ``a_k = mean over the full circle of z^{k+1} G(z)``; the lower half is
    filled in by ``G(conj z) = conj G(z)``.
    """
    th = (np.arange(n_points) + 0.5) * math.pi / n_points
    z = radius * np.exp(1j * th)
    g = G(z)
    return np.array([np.mean((z ** (k + 1) * g).real) for k in range(n_max + 1)])


@dataclass
class MapSample:
    time: float
    curve: DensityCurve | None
    moments: MomentSeries
    check_moments: np.ndarray
    discrepancy: float
    flagged: bool


def cl_map(path: MeasurePath, sample_times: Sequence[float], pad: float = 0.5, grid_size: int | None = None,
           ladder: Sequence[float] = DEFAULT_LADDER, tol: float = 1e-10, order: int = 8,
           crosscheck_tol: float = 1e-4, mode: str = "linear", density: bool = True) -> list[MapSample]:
    """Output laws of the chordal map at the requested times.

    Densities come from Stieltjes inversion of ``G_t``; moments from
    :func:`moment_flow`.  The moments are cross-checked against contour
    integrals of ``G_t`` on a circle enclosing the support, and samples whose
    discrepancy exceeds ``crosscheck_tol`` are flagged.
    """
    times = sorted(float(t) for t in sample_times)
    if times and (times[0] < 0 or times[-1] > path.end):
        raise ValueError("sample times outside the path horizon")
    t_max = times[-1] if times else 0.0
    mf = moment_flow(path, order, max(t_max, 1e-300), tol, times) if t_max > 0 else None
    caps = capacity(path, times)

    def one(i: int) -> MapSample:
        t = times[i]
        if mf is None or t == 0:
            mom = MomentSeries(tuple([1.0] + [0.0] * order), t)
        else:
            mom = mf.at(t)
        G = (lambda z: 1.0 / z) if t == 0 else (lambda z: cauchy_flow(path, z, t, tol))
        curve = None
        if density:
            curve = stieltjes_invert(G, output_window(path, t, caps[i], pad), grid_size, ladder, mode)
        radius = 1.5 * max(np.abs(output_window(path, t, caps[i], 0.0))) + 0.25
        check = contour_moments(G, radius, order)
        disc = float(np.max(np.abs(check - np.asarray(mom.coefficients))))
        return MapSample(t, curve, mom, check, disc, disc > crosscheck_tol)

    with ThreadPoolExecutor(max_workers()) as pool:
        return list(pool.map(one, range(len(times))))


class SupportError(RuntimeError):
    pass


def support_interval(curve: DensityCurve, mass_tol: float = 1e-3, gap_tol: float | None = None,
                     rel_threshold: float = 1e-3, edge_frac: float = 3e-2,
                     defect_tol: float = 1e-3) -> tuple[float, float]:
    """Support ``[lo, hi]`` of a single-interval density curve.

    Starts from the smallest interval carrying at least ``1 - mass_tol`` of the
    curve's mass, then moves each end outward while the density stays above
    ``edge_frac * max``, so square-root edges are not clipped by the mass
    criterion.  Raises :class:`SupportError` if ``|mass_defect| > defect_tol``
    or the interval contains an interior gap (density below
    ``rel_threshold * max``) longer than ``gap_tol`` (default 20 grid steps).
    """
    if abs(curve.mass_defect) > defect_tol:
        raise SupportError(f"mass defect {curve.mass_defect:.3g} exceeds {defect_tol:.3g}")
    x, v = curve.grid, curve.values
    cdf = curve.cdf()
    need = (1.0 - mass_tol) * cdf[-1]
    # for each left end, first right end reaching the required mass
    j = np.searchsorted(cdf, cdf + need, side="left")
    ok = j < x.size
    if not ok.any():
        return float(x[0]), float(x[-1])
    i_idx = np.flatnonzero(ok)
    best = i_idx[np.argmin(x[j[i_idx]] - x[i_idx])]
    lo_i, hi_i = int(best), int(j[best])
    floor = edge_frac * v.max()
    while lo_i > 0 and v[lo_i - 1] >= floor:
        lo_i -= 1
    while hi_i < x.size - 1 and v[hi_i + 1] >= floor:
        hi_i += 1
    dx = float(np.min(np.diff(x)))
    gap_tol = 20 * dx if gap_tol is None else gap_tol
    low = v[lo_i: hi_i + 1] < rel_threshold * v.max()
    run_start = None
    for k, flag in enumerate(low):
        if flag and run_start is None:
            run_start = k
        if not flag and run_start is not None:
            if run_start > 0 and (k - run_start) * dx > gap_tol:
                raise SupportError(f"density gap of length {(k - run_start) * dx:.3g} inside the support")
            run_start = None
    return float(x[lo_i]), float(x[hi_i])


def free_heat_residual(G: Callable[[np.ndarray, float], np.ndarray], points, t: float,
                       h: float = 1e-3) -> float:
    """Max over ``points`` of ``|dG/dt + G dG/dz|`` by central differences."""
    z = np.asarray(points, dtype=complex)
    g = G(z, t)
    dt = (G(z, t + h) - G(z, t - h)) / (2 * h)
    dz = (G(z + h, t) - G(z - h, t)) / (2 * h)
    return float(np.max(np.abs(dt + g * dz)))
