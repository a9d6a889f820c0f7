"""Radial Loewner flows on the unit disk driven by paths of measures on the circle."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .chordal import _refined_pieces, capacity
from .measures import TWO_PI, CircleMeasure, MeasureError, MeasurePath, MomentSeries, circle_moments
from .ode import StepStats, dopri5
from .parallel import max_workers
from .transforms import herglotz_values

SWALLOW_DIST = 1e-6
MIN_STEP = 1e-12
DEFAULT_TOL = 1e-9
R_LADDER = (0.99, 0.995)


def _arcs(measure: CircleMeasure) -> tuple[bool, list[tuple[float, float]], list[float]]:
    """(full circle?, density arcs as (start, length), atom angles)."""
    arcs = []
    for d in measure.densities:
        pos = d.values > 0
        if pos.all():
            return True, [], []
        th = d.grid
        gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
        # runs of positive nodes on the periodic grid
        idx = np.flatnonzero(pos)
        if not idx.size:
            continue
        start = idx[0]
        run = [start]
        for i in idx[1:]:
            if i == run[-1] + 1:
                run.append(i)
            else:
                arcs.append((th[run[0]], th[run[-1]] - th[run[0]]))
                run = [i]
        arcs.append((th[run[0]], th[run[-1]] - th[run[0]]))
        # merge a run wrapping through angle 0
        if pos[0] and pos[-1] and len(arcs) > 1:
            (a0, l0), (a1, l1) = arcs[0], arcs[-1]
            arcs = arcs[1:-1] + [(a1, l1 + gaps[-1] + l0)]
    return False, arcs, [a for a, m in measure.atoms if m > 0]


def circle_support_distance(measure: CircleMeasure, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    full, arcs, atoms = _arcs(measure)
    r = np.abs(g)
    if full:
        return 1.0 - r
    d = np.full(g.shape, np.inf)
    phi = np.angle(g) % TWO_PI
    for a in atoms:
        d = np.minimum(d, np.abs(g - np.exp(1j * a)))
    for a, length in arcs:
        inside = ((phi - a) % TWO_PI) <= length
        ends = np.minimum(np.abs(g - np.exp(1j * a)), np.abs(g - np.exp(1j * (a + length))))
        d = np.minimum(d, np.where(inside, 1.0 - r, ends))
    return d


@dataclass
class RadialFlowResult:
    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    alive: np.ndarray
    swallow_times: np.ndarray
    swallow_brackets: np.ndarray
    log_radius: np.ndarray  # L(t) = ln g_t'(0)
    diagnostics: dict = field(default_factory=dict)


def _time_grid(t_end, times):
    if times is None:
        times = np.linspace(0.0, t_end, 11)
    times = np.unique(np.concatenate([[0.0], np.asarray(times, dtype=float), [t_end]]))
    if times[0] < 0 or times[-1] > t_end:
        raise ValueError("sample times must lie in [0, t_end]")
    return times


def _check_circle(path: MeasurePath):
    if not path.on_circle:
        raise MeasureError("radial flows need a path of measures on the circle")


def forward_flow_radial(path: MeasurePath, points, t_end: float, tol: float = DEFAULT_TOL, times=None,
                        swallow_dist: float = SWALLOW_DIST, min_step: float = MIN_STEP) -> RadialFlowResult:
    """Integrate ``d/dt g = g int (e^{i theta} + g) / (e^{i theta} - g) mu_t(d theta)``, ``g_0 = z``."""
    _check_circle(path)
    z = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    if np.any(np.abs(z) >= 1):
        raise ValueError("initial points must lie in the open unit disk")
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
                return g * herglotz_values(at(t), g)

            def cap(t, g, at=at):
                d = circle_support_distance(at(t), g)
                v = np.abs(rhs(t, g))
                return 0.5 * float(np.min(d / np.maximum(v, 1e-300)))

            def monitor(t0, t1, g0, g1, at=at):
                violations[0] += int(np.sum(np.abs(g1) < np.abs(g0) * (1 - 1e-12)))
                return (circle_support_distance(at(t1), g1) < swallow_dist) | (np.abs(g1) >= 1)

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
    return RadialFlowResult(times, z, values, alive_rows, t_swallow, brackets, capacity(path, times), diag)


def conformal_radius(result: RadialFlowResult, t: float) -> float:
    """``g_t'(0) = exp(L(t))``."""
    i = int(np.argmin(np.abs(result.times - t)))
    if not math.isclose(result.times[i], t, abs_tol=1e-12):
        raise ValueError(f"t = {t} not on the result grid")
    return math.exp(result.log_radius[i])


def _reverse_block(pieces, w, tol):
    for a, b, at, _ in reversed(pieces):
        def rhs(tau, v, at=at, b=b):
            return -v * herglotz_values(at(b - tau), v)

        gap = float(np.min(1.0 - np.abs(w)))
        h0 = min(gap * gap / (4.0 * at(b).total_mass), b - a)
        w = dopri5(rhs, 0.0, b - a, w, rtol=tol, atol=tol * 1e-3, h0=h0, min_step=1e-15).y
    return w


REVERSE_CHUNK = 256


def reverse_flow_radial(path: MeasurePath, z, t_hi: float, t_lo: float = 0.0, tol: float = DEFAULT_TOL):
    """``g_{t_lo}(g_{t_hi}^{-1}(z))`` via ``dw/dtau = -w H_{mu_{t_hi - tau}}(w)``."""
    _check_circle(path)
    za = np.asarray(z, dtype=complex)
    w = np.atleast_1d(za).ravel().copy()
    if np.any(np.abs(w) >= 1):
        raise ValueError("reverse_flow_radial needs |z| < 1")
    if not 0 <= t_lo <= t_hi <= path.end * (1 + 1e-12):
        raise ValueError(f"need 0 <= t_lo <= t_hi <= {path.end}")
    pieces = _refined_pieces(path, t_lo, t_hi) if t_hi > t_lo else []
    if w.size <= REVERSE_CHUNK:
        w = _reverse_block(pieces, w, tol)
    else:
        order = np.argsort(np.angle(w), kind="stable")
        blocks = [order[i:i + REVERSE_CHUNK] for i in range(0, w.size, REVERSE_CHUNK)]
        with ThreadPoolExecutor(max_workers()) as pool:
            done = list(pool.map(lambda idx: _reverse_block(pieces, w[idx], tol), blocks))
        out = np.empty_like(w)
        for idx, vals in zip(blocks, done):
            out[idx] = vals
        w = out
    return complex(w[0]) if za.ndim == 0 else w.reshape(za.shape)


def psi_flow(path: MeasurePath, z, t: float, tol: float = DEFAULT_TOL):
    """``psi_t(z) = f_t(z) / (1 - f_t(z))``, the moment function of the output law."""
    f = reverse_flow_radial(path, z, t, 0.0, tol)
    return f / (1.0 - f)


# ---------------------------------------------------------------------------
# moment level

MomentDriver = Callable[[float], tuple[float, np.ndarray]]


@dataclass
class RadialMomentFlow:
    times: np.ndarray
    values: np.ndarray  # (len(times), order + 1) complex; column 0 is the total mass 1
    order: int

    def at(self, t: float) -> MomentSeries:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, abs_tol=1e-12):
            raise ValueError(f"t = {t} not on the moment-flow grid")
        return MomentSeries(tuple(complex(v) for v in self.values[i]), float(t), kind="circle")

    def psi(self, z, i: int):
        z = np.asarray(z, dtype=complex)
        return np.polynomial.polynomial.polyval(z, np.concatenate([[0], self.values[i, 1:]]))


def radial_moment_rhs(c: np.ndarray, mass: float, p: np.ndarray) -> np.ndarray:
    """``d/dt c_m = -[m c_m mass + 2 sum_{k<m} k c_k p_{m-k}]`` for ``m >= 1``; ``c_0`` is fixed."""
    N = c.shape[-1] - 1
    dc = np.zeros_like(c)
    kc = np.arange(N + 1) * c
    for m in range(1, N + 1):
        s = np.sum(kc[..., 1:m] * p[..., m - 1:0:-1], axis=-1) if m > 1 else 0.0
        dc[..., m] = -(m * c[..., m] * mass + 2.0 * s)
    return dc


def _path_driver(path: MeasurePath, order: int):
    """Per-piece ``t -> (mass, p_0..p_N)`` closures."""
    out = []
    for a, b, at, const in path.pieces(0.0, path.end):
        if const:
            mom = np.array(circle_moments(at(a), order).coefficients)
            mass = at(a).total_mass
            out.append((a, b, (lambda t, mass=mass, mom=mom: (mass, mom)), True))
        else:
            def drv(t, at=at):
                m = at(t)
                return m.total_mass, np.array(circle_moments(m, order).coefficients)
            out.append((a, b, drv, False))
    return out


def radial_moment_flow(driver: Union[MeasurePath, MomentDriver], order: int, t_end: float,
                       tol: float = DEFAULT_TOL, times=None) -> RadialMomentFlow:
    """Coefficients ``c_1..c_N`` of ``psi_t`` (moments of the output law), ``c_n(0) = 1``.

    ``driver`` is a circle path or a callable ``t -> (mass, p)`` with
    ``p[n]`` the n-th moment of the driving measure for ``n <= order``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    times = _time_grid(t_end, times)
    if isinstance(driver, MeasurePath):
        _check_circle(driver)
        if t_end > driver.end:
            raise MeasureError(f"path ends at {driver.end}, before t_end = {t_end}")
        pieces = [(a, b, d) for a, b, d, _ in _path_driver(driver, order)]
    else:
        pieces = [(0.0, t_end, driver)]
    cuts = sorted({*times, *(a for a, _, _ in pieces if a < t_end)})
    c = np.ones(order + 1, dtype=complex)
    out = np.empty((times.size, order + 1), dtype=complex)
    out[0] = c
    row = 1
    for lo, hi in zip(cuts, cuts[1:]):
        mid = 0.5 * (lo + hi)
        drv = next(d for a, b, d in pieces if a <= mid <= b)

        def rhs(t, y, drv=drv):
            mass, p = drv(t)
            p = np.asarray(p)
            if p.shape[-1] < order + 1:
                raise ValueError(f"driver supplies {p.shape[-1] - 1} moments, need {order}")
            return radial_moment_rhs(y, mass, p[: order + 1])

        c = dopri5(rhs, lo, hi, c, rtol=tol, atol=tol * 1e-3).y
        if row < times.size and math.isclose(hi, times[row], abs_tol=1e-14):
            out[row] = c
            row += 1
    return RadialMomentFlow(times, out, order)


# ---------------------------------------------------------------------------
# fixed point

@dataclass
class RadialFixedPoint:
    """Self-consistent driver ``mu_t = nu_t`` represented by moments on a time grid."""

    times: np.ndarray
    moments: np.ndarray  # (len(times), order + 1), column 0 = 1
    derivatives: np.ndarray
    iterations: int
    history: list
    order: int

    def spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.times, self.moments, self.derivatives, axis=0)

    def driver(self) -> MomentDriver:
        sp = self.spline()
        return lambda t: (1.0, sp(t))

    def at(self, t: float) -> MomentSeries:
        return MomentSeries(tuple(complex(v) for v in self.spline()(t)), float(t), kind="circle")

    def psi(self, z, t: float):
        c = self.spline()(t)
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=complex), np.concatenate([[0], c[1:]]))

    def psi_dt(self, z, t: float):
        c = self.spline().derivative()(t)
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=complex), np.concatenate([[0], c[1:]]))


def fixed_point_closed(order: int, t_end: float, times=None, tol: float = 1e-12) -> RadialMomentFlow:
    """The self-consistent moment ODE with ``p = c`` solved directly (no iteration)."""
    times = _time_grid(t_end, times)
    c = np.ones(order + 1, dtype=complex)
    out = np.empty((times.size, order + 1), dtype=complex)
    out[0] = c
    for i, (lo, hi) in enumerate(zip(times, times[1:])):
        c = dopri5(lambda t, y: radial_moment_rhs(y, 1.0, y), lo, hi, c, rtol=tol, atol=tol * 1e-3).y
        out[i + 1] = c
    return RadialMomentFlow(times, out, order)


def radial_fixed_point(order: int, t_end: float, n_grid: int = 201, damping: float = 0.5,
                       tol: float = 1e-10, max_iter: int = 500, ode_tol: float = 1e-12) -> RadialFixedPoint:
    """Solve ``c_n = p_n`` by damped Picard iteration of the moment flow.

    Each sweep integrates the moment ODE driven by the current iterate
    (cubic Hermite interpolation in time, exact slopes from the ODE) and
    relaxes ``p <- (1 - damping) p + damping c`` until the sup change is
    below ``tol``.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    times = np.linspace(0.0, t_end, n_grid)
    # start from the Haar-driven solution
    p = np.exp(-np.outer(times, np.arange(order + 1))).astype(complex)
    p[:, 0] = 1.0
    dp = np.array([radial_moment_rhs(row, 1.0, np.zeros_like(row)) for row in p])
    history = []
    for it in range(1, max_iter + 1):
        sp = CubicHermiteSpline(times, p, dp, axis=0)
        c = np.empty_like(p)
        c[0] = 1.0
        y = c[0].copy()
        rhs = lambda t, v: radial_moment_rhs(v, 1.0, sp(t))
        for i in range(n_grid - 1):
            y = dopri5(rhs, times[i], times[i + 1], y, rtol=ode_tol, atol=ode_tol * 1e-3).y
            c[i + 1] = y
        change = float(np.max(np.abs(c - p)))
        history.append(change)
        p = (1 - damping) * p + damping * c
        dp = np.array([radial_moment_rhs(row, 1.0, row) for row in p])
        if change < tol:
            break
    else:
        raise RuntimeError(f"fixed-point iteration did not converge in {max_iter} sweeps "
                           f"(last change {history[-1]:.3g})")
    return RadialFixedPoint(times, p, dp, it, history, order)


def double_speed_residual(fp: RadialFixedPoint, z, t: float) -> float:
    """Max of ``|d psi/dt + 2 (psi + 1/2) z psi'|`` over ``z``; time derivative by central differences."""
    z = np.asarray(z, dtype=complex)
    h = min(1e-3, t / 2, (fp.times[-1] - t) / 2) if 0 < t < fp.times[-1] else None
    if h is None or h <= 0:
        raise ValueError("t must lie strictly inside the fixed-point grid")
    sp = fp.spline()
    dpsi_dt = (fp.psi(z, t + h) - fp.psi(z, t - h)) / (2 * h)
    c = sp(t)
    psi = fp.psi(z, t)
    dpsi = np.polynomial.polynomial.polyval(z, np.arange(1, fp.order + 1) * c[1:])
    return float(np.max(np.abs(dpsi_dt + 2.0 * (psi + 0.5) * z * dpsi)))


# ---------------------------------------------------------------------------

@dataclass
class AngleDensity:
    grid: np.ndarray
    values: np.ndarray
    mass_defect: float
    meta: dict = field(default_factory=dict)


@dataclass
class RadialSample:
    time: float
    curve: AngleDensity | None
    moments: MomentSeries
    check_moments: np.ndarray
    discrepancy: float
    flagged: bool


def taylor_coefficients(fn: Callable[[np.ndarray], np.ndarray], n_max: int, radius: float = 0.5,
                        n_points: int = 64) -> np.ndarray:
    """Taylor coefficients ``0..n_max`` of a function analytic on ``|z| <= radius`` (FFT)."""
    phi = TWO_PI * np.arange(n_points) / n_points
    vals = fn(radius * np.exp(1j * phi))
    coef = np.fft.fft(vals) / n_points
    return coef[: n_max + 1] / radius ** np.arange(n_max + 1)


def angle_density(f_values: Sequence[np.ndarray], r_ladder: Sequence[float] = R_LADDER) -> np.ndarray:
    """Boundary density ``(1/2 pi) Re (1 + f)/(1 - f)`` extrapolated linearly in ``1 - r``."""
    d = [np.real((1 + f) / (1 - f)) / TWO_PI for f in f_values]
    e1, e2 = 1 - r_ladder[-2], 1 - r_ladder[-1]
    return (e1 * d[-1] - e2 * d[-2]) / (e1 - e2)


def rl_map(driver: Union[MeasurePath, RadialFixedPoint], sample_times: Sequence[float], n_angles: int = 1024,
           r_ladder: Sequence[float] = R_LADDER, tol: float = 1e-10, order: int | None = None,
           crosscheck_tol: float = 1e-4) -> list[RadialSample]:
    """Output laws of the radial map at the requested times.

    For a circle path: angular densities from radial limits of the Herglotz
    function of ``f_t``, moments from :func:`radial_moment_flow`, cross-checked
    against Taylor coefficients of ``psi_t``.  For a fixed point (moment-level
    driver): moments only, cross-checked by re-running the moment flow driven
    by the fixed point and comparing with the driver itself.
    """
    times = sorted(float(t) for t in sample_times)
    t_max = times[-1] if times else 0.0
    if isinstance(driver, RadialFixedPoint):
        order = driver.order if order is None else order
        if order > driver.order:
            raise ValueError(f"fixed point carries {driver.order} moments, {order} requested")
        flow = radial_moment_flow(driver.driver(), order, t_max, tol, times)
        out = []
        for t in times:
            mom = flow.at(t)
            check = np.array(driver.at(t).coefficients)[: order + 1]
            disc = float(np.max(np.abs(check - np.array(mom.coefficients))))
            out.append(RadialSample(t, None, mom, check, disc, disc > crosscheck_tol))
        return out
    order = 8 if order is None else order
    flow = radial_moment_flow(driver, order, max(t_max, 1e-300), tol, times) if t_max > 0 else None
    phi = TWO_PI * np.arange(n_angles) / n_angles

    def one(t: float) -> RadialSample:
        mom = flow.at(t) if (flow is not None and t > 0) else \
            MomentSeries(tuple([1.0 + 0j] * (order + 1)), t, kind="circle")
        if t == 0:
            f_of = lambda z: z
        else:
            f_of = lambda z: reverse_flow_radial(driver, z, t, 0.0, tol)
        fs = [f_of(r * np.exp(1j * phi)) for r in r_ladder]
        dens = angle_density(fs, r_ladder)
        mass = float(np.sum(dens) * TWO_PI / n_angles)
        curve = AngleDensity(phi, np.clip(dens, 0, None), 1.0 - mass,
                             {"r_ladder": tuple(r_ladder), "negative": int(np.sum(dens < -1e-6))})
        check = taylor_coefficients(lambda z: (lambda f: f / (1 - f))(f_of(z)), order)
        check[0] = 1.0
        disc = float(np.max(np.abs(check - np.array(mom.coefficients))))
        return RadialSample(t, curve, mom, check, disc, disc > crosscheck_tol)

    with ThreadPoolExecutor(max_workers()) as pool:
        return list(pool.map(one, times))
