"""Brownian drivers, delta-driver paths and Monte Carlo checks of SLE properties."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chordal import atom_map_forward, atom_map_reverse, moment_rhs
from .measures import MeasurePath, Segment, point

ATOM_MASS = 2.0


@dataclass
class DriverPath:
    times: np.ndarray
    values: np.ndarray
    kappa: float
    seed: int
    path_index: int = 0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def step_normals(seed: int, path_index: int, n: int) -> np.ndarray:
    """Standard normals for steps ``0..n-1`` of one path.

    Philox is counter based: step ``k`` always consumes raw draws ``2k`` and
    ``2k+1`` of the stream keyed by ``(seed, path_index)`` (Box-Muller), so a
    path does not depend on how many other paths were drawn or in which order.
    """
    bg = np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64))
    raw = bg.random_raw(2 * n).reshape(n, 2)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])


def sample_driver(kappa: float, t_end: float, dt: float = 1e-3, seed: int = 0, path_index: int = 0) -> DriverPath:
    """``U_t = B_{kappa t}`` sampled on a uniform grid, ``U_0 = 0``."""
    if kappa < 0 or dt <= 0 or t_end <= 0:
        raise ValueError("need kappa >= 0, dt > 0, t_end > 0")
    n = int(round(t_end / dt))
    if not math.isclose(n * dt, t_end, rel_tol=1e-9):
        raise ValueError("t_end must be a multiple of dt")
    times = np.linspace(0.0, t_end, n + 1)
    inc = math.sqrt(kappa * dt) * step_normals(seed, path_index, n)
    return DriverPath(times, np.concatenate([[0.0], np.cumsum(inc)]), float(kappa), seed, path_index)


def driver_to_path(driver: DriverPath) -> MeasurePath:
    """Piecewise-constant path ``2 delta_{U_{t_k}}`` on ``[t_k, t_{k+1})``."""
    segs = tuple(Segment(float(a), float(b), point(float(u), ATOM_MASS))
                 for a, b, u in zip(driver.times[:-1], driver.times[1:], driver.values[:-1]))
    return MeasurePath(segs, mass_sup=ATOM_MASS)


# ---------------------------------------------------------------------------
# exact per-segment maps for atom drivers

atom_step_forward = atom_map_forward
atom_step_reverse = atom_map_reverse


def slit_reverse(driver: DriverPath, z, k_hi: int, k_lo: int = 0, mass: float = ATOM_MASS):
    """``g_{t_lo} o g_{t_hi}^{-1}(z)`` for the delta path of ``driver``, exact per segment.

    ``k_hi``, ``k_lo`` index the driver grid.
    """
    w = np.asarray(z, dtype=complex).copy()
    dt = driver.dt
    for k in range(k_hi - 1, k_lo - 1, -1):
        w = atom_step_reverse(w, driver.values[k], mass, dt)
    return w


def slit_forward(driver: DriverPath, z, k_end: int, mass: float = ATOM_MASS):
    g = np.asarray(z, dtype=complex).copy()
    for k in range(k_end):
        g = atom_step_forward(g, driver.values[k], mass, driver.dt)
    return g


def batched_atom_moments(values: np.ndarray, dt: float, order: int, mass: float = ATOM_MASS) -> np.ndarray:
    """Output-law moments ``a_0..a_N`` for a batch of piecewise-constant atom drivers.

    ``values`` has shape ``(paths, steps)``.  On each segment the moment ODE is
    linear with a nilpotent matrix (it only raises the index by two), so the
    truncated exponential series is exact.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    E, n_steps = values.shape
    a = np.zeros((E, order + 1))
    a[:, 0] = 1.0
    powers = np.arange(order - 1)
    for k in range(n_steps):
        m = mass * values[:, k, None] ** powers
        term, acc = a, a.copy()
        for j in range(1, order // 2 + 1):
            term = dt * moment_rhs(term, m) / j
            acc = acc + term
        a = acc
    return a


# ---------------------------------------------------------------------------

@dataclass
class SLEReport:
    kappa: float
    n_paths: int
    s: float
    t: float
    dt: float
    seed: int
    order: int
    full: np.ndarray        # (paths, order + 1) moments of nu for the flow over [0, t - s]
    increment: np.ndarray   # same for the recentred increment flow over [s, t]
    extra: dict = field(default_factory=dict)

    def mean(self, sample: np.ndarray) -> np.ndarray:
        return sample.mean(axis=0)

    def stderr(self, sample: np.ndarray) -> np.ndarray:
        return sample.std(axis=0, ddof=1) / math.sqrt(sample.shape[0])

    @property
    def two_sample_z(self) -> np.ndarray:
        """Per-moment ``(mean_full - mean_inc) / sqrt(se_full^2 + se_inc^2)``; nan where both are deterministic."""
        d = self.mean(self.full) - self.mean(self.increment)
        se = np.hypot(self.stderr(self.full), self.stderr(self.increment))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, d / se, np.where(np.abs(d) < 1e-12, 0.0, np.inf))

    def odd_z(self, sample: np.ndarray) -> dict[int, float]:
        out = {}
        for k in range(3, self.order + 1, 2):
            se = self.stderr(sample)[k]
            out[k] = float(self.mean(sample)[k] / se) if se > 0 else 0.0
        return out

    @property
    def a2_deviation(self) -> float:
        target = ATOM_MASS * (self.t - self.s)
        return float(max(np.max(np.abs(self.full[:, 2] - target)), np.max(np.abs(self.increment[:, 2] - target))))

    def rows(self) -> list[dict]:
        z2 = self.two_sample_z
        odd_f, odd_i = self.odd_z(self.full), self.odd_z(self.increment)
        out = []
        for k in range(2, self.order + 1):
            out.append({
                "k": k,
                "mean_full": float(self.mean(self.full)[k]), "se_full": float(self.stderr(self.full)[k]),
                "mean_increment": float(self.mean(self.increment)[k]),
                "se_increment": float(self.stderr(self.increment)[k]),
                "z_two_sample": float(z2[k]),
                "z_odd_full": odd_f.get(k, float("nan")), "z_odd_increment": odd_i.get(k, float("nan")),
            })
        return out

    def passed(self, n_sigma: float = 3.0, a2_tol: float = 1e-12) -> bool:
        odd = [*self.odd_z(self.full).values(), *self.odd_z(self.increment).values()]
        return (self.a2_deviation <= a2_tol and all(abs(v) <= n_sigma for v in odd)
                and abs(self.two_sample_z[4]) <= n_sigma)

    def to_text(self) -> str:
        lines = [f"kappa={self.kappa} paths={self.n_paths} s={self.s} t={self.t} dt={self.dt} seed={self.seed}",
                 f"max |a_2 - 2(t-s)| = {self.a2_deviation:.3e}",
                 f"{'k':>2} {'mean(i)':>12} {'se(i)':>10} {'mean(ii)':>12} {'se(ii)':>10} {'z(i-ii)':>8}"
                 f" {'z_odd(i)':>8} {'z_odd(ii)':>9}"]
        for r in self.rows():
            lines.append(f"{r['k']:>2} {r['mean_full']:>12.6f} {r['se_full']:>10.2e} {r['mean_increment']:>12.6f}"
                         f" {r['se_increment']:>10.2e} {r['z_two_sample']:>8.2f} {r['z_odd_full']:>8.2f}"
                         f" {r['z_odd_increment']:>9.2f}")
        return "\n".join(lines)


def sle_property_report(kappa: float, n_paths: int, s: float, t: float, seed: int = 0,
                        dt: float = 1e-3, order: int = 6) -> SLEReport:
    """Monte Carlo check of the scaling/stationarity/symmetry properties of SLE.

    Each path ``j`` samples one driver on ``[0, t]``.  Sample (i) is the flow
    driven by ``U`` on ``[0, t - s]``; sample (ii) the flow driven by the
    recentred increments ``U_{s+r} - U_s``, ``r in [0, t - s]``.  With
    ``t - s <= s`` the two windows are disjoint, so the samples are independent.
    """
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    if n_paths < 100:
        raise ValueError("ensemble needs at least 100 paths")
    if order < 4:
        raise ValueError("order must be >= 4")
    n_t = int(round(t / dt))
    n_s = int(round(s / dt))
    if not (math.isclose(n_t * dt, t, rel_tol=1e-9) and math.isclose(n_s * dt, s, rel_tol=1e-9, abs_tol=1e-15)):
        raise ValueError("s and t must be multiples of dt")
    U = np.stack([sample_driver(kappa, t, dt, seed, j).values for j in range(n_paths)])
    width = n_t - n_s
    full = batched_atom_moments(U[:, :width], dt, order)
    inc = batched_atom_moments(U[:, n_s:n_t] - U[:, n_s, None], dt, order)
    return SLEReport(kappa, n_paths, s, t, dt, seed, order, full, inc,
                     {"disjoint_windows": t - s <= s + 1e-12})
