"""Finite measures on the line and on the circle, paths of measures, moments.

Density parts are stored as node positions, density values and *node masses*
(quadrature weight times density).  User-supplied grids get trapezoid
weights; catalog laws are sampled on Chebyshev nodes ``x = c cos(theta)`` and
carry midpoint-in-theta weights, which integrate polynomials against both the
semicircle and the arcsine density exactly and never touch the singular
endpoints of the arcsine law.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_GRID = 4096


class MeasureError(ValueError):
    """Raised when a measure, path or moment series violates its invariants."""


@dataclass(frozen=True, eq=False)
class DensityPart:
    grid: np.ndarray
    values: np.ndarray
    node_mass: np.ndarray

    @classmethod
    def trapezoid(cls, grid, values) -> "DensityPart":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise MeasureError("density grid and values must be 1-d of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise MeasureError("density grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise MeasureError("density values must be finite and nonnegative")
        w = np.zeros_like(grid)
        dx = np.diff(grid)
        w[:-1] += 0.5 * dx
        w[1:] += 0.5 * dx
        return cls(grid, values, w * values)

    @property
    def mass(self) -> float:
        return float(self.node_mass.sum())

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])


@dataclass(frozen=True)
class Law:
    """Catalog tag carried by measures built from a closed form."""

    name: str
    params: tuple[tuple[str, float], ...]

    def get(self, key: str) -> float:
        return dict(self.params)[key]


@dataclass(frozen=True, eq=False)
class RealMeasure:
    """Finite positive measure on R with bounded support.

    ``atoms`` is a tuple of ``(position, mass)``; ``densities`` a tuple of
    :class:`DensityPart`.  ``law`` is set only by :func:`law_catalog` and lets
    transforms use exact closed forms.  ``support_hint`` overrides the support
    extent of the density parts (the Chebyshev grid stops short of the true
    endpoints).
    """

    atoms: tuple[tuple[float, float], ...] = ()
    densities: tuple[DensityPart, ...] = ()
    law: Law | None = None
    support_hint: tuple[float, float] | None = None

    def __post_init__(self):
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", tuple(self.densities))
        for x, m in atoms:
            if not (math.isfinite(x) and math.isfinite(m)) or m < 0:
                raise MeasureError(f"bad atom ({x}, {m})")
        mass = self.total_mass
        if not (mass > 0 and math.isfinite(mass)):
            raise MeasureError(f"total mass must be positive and finite, got {mass}")

    @property
    def total_mass(self) -> float:
        return sum(m for _, m in self.atoms) + sum(d.mass for d in self.densities)

    def support_intervals(self) -> list[tuple[float, float]]:
        out = [(x, x) for x, m in self.atoms if m > 0]
        if self.densities:
            if self.support_hint is not None:
                out.append(self.support_hint)
            else:
                out.extend(d.extent for d in self.densities)
        return out

    @property
    def support_bound(self) -> float:
        return max(max(abs(lo), abs(hi)) for lo, hi in self.support_intervals())

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        atoms = sorted(self.atoms)
        mirrored = sorted((-x, m) for x, m in self.atoms)
        if any(abs(a[0] - b[0]) > tol or abs(a[1] - b[1]) > tol for a, b in zip(atoms, mirrored)):
            return False
        for d in self.densities:
            if not (np.allclose(d.grid, -d.grid[::-1], atol=tol)
                    and np.allclose(d.node_mass, d.node_mass[::-1], atol=tol)):
                return False
        return True

    def scaled(self, factor: float) -> "RealMeasure":
        return RealMeasure(
            atoms=tuple((x, factor * m) for x, m in self.atoms),
            densities=tuple(DensityPart(d.grid, factor * d.values, factor * d.node_mass)
                            for d in self.densities),
            support_hint=self.support_hint,
        )


@dataclass(frozen=True, eq=False)
class CircleMeasure:
    """Finite positive measure on the unit circle, parameterized by angle."""

    atoms: tuple[tuple[float, float], ...] = ()
    densities: tuple[DensityPart, ...] = ()
    law: Law | None = None

    def __post_init__(self):
        atoms = tuple((float(a) % TWO_PI, float(m)) for a, m in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", tuple(self.densities))
        for a, m in atoms:
            if not math.isfinite(m) or m < 0:
                raise MeasureError(f"bad atom ({a}, {m})")
        mass = self.total_mass
        if not (mass > 0 and math.isfinite(mass)):
            raise MeasureError(f"total mass must be positive and finite, got {mass}")

    @property
    def total_mass(self) -> float:
        return sum(m for _, m in self.atoms) + sum(d.mass for d in self.densities)

    def scaled(self, factor: float) -> "CircleMeasure":
        law = self.law if self.law is not None and self.law.name == "haar" else None
        if law is not None:
            law = Law("haar", (("mass", factor * law.get("mass")),))
        return CircleMeasure(
            atoms=tuple((a, factor * m) for a, m in self.atoms),
            densities=tuple(DensityPart(d.grid, factor * d.values, factor * d.node_mass)
                            for d in self.densities),
            law=law,
        )


def periodic_density(angles, values) -> DensityPart:
    """Density on the circle sampled at angles in [0, 2*pi), periodic trapezoid weights."""
    th = np.asarray(angles, dtype=float) % TWO_PI
    order = np.argsort(th)
    th = th[order]
    v = np.asarray(values, dtype=float)[order]
    if np.any(np.diff(th) <= 0):
        raise MeasureError("angle grid must not repeat")
    if np.any(v < 0):
        raise MeasureError("density values must be nonnegative")
    gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
    w = 0.5 * (gaps + np.roll(gaps, 1))
    return DensityPart(th, v, w * v)


Measure = Union[RealMeasure, CircleMeasure]


@dataclass(frozen=True)
class MomentSeries:
    """Truncated moment sequence.

    Real case: ``m_0..m_N``.  Circle case: ``p_0..p_N`` with ``p_0`` the total
    mass and ``p_n`` the integral of ``exp(-i n theta)``.  Entries may be
    ``fractions.Fraction`` for exact calculations.
    """

    coefficients: tuple
    time: float = 0.0
    kind: str = "real"
    stderr: tuple | None = None

    def __post_init__(self):
        coeffs = tuple(self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if self.kind not in ("real", "circle"):
            raise MeasureError(f"unknown moment kind {self.kind!r}")
        min_order = 2 if self.kind == "real" else 1
        if len(coeffs) - 1 < min_order:
            raise MeasureError(f"order must be >= {min_order}")
        if self.kind == "real" and not coeffs[0] > 0:
            raise MeasureError("m_0 must be positive")
        if self.kind == "circle":
            mass = abs(coeffs[0])
            if any(abs(p) > mass * (1 + 1e-9) + 1e-12 for p in coeffs[1:]):
                raise MeasureError("circle moments exceed total mass")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __getitem__(self, k: int):
        return self.coefficients[k]

    def truncate(self, order: int) -> "MomentSeries":
        if order > self.order:
            raise MeasureError(f"cannot extend order {self.order} to {order}")
        se = None if self.stderr is None else self.stderr[: order + 1]
        return MomentSeries(self.coefficients[: order + 1], self.time, self.kind, se)

    def as_array(self) -> np.ndarray:
        dtype = float if self.kind == "real" else complex
        return np.asarray([dtype(c) for c in self.coefficients])


# ---------------------------------------------------------------------------
# moments

def real_moments(measure: RealMeasure, n_max: int) -> MomentSeries:
    if n_max < 2:
        raise MeasureError("n_max must be >= 2")
    m = np.zeros(n_max + 1)
    for x, w in measure.atoms:
        m += w * x ** np.arange(n_max + 1)
    for d in measure.densities:
        m += np.vander(d.grid, n_max + 1, increasing=True).T @ d.node_mass
    return MomentSeries(tuple(float(v) for v in m))


def circle_moments(measure: CircleMeasure, n_max: int) -> MomentSeries:
    if n_max < 1:
        raise MeasureError("n_max must be >= 1")
    n = np.arange(n_max + 1)
    p = np.zeros(n_max + 1, dtype=complex)
    for a, w in measure.atoms:
        p += w * np.exp(-1j * n * a)
    if measure.law is not None and measure.law.name == "haar":
        p[0] = measure.total_mass
        p[1:] = 0.0
    else:
        for d in measure.densities:
            p += np.exp(-1j * np.outer(n, d.grid)) @ d.node_mass
    return MomentSeries(tuple(complex(v) for v in p), kind="circle")


def moment_distance(a: MomentSeries, b: MomentSeries, K: int) -> float:
    """Sup distance between the first K+1 moments (pseudo-metric)."""
    if a.order < K or b.order < K:
        raise MeasureError(f"both series need order >= {K}")
    return float(max(abs(complex(a[k]) - complex(b[k])) for k in range(K + 1)))


# ---------------------------------------------------------------------------
# catalog

@lru_cache(maxsize=8)
def _chebyshev_angles(n: int) -> np.ndarray:
    # descending theta gives ascending x
    return (np.arange(n)[::-1] + 0.5) * math.pi / n


def _chebyshev_part(half_width: float, jacobian_density: Callable[[np.ndarray], np.ndarray],
                    density: Callable[[np.ndarray], np.ndarray], n: int) -> DensityPart:
    th = _chebyshev_angles(n)
    x = half_width * np.cos(th)
    node_mass = jacobian_density(th) * (math.pi / n)
    return DensityPart(x, density(x), node_mass)


def semicircle(variance: float, grid_size: int = DEFAULT_GRID) -> RealMeasure:
    if not variance > 0 or not math.isfinite(variance):
        raise MeasureError("semicircle variance must be positive and finite")
    c = 2.0 * math.sqrt(variance)

    def density(x):
        return np.sqrt(np.clip(4 * variance - x * x, 0.0, None)) / (2 * math.pi * variance)

    def jac(th):
        # f(c cos th) * c sin th
        return c * c * np.sin(th) ** 2 / (2 * math.pi * variance)

    part = _chebyshev_part(c, jac, density, grid_size)
    return RealMeasure(densities=(part,), law=Law("semicircle", (("variance", float(variance)),)),
                       support_hint=(-c, c))


def arcsine(variance: float, grid_size: int = DEFAULT_GRID) -> RealMeasure:
    if not variance > 0 or not math.isfinite(variance):
        raise MeasureError("arcsine variance must be positive and finite")
    c = math.sqrt(2.0 * variance)

    def density(x):
        return 1.0 / (math.pi * np.sqrt(c * c - x * x))

    part = _chebyshev_part(c, lambda th: np.full_like(th, 1.0 / math.pi), density, grid_size)
    return RealMeasure(densities=(part,), law=Law("arcsine", (("variance", float(variance)),)),
                       support_hint=(-c, c))


def point(position: float = 0.0, mass: float = 1.0) -> RealMeasure:
    return RealMeasure(atoms=((position, mass),))


def law_catalog(name: str, **params) -> RealMeasure:
    """Build a catalog law.

    ``semicircle(variance)``, ``arcsine(variance)``, ``point(position)`` and
    ``scaled_point(position, mass)``.
    """
    if name == "semicircle":
        return semicircle(**params)
    if name == "arcsine":
        return arcsine(**params)
    if name == "point":
        return point(params.get("position", 0.0), 1.0)
    if name == "scaled_point":
        return point(params.get("position", 0.0), params.get("mass", 1.0))
    raise MeasureError(f"unknown law {name!r}")


def haar(mass: float = 1.0, grid_size: int = 256) -> CircleMeasure:
    th = np.arange(grid_size) * TWO_PI / grid_size
    part = periodic_density(th, np.full(grid_size, mass / TWO_PI))
    return CircleMeasure(densities=(part,), law=Law("haar", (("mass", float(mass)),)))


def circle_point(angle: float = 0.0, mass: float = 1.0) -> CircleMeasure:
    return CircleMeasure(atoms=((angle, mass),))


def poisson_law(rho: float, grid_size: int = 2048) -> CircleMeasure:
    """Probability measure with density ``(1 - rho^2) / (2 pi |1 - rho e^{i theta}|^2)``.

    Its moments are ``rho^n``; it is the output law of the Haar-driven radial
    flow at time ``-log(rho)``.
    """
    if not 0 <= rho < 1:
        raise MeasureError("rho must lie in [0, 1)")
    th = np.arange(grid_size) * TWO_PI / grid_size
    dens = (1 - rho * rho) / (TWO_PI * np.abs(1 - rho * np.exp(1j * th)) ** 2)
    return CircleMeasure(densities=(periodic_density(th, dens),),
                         law=Law("poisson", (("rho", float(rho)),)))


def mixture(measures: Sequence[Measure], weights: Sequence[float]) -> Measure:
    """Positive combination of measures of one kind; moments combine linearly."""
    pairs = [(m, float(w)) for m, w in zip(measures, weights) if w > 0]
    if not pairs:
        raise MeasureError("mixture needs a positive weight")
    if len(pairs) == 1 and pairs[0][1] == 1.0:
        return pairs[0][0]
    scaled = [m.scaled(w) for m, w in pairs]
    atoms = tuple(a for m in scaled for a in m.atoms)
    dens = tuple(d for m in scaled for d in m.densities)
    if isinstance(scaled[0], CircleMeasure):
        return CircleMeasure(atoms=atoms, densities=dens)
    hints = [m.support_hint for m in scaled if m.support_hint is not None]
    hint = None
    if hints and all(m.support_hint is not None or not m.densities for m in scaled):
        hint = (min(h[0] for h in hints), max(h[1] for h in hints))
    return RealMeasure(atoms=atoms, densities=dens, support_hint=hint)


# ---------------------------------------------------------------------------
# paths

MeasureSource = Union[Measure, Callable[[float], Measure]]


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    source: MeasureSource

    @property
    def is_family(self) -> bool:
        return callable(self.source) and not isinstance(self.source, (RealMeasure, CircleMeasure))

    def at(self, t: float) -> Measure:
        return self.source(t) if self.is_family else self.source


@dataclass(frozen=True)
class MeasurePath:
    """Time-indexed path of measures on ``[0, t_end]``.

    Each segment holds either a fixed measure or a family ``t -> measure``.
    ``interpolation`` is ``"piecewise-constant"`` (default) or
    ``"linear-in-moments"``: knots sit at segment midpoints and the measure
    between two knots is the mixture of the knot measures, so its moments are
    the linear interpolants.  Before the first and after the last knot the
    knot measure is held.
    """

    segments: tuple[Segment, ...]
    interpolation: str = "piecewise-constant"
    mass_sup: float | None = None
    _mass_sup: float = field(init=False, repr=False, default=0.0)
    _starts: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _knots: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _mids: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise MeasureError("a path needs at least one segment")
        if self.interpolation not in ("piecewise-constant", "linear-in-moments"):
            raise MeasureError(f"unknown interpolation {self.interpolation!r}")
        if segs[0].t_start != 0:
            raise MeasureError("path must start at t = 0")
        for a, b in zip(segs, segs[1:]):
            if b.t_start != a.t_end:
                raise MeasureError(f"gap or overlap between {a.t_end} and {b.t_start}")
        for s in segs:
            if not s.t_start < s.t_end:
                raise MeasureError(f"empty segment [{s.t_start}, {s.t_end}]")
        kinds = {type(s.at(s.t_start)) for s in segs}
        if len(kinds) != 1:
            raise MeasureError("all segments must live on the same space")
        observed = max(self._sampled_masses())
        if self.mass_sup is not None and observed > self.mass_sup * (1 + 1e-12):
            raise MeasureError(f"mass {observed} exceeds mass_sup {self.mass_sup}")
        object.__setattr__(self, "_mass_sup", self.mass_sup if self.mass_sup is not None else observed)
        starts = np.array([s.t_start for s in segs], dtype=float)
        ends = np.array([s.t_end for s in segs], dtype=float)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_knots", np.unique(np.concatenate([starts, ends])))
        object.__setattr__(self, "_mids", 0.5 * (starts + ends))

    def _sampled_masses(self) -> Iterator[float]:
        for s in self.segments:
            if s.is_family:
                for t in np.linspace(s.t_start, s.t_end, 17):
                    yield s.at(float(t)).total_mass
            else:
                yield s.source.total_mass

    @property
    def end(self) -> float:
        return self.segments[-1].t_end

    @property
    def sup_mass(self) -> float:
        return self._mass_sup

    @property
    def on_circle(self) -> bool:
        return isinstance(self.segments[0].at(self.segments[0].t_start), CircleMeasure)

    def _segment_index(self, t: float) -> int:
        return max(0, int(np.searchsorted(self._starts, t, side="right")) - 1)

    @staticmethod
    def _inside(sorted_pts: np.ndarray, lo: float, hi: float):
        i, j = np.searchsorted(sorted_pts, [lo, hi], side="right")
        return (float(b) for b in sorted_pts[i:j] if lo < b < hi)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        pts = {lo, hi, *self._inside(self._knots, lo, hi)}
        if self.interpolation == "linear-in-moments":
            pts.update(self._inside(self._mids, lo, hi))
        return sorted(pts)

    def pieces(self, lo: float, hi: float) -> list[tuple[float, float, Callable[[float], Measure], bool]]:
        """Split ``[lo, hi]`` into intervals on which the driver is smooth.

        Returns ``(a, b, measure_at, constant)`` tuples.
        """
        if lo < 0 or hi > self.end * (1 + 1e-12) or lo > hi:
            raise MeasureError(f"interval [{lo}, {hi}] outside path horizon [0, {self.end}]")
        bps = self.breakpoints(lo, hi)
        out = []
        for a, b in zip(bps, bps[1:]):
            mid = 0.5 * (a + b)
            if self.interpolation == "piecewise-constant":
                seg = self.segments[self._segment_index(mid)]
                if seg.is_family:
                    out.append((a, b, seg.at, False))
                else:
                    m = seg.source
                    out.append((a, b, lambda t, m=m: m, True))
            else:
                out.append((a, b, self._interpolated, False))
        return out

    def _interpolated(self, t: float) -> Measure:
        mids = self._mids
        if t <= mids[0]:
            return self.segments[0].at(mids[0])
        if t >= mids[-1]:
            return self.segments[-1].at(mids[-1])
        i = int(np.searchsorted(mids, t, side="right")) - 1
        w = (t - mids[i]) / (mids[i + 1] - mids[i])
        return mixture([self.segments[i].at(mids[i]), self.segments[i + 1].at(mids[i + 1])],
                       [1.0 - w, w])


def path_at(path: MeasurePath, t: float) -> Measure:
    if not 0 <= t <= path.end:
        raise MeasureError(f"t = {t} outside [0, {path.end}]")
    if path.interpolation == "linear-in-moments":
        return path._interpolated(t)
    return path.segments[path._segment_index(t)].at(t)


def constant_path(measure: Measure, t_end: float) -> MeasurePath:
    return MeasurePath((Segment(0.0, float(t_end), measure),))


def family_path(factory: Callable[[float], Measure], t_end: float,
                mass_sup: float | None = None) -> MeasurePath:
    return MeasurePath((Segment(0.0, float(t_end), factory),), mass_sup=mass_sup)


def semicircle_path(t_end: float) -> MeasurePath:
    """Driver whose value at time t is the semicircle law of variance t (delta_0 at t = 0)."""
    @lru_cache(maxsize=256)
    def at(t: float) -> RealMeasure:
        return semicircle(t) if t > 0 else point(0.0, 1.0)

    return family_path(at, t_end, mass_sup=1.0)


def check_continuity(path: MeasurePath, threshold: float = 0.1, K: int = 4) -> list[str]:
    """Warn when adjacent segments' moments jump by more than ``threshold``."""
    msgs = []
    for a, b in zip(path.segments, path.segments[1:]):
        ma, mb = a.at(a.t_end), b.at(b.t_start)
        if isinstance(ma, RealMeasure):
            d = moment_distance(real_moments(ma, K), real_moments(mb, K), K)
        else:
            d = moment_distance(circle_moments(ma, K), circle_moments(mb, K), K)
        if d > threshold:
            msg = f"moment jump {d:.3g} at t = {a.t_end}"
            warnings.warn(msg, stacklevel=2)
            msgs.append(msg)
    return msgs
