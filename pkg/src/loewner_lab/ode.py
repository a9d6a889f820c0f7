"""Embedded Dormand-Prince 5(4) stepper over arrays of complex (or real) states.

All components advance in lockstep with one shared step size; the error norm
is the max over components, so one badly behaved trajectory never degrades
the accuracy of the others.  Components can be retired mid-run (swallowed
points) through the ``monitor`` hook or when the step size underflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class StepUnderflow(RuntimeError):
    pass


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    min_step: float = np.inf
    retired_on_underflow: int = 0

    def merge(self, other: "StepStats") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.min_step = min(self.min_step, other.min_step)
        self.retired_on_underflow += other.retired_on_underflow


@dataclass
class Retired:
    index: int
    t_lo: float
    t_hi: float
    value: complex
    reason: str


@dataclass
class Integration:
    y: np.ndarray
    active: np.ndarray
    retired: list = field(default_factory=list)
    stats: StepStats = field(default_factory=StepStats)
    last_step: float = 0.0


def _initial_step(rhs, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    return min(h, span)


def dopri5(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    y0: np.ndarray,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    h0: Optional[float] = None,
    step_cap: Optional[Callable[[float, np.ndarray], float]] = None,
    monitor: Optional[Callable[[float, float, np.ndarray, np.ndarray], np.ndarray]] = None,
    min_step: float = 1e-12,
    retire_on_underflow: bool = False,
) -> Integration:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1 >= t0``.

    ``monitor(t_old, t_new, y_old, y_new)`` returns a boolean mask over the
    currently active components; flagged ones are frozen at ``y_new`` and
    reported with the bracketing step ``[t_old, t_new]``.  When the step falls
    below ``min_step`` the components whose local error still fails are
    retired if ``retire_on_underflow`` is set, otherwise :class:`StepUnderflow`
    is raised.
    """
    y_all = np.array(y0, copy=True)
    active = np.arange(y_all.size)
    out = Integration(y_all, active)
    if t1 <= t0 or y_all.size == 0:
        return out
    y = y_all.ravel()[active].copy()
    t = t0
    span = t1 - t0
    f = rhs(t, y)
    h = h0 if h0 is not None else _initial_step(rhs, t, y, f, rtol, atol, span)
    stats = out.stats
    while t < t1 and active.size:
        if step_cap is not None:
            h = min(h, step_cap(t, y))
        last = False
        if t + h >= t1 or t1 - (t + h) < 1e-14 * max(1.0, abs(t1)):
            h = t1 - t
            last = True
        k = [f]
        for s in range(1, 7):
            ys = y + h * sum(a * k[j] for j, a in enumerate(_A[s]) if a != 0.0)
            k.append(rhs(t + _C[s] * h, ys))
        y_new = y + h * sum(b * k[j] for j, b in enumerate(_B) if b != 0.0)
        err = h * sum(e * k[j] for j, e in enumerate(_E) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = np.abs(err) / scale
        bad = ~np.isfinite(y_new) | ~np.isfinite(ratio)
        ratio = np.where(bad, np.inf, ratio)
        norm = float(np.max(ratio))
        if norm <= 1.0:
            stats.accepted += 1
            stats.min_step = min(stats.min_step, h)
            t_old, t = t, (t1 if last else t + h)
            y_old, y = y, y_new
            f = k[6]
            out.last_step = h
            if monitor is not None:
                drop = np.asarray(monitor(t_old, t, y_old, y), dtype=bool)
                if drop.any():
                    for i in np.flatnonzero(drop):
                        out.retired.append(Retired(int(active[i]), t_old, t, complex(y[i]), "monitor"))
                    y_all.ravel()[active] = y
                    keep = ~drop
                    active, y, f = active[keep], y[keep], f[keep]
                    if not active.size:
                        break
            fac = 0.9 * norm ** -0.2 if norm > 0 else 5.0
            h = h * min(5.0, max(0.2, fac))
        else:
            stats.rejected += 1
            h_new = h * max(0.1, 0.9 * norm ** -0.2) if np.isfinite(norm) else 0.1 * h
            if h_new < min_step:
                fail = ratio > 1.0
                if not retire_on_underflow:
                    raise StepUnderflow(f"step {h_new:.3g} below {min_step:.3g} at t = {t:.6g}")
                for i in np.flatnonzero(fail):
                    out.retired.append(Retired(int(active[i]), t, t + h, complex(y[i]), "underflow"))
                stats.retired_on_underflow += int(fail.sum())
                y_all.ravel()[active] = y
                keep = ~fail
                active, y, f = active[keep], y[keep], f[keep]
                h = max(h_new, min_step) * 10
                continue
            h = h_new
    if active.size:
        y_all.ravel()[active] = y
    out.y = y_all
    out.active = active
    return out
