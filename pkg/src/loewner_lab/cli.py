"""Command-line front end.

Every subcommand writes CSV files plus ``manifest.json`` into ``--out`` and
exits 0 on success, 2 when a cross-check fails and 1 on configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import chordal, markov, radial, sle
from .formats import (ConfigError, Document, _check_keys, as_float, as_int, as_list, atomic_write, load_path,
                      read_document, write_csv, write_manifest)
from .measures import MeasureError, MeasurePath, constant_path, moment_distance, point, semicircle_path
from .series import exp_linear_s, s_transform_series, semicircle_moments
from .transforms import DEFAULT_LADDER, stieltjes_invert

log = logging.getLogger("loewner_lab")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


@dataclass
class RunConfig:
    mode: str = ""
    path: str = ""
    times: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    points: list = field(default_factory=list)
    tol: float = 1e-10
    order: int = 8
    seed: int = 0
    out: str = "out"
    pad: float = 0.5
    grid_size: int = 0          # 0: automatic
    crosscheck_tol: float = 1e-4
    swallow_dist: float = 1e-6
    kappa: float = 2.0
    paths: int = 500
    s: float | None = None      # default 0.5 for sle, 0 for markov-check
    r: float = 0.5
    t: float = 1.0
    dt: float = 1e-3
    x: float = 0.0
    ck_tol: float = 1e-6
    source: str = ""            # config file, if any

    def resolved_path(self) -> Path | None:
        if not self.path:
            return None
        p = Path(self.path)
        return p if p.is_absolute() or not self.source else Path(self.source).parent / p


MODES = ("chordal", "radial", "sle", "fixed-point", "markov", "figures")
_POSITIVE = ("tol", "crosscheck_tol", "swallow_dist", "dt", "ck_tol")


def config_from_document(doc: Document) -> RunConfig:
    cfg = RunConfig(source=doc.source)
    names = {f.name for f in fields(RunConfig)} - {"source"}
    _check_keys(doc, doc.top, names)
    for sec in doc.sections:
        raise ConfigError(f"unexpected section [{sec.name}] in run config", doc.source, sec.line, 1)
    for key, e in doc.top.entries.items():
        if key == "mode":
            if e.value not in MODES:
                raise doc.error(f"unknown mode {e.value!r} (known: {', '.join(MODES)})", e)
            cfg.mode = e.value
        elif key in ("path", "out"):
            setattr(cfg, key, e.value)
        elif key == "times":
            cfg.times = as_list(doc, e)
            if any(v < 0 for v in cfg.times):
                raise doc.error("times must be nonnegative", e)
        elif key == "points":
            cfg.points = as_list(doc, e, complex)
        elif key in ("order", "seed", "paths", "grid_size"):
            cfg.__dict__[key] = as_int(doc, e, minimum=0)
        else:
            cfg.__dict__[key] = as_float(doc, e, positive=key in _POSITIVE, nonneg=key == "pad")
    return cfg


def load_config(args) -> RunConfig:
    cfg = config_from_document(read_document(args.config)) if args.config else RunConfig()
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError(f"--tol must be positive, got {args.tol}", "<flags>")
        cfg.tol = args.tol
    if args.seed is not None:
        cfg.seed = args.seed
    if args.order is not None:
        if args.order < 4:
            raise ConfigError(f"--order must be >= 4, got {args.order}", "<flags>")
        cfg.order = args.order
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "t", None) is not None:
        cfg.t = args.t
    return cfg


def _need_path(cfg: RunConfig) -> MeasurePath:
    p = cfg.resolved_path()
    if p is None:
        raise ConfigError("this command needs 'path = <path document>' in the config", cfg.source or "<flags>")
    return load_path(p)


def _default_points(n_x: int = 5, ys=(0.25, 0.5, 1.0, 2.0)) -> np.ndarray:
    xs = np.linspace(-1.5, 1.5, n_x)
    return np.array([x + 1j * y for y in ys for x in xs])


@dataclass
class Outcome:
    outputs: list
    status: dict
    inputs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v for k, v in self.status.items() if k.endswith("_ok"))


# ---------------------------------------------------------------------------
# commands

def run_chordal(cfg: RunConfig, out: Path) -> Outcome:
    path = _need_path(cfg)
    times = sorted(set(cfg.times))
    t_end = max(times)
    pts = np.array(cfg.points, dtype=complex) if cfg.points else _default_points()
    fr = chordal.forward_flow(path, pts, t_end, cfg.tol, times, swallow_dist=cfg.swallow_dist)
    files = [write_csv(out / "flow.csv", ["t", "point", "re", "im", "alive"],
                       ((t, j, v.real, v.imag, a) for i, t in enumerate(fr.times)
                        for j, (v, a) in enumerate(zip(fr.values[i], fr.alive[i]))),
                       {"tol": cfg.tol, "swallow_dist": cfg.swallow_dist, **fr.diagnostics})]
    files.append(write_csv(out / "swallow.csv", ["point", "z_re", "z_im", "T_z", "t_lo", "t_hi"],
                           ((j, z.real, z.imag, fr.swallow_times[j], *fr.swallow_brackets[j])
                            for j, z in enumerate(pts))))
    files.append(write_csv(out / "capacity.csv", ["t", "a"], zip(fr.times, fr.capacity)))
    samples = chordal.cl_map(path, times, pad=cfg.pad, grid_size=cfg.grid_size or None, tol=cfg.tol,
                             order=cfg.order, crosscheck_tol=cfg.crosscheck_tol)
    files.append(write_csv(out / "moments.csv", ["t", "k", "a_k", "contour_a_k"],
                           ((s.time, k, s.moments[k], s.check_moments[k]) for s in samples
                            for k in range(cfg.order + 1))))
    files.append(write_csv(out / "density.csv", ["t", "x", "density"],
                           ((s.time, x, v) for s in samples for x, v in zip(s.curve.grid, s.curve.values)),
                           {"ladder": DEFAULT_LADDER, "pad": cfg.pad}))
    rows = []
    for s in samples:
        try:
            lo, hi = chordal.support_interval(s.curve)
        except chordal.SupportError as exc:
            log.warning("t = %g: %s", s.time, exc)
            lo = hi = float("nan")
        rows.append((s.time, lo, hi, s.curve.mass_defect, s.discrepancy, s.flagged))
    files.append(write_csv(out / "summary.csv", ["t", "support_lo", "support_hi", "mass_defect",
                                                 "crosscheck", "flagged"], rows))
    return Outcome(files, {"crosscheck_ok": not any(s.flagged for s in samples),
                           "monotonicity_violations": fr.diagnostics["monotonicity_violations"]},
                   [cfg.resolved_path()])


def run_radial(cfg: RunConfig, out: Path) -> Outcome:
    path = _need_path(cfg)
    times = sorted(set(cfg.times))
    t_end = max(times)
    pts = np.array(cfg.points, dtype=complex) if cfg.points else \
        0.6 * np.exp(2j * np.pi * np.arange(8) / 8) * np.array([0.5, 1.0] * 4)
    fr = radial.forward_flow_radial(path, pts, t_end, cfg.tol, times, swallow_dist=cfg.swallow_dist)
    files = [write_csv(out / "flow.csv", ["t", "point", "re", "im", "alive"],
                       ((t, j, v.real, v.imag, a) for i, t in enumerate(fr.times)
                        for j, (v, a) in enumerate(zip(fr.values[i], fr.alive[i]))),
                       {"tol": cfg.tol, **fr.diagnostics}),
             write_csv(out / "log_radius.csv", ["t", "L"], zip(fr.times, fr.log_radius))]
    samples = radial.rl_map(path, times, tol=cfg.tol, order=cfg.order, crosscheck_tol=cfg.crosscheck_tol)
    files.append(write_csv(out / "moments.csv", ["t", "n", "re_c_n", "im_c_n"],
                           ((s.time, n, complex(s.moments[n]).real, complex(s.moments[n]).imag)
                            for s in samples for n in range(cfg.order + 1))))
    files.append(write_csv(out / "angle_density.csv", ["t", "theta", "density"],
                           ((s.time, th, v) for s in samples for th, v in zip(s.curve.grid, s.curve.values)),
                           {"r_ladder": radial.R_LADDER}))
    files.append(write_csv(out / "summary.csv", ["t", "mass_defect", "crosscheck", "flagged"],
                           ((s.time, s.curve.mass_defect, s.discrepancy, s.flagged) for s in samples)))
    return Outcome(files, {"crosscheck_ok": not any(s.flagged for s in samples)}, [cfg.resolved_path()])


def run_sle(cfg: RunConfig, out: Path) -> Outcome:
    s = 0.5 if cfg.s is None else cfg.s
    rep = sle.sle_property_report(cfg.kappa, cfg.paths, s, cfg.t, cfg.seed, cfg.dt, max(cfg.order, 6))
    drv = sle.sample_driver(cfg.kappa, cfg.t, cfg.dt, cfg.seed, 0)
    rows = rep.rows()
    files = [write_csv(out / "driver.csv", ["t", "U"], zip(drv.times, drv.values),
                       {"kappa": cfg.kappa, "seed": cfg.seed, "path_index": 0}),
             write_csv(out / "sle_report.csv", list(rows[0]), (r.values() for r in rows),
                       {"kappa": cfg.kappa, "paths": cfg.paths, "s": s, "t": cfg.t, "dt": cfg.dt,
                        "seed": cfg.seed, "a2_deviation": rep.a2_deviation})]
    text = rep.to_text()
    atomic_write(out / "sle_report.txt", text + "\n")
    files.append(out / "sle_report.txt")
    print(text)
    return Outcome(files, {"properties_ok": rep.passed()})


def _check_rows(checks):
    return [(name, value, thr, value <= thr) for name, value, thr in checks]


def run_fixed_point(cfg: RunConfig, out: Path) -> Outcome:
    t = cfg.t
    if not 0 < t:
        raise ConfigError("--t must be positive", cfg.source or "<flags>")
    path = semicircle_path(t)
    K = max(cfg.order, 8)
    sample = chordal.cl_map(path, [t], tol=cfg.tol, order=K, density=False)[0]
    dist = moment_distance(sample.moments, semicircle_moments(t, K), K)
    probes = np.array([x + 1j * y for x in (-1.0, 0.0, 1.5) for y in (0.5, 1.0, 2.0)])
    heat = chordal.free_heat_residual(lambda z, s: chordal.cauchy_flow(path, z, s, cfg.tol), probes,
                                      t if t < path.end else 0.5 * t)
    fp = radial.radial_fixed_point(6, t)
    S = np.array(s_transform_series(fp.at(t)).coefficients[:5])
    s_err = float(np.max(np.abs(S - np.array(exp_linear_s(t, 5).coefficients))))
    ring = 0.3 * np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))
    ds = radial.double_speed_residual(fp, ring, 0.5 * t)
    checks = _check_rows([("chordal_moment_distance_K%d" % K, dist, 1e-4),
                          ("free_heat_residual", heat, 1e-4),
                          ("radial_s_transform_error", s_err, 1e-3),
                          ("radial_double_speed_residual", ds, 1e-4)])
    files = [write_csv(out / "fixed_point.csv", ["check", "value", "threshold", "pass"], checks, {"t": t}),
             write_csv(out / "fixed_point_moments.csv", ["k", "computed", "semicircle"],
                       ((k, sample.moments[k], semicircle_moments(t, K)[k]) for k in range(K + 1))),
             write_csv(out / "radial_fixed_point.csv", ["t", "n", "re_c_n", "im_c_n"],
                       ((tt, n, c.real, c.imag) for tt, row in zip(fp.times, fp.moments)
                        for n, c in enumerate(row)), {"iterations": fp.iterations, "damping": 0.5})]
    for name, value, thr, ok in checks:
        print(f"{name:32s} {value:.3e}  (<= {thr:g})  {'ok' if ok else 'FAIL'}")
    return Outcome(files, {"checks_ok": all(c[3] for c in checks)})


def run_markov(cfg: RunConfig, out: Path) -> Outcome:
    path = _need_path(cfg) if cfg.path else constant_path(point(0.0, 2.0), max(cfg.t, 1.0))
    s = 0.0 if cfg.s is None else cfg.s
    r, t = cfg.r, cfg.t
    if not s <= r <= t:
        raise ConfigError(f"markov-check needs s <= r <= t, got {s}, {r}, {t}", cfg.source or "<flags>")
    probes = markov.probe_arc(5.0, 16)
    ck = markov.chapman_kolmogorov_residual(path, s, r, t, probes, cfg.tol)
    comp = markov.composition_residual(path, s, t, probes, cfg.tol)
    kp = markov.transition_kernel_density(path, s, t, cfg.x, tol=cfg.tol)
    km = markov.kernel_moments(path, 0.0, t, 0.0, 6, cfg.tol)
    nu = chordal.moment_flow(path, 6, t, cfg.tol, [t]).at(t)
    checks = _check_rows([("chapman_kolmogorov", ck, cfg.ck_tol),
                          ("composition", comp, max(1e-8, 10 * cfg.tol)),
                          ("kernel_mass_defect", abs(kp.curve.mass_defect), 1e-3),
                          ("kernel_vs_nu_moments_K6", moment_distance(km, nu, 6), 1e-4)])
    files = [write_csv(out / "markov.csv", ["check", "value", "threshold", "pass"], checks,
                       {"s": s, "r": r, "t": t}),
             write_csv(out / "kernel.csv", ["x", "density"], zip(kp.curve.grid, kp.curve.values),
                       {"s": s, "t": t, "x": cfg.x, "mass_defect": kp.curve.mass_defect})]
    for name, value, thr, ok in checks:
        print(f"{name:28s} {value:.3e}  (<= {thr:g})  {'ok' if ok else 'FAIL'}")
    return Outcome(files, {"checks_ok": all(c[3] for c in checks)},
                   [cfg.resolved_path()] if cfg.path else [])


FIGURE_TIMES = tuple(round(0.1 * k, 10) for k in range(1, 11))


def figure_family(kind: str, tol: float = 1e-10, times=FIGURE_TIMES, pad: float = 0.5):
    """Density curves of the semicircle or arcsine family computed through the flow.

    ``semicircle``: output laws of the fixed-point path; ``arcsine``: output
    laws of the constant driver ``2 delta_0``.  The eps-ladder is scaled with
    the support half-width ``2 sqrt(t)`` so narrow laws are resolved alike.
    Returns ``(t, curve, closed-form density function)`` triples.
    """
    t_max = max(times)
    if kind == "semicircle":
        path = semicircle_path(t_max)
        exact = lambda x, t: np.sqrt(np.maximum(4 * t - x * x, 0.0)) / (2 * np.pi * t)
    elif kind == "arcsine":
        path = constant_path(point(0.0, 2.0), t_max)
        exact = lambda x, t: np.where(np.abs(x) < 2 * np.sqrt(t),
                                      1.0 / (np.pi * np.sqrt(np.maximum(4 * t - x * x, 1e-300))), 0.0)
    else:
        raise ValueError(f"unknown figure {kind!r}")
    out = []
    for t in times:
        c = 2.0 * math.sqrt(t)
        ladder = tuple(e * min(1.0, c / 2.0) for e in DEFAULT_LADDER)
        curve = stieltjes_invert(lambda z: chordal.cauchy_flow(path, z, t, tol), (-c - pad, c + pad),
                                 None, ladder)
        out.append((t, curve, exact))
    return out


def run_figures(cfg: RunConfig, out: Path, kind: str) -> Outcome:
    fam = figure_family(kind, cfg.tol)
    rows, dens = [], []
    ok = True
    for t, curve, exact in fam:
        c = 2.0 * math.sqrt(t)
        x = curve.grid
        inner = np.abs(x) <= 0.9 * c
        err = float(np.max(np.abs(curve.values[inner] - exact(x[inner], t))))
        try:
            lo, hi = chordal.support_interval(curve)
        except chordal.SupportError as exc:
            log.warning("t = %g: %s", t, exc)
            lo = hi = float("nan")
        mass = 1.0 - curve.mass_defect
        good = (abs(mass - 1) <= 1e-3 and abs(lo + c) <= 0.02 and abs(hi - c) <= 0.02 and err <= 1e-3
                and float(curve.values.min()) >= 0)
        ok &= good
        rows.append((t, mass, lo, hi, -c, c, err, curve.meta["negative"], good))
        dens.extend((t, xx, v) for xx, v in zip(x, curve.values))
    files = [write_csv(out / f"{kind}_densities.csv", ["t", "x", "density"], dens,
                       {"figure": kind, "pipeline": "Stieltjes inversion of the flow's Cauchy transform"}),
             write_csv(out / f"{kind}_summary.csv",
                       ["t", "mass", "support_lo", "support_hi", "expected_lo", "expected_hi",
                        "interior_sup_error", "negative_count", "pass"], rows)]
    for r in rows:
        print(f"t={r[0]:.1f} mass={r[1]:.6f} support=[{r[2]:+.4f}, {r[3]:+.4f}] err={r[6]:.2e} "
              f"{'ok' if r[-1] else 'FAIL'}")
    return Outcome(files, {"figures_ok": ok})


def run_validate(cfg: RunConfig) -> int:
    p = cfg.resolved_path()
    if p is not None:
        if not p.exists():
            raise ConfigError(f"path file not found: {p}", cfg.source or "<flags>")
        load_path(p)  # parse only
    for key in _POSITIVE:
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be positive", cfg.source or "<flags>")
    for k, v in asdict(cfg).items():
        print(f"{k} = {v}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (key = value document)")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--tol", type=float, help="ODE tolerance")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--order", type=int, help="moment order")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="loewner-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("evolve-chordal", parents=[common], help="chordal flow, moments and output densities")
    sub.add_parser("evolve-radial", parents=[common], help="radial flow, moments and angular densities")
    sub.add_parser("sle", parents=[common], help="Monte Carlo SLE property report")
    fp = sub.add_parser("fixed-point", parents=[common], help="fixed-point checks (chordal and radial)")
    fp.add_argument("--t", type=float, help="time horizon (default 1.0)")
    sub.add_parser("markov-check", parents=[common], help="transition-map and kernel checks")
    fig = sub.add_parser("figures", parents=[common], help="density families as CSV")
    fig.add_argument("which", choices=("semicircle", "arcsine"))
    sub.add_parser("validate", parents=[common], help="check a config without computing")
    return parser


COMMAND_MODES = {"evolve-chordal": "chordal", "evolve-radial": "radial", "sle": "sle",
                 "fixed-point": "fixed-point", "markov-check": "markov", "figures": "figures"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "validate":
            return run_validate(cfg)
        mode = COMMAND_MODES[args.command]
        if cfg.mode and cfg.mode != mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match command {args.command!r}",
                              cfg.source or "<flags>")
        cfg.mode = mode
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if mode == "chordal":
            res = run_chordal(cfg, out)
        elif mode == "radial":
            res = run_radial(cfg, out)
        elif mode == "sle":
            res = run_sle(cfg, out)
        elif mode == "fixed-point":
            res = run_fixed_point(cfg, out)
        elif mode == "markov":
            res = run_markov(cfg, out)
        else:
            res = run_figures(cfg, out, args.which)
    except (ConfigError, MeasureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    inputs = [p for p in res.inputs if p is not None]
    if cfg.source:
        inputs.insert(0, cfg.source)
    settings = {k: v for k, v in asdict(cfg).items() if k != "source"}
    if args.command == "figures":
        settings["figure"] = args.which
    write_manifest(out, args.command, settings, inputs, res.outputs, res.status)
    if not res.ok:
        print("one or more cross-checks failed; see the summary files", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
