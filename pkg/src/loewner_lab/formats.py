"""Plain-text documents (run configs, measures, paths), CSV output and run manifests.

Key-value documents are line based::

    # comment
    key = value            # trailing comments allowed
    [section]              # repeated sections allowed
    key = value

Keys before the first section header belong to the top level.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import measures as M


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<string>", line: int = 0, col: int = 0):
        self.source, self.line, self.col = str(source), line, col
        where = f"{source}:{line}:{col}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class Entry:
    value: str
    line: int
    col: int


@dataclass
class Section:
    name: str
    line: int
    entries: dict[str, Entry] = field(default_factory=dict)


@dataclass
class Document:
    source: str
    top: Section
    sections: list[Section]

    def error(self, message: str, entry: Entry | None = None) -> ConfigError:
        return ConfigError(message, self.source, entry.line if entry else 0, entry.col if entry else 0)


_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*$")


def parse_kv(text: str, source: str = "<string>") -> Document:
    top = Section("", 0)
    sections: list[Section] = []
    cur = top
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        if body.startswith("["):
            if not body.endswith("]") or not _KEY.match(body[1:-1].strip() or "!"):
                raise ConfigError(f"malformed section header {body!r}", source, ln, indent + 1)
            cur = Section(body[1:-1].strip(), ln)
            sections.append(cur)
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", source, ln, indent + 1)
        key, _, value = body.partition("=")
        key = key.strip()
        if not _KEY.match(key or "!"):
            raise ConfigError(f"invalid key {key!r}", source, ln, indent + 1)
        if key in cur.entries:
            raise ConfigError(f"duplicate key {key!r}", source, ln, indent + 1)
        vcol = raw.index("=") + 2 + (len(value) - len(value.lstrip()))
        if not value.strip():
            raise ConfigError(f"missing value for {key!r}", source, ln, vcol)
        cur.entries[key] = Entry(value.strip(), ln, vcol)
    return Document(str(source), top, sections)


def read_document(path) -> Document:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"file not found: {p}", p) from None
    return parse_kv(text, str(p))


def as_float(doc: Document, e: Entry, positive: bool = False, nonneg: bool = False) -> float:
    try:
        v = float(e.value)
    except ValueError:
        raise doc.error(f"expected a number, got {e.value!r}", e) from None
    if not math.isfinite(v):
        raise doc.error(f"expected a finite number, got {e.value!r}", e)
    if positive and v <= 0:
        raise doc.error(f"expected a positive number, got {e.value!r}", e)
    if nonneg and v < 0:
        raise doc.error(f"expected a nonnegative number, got {e.value!r}", e)
    return v


def as_int(doc: Document, e: Entry, minimum: int | None = None) -> int:
    try:
        v = int(e.value)
    except ValueError:
        raise doc.error(f"expected an integer, got {e.value!r}", e) from None
    if minimum is not None and v < minimum:
        raise doc.error(f"expected an integer >= {minimum}, got {v}", e)
    return v


def as_list(doc: Document, e: Entry, conv=float) -> list:
    out = []
    for part in e.value.split(","):
        try:
            out.append(conv(part.strip().replace(" ", "")))
        except ValueError:
            raise doc.error(f"bad list item {part.strip()!r}", e) from None
    return out


def _require(doc: Document, sec: Section, key: str) -> Entry:
    if key not in sec.entries:
        where = f"section [{sec.name}] at line {sec.line}" if sec.name else "top level"
        raise ConfigError(f"missing key {key!r} in {where}", doc.source, sec.line, 1)
    return sec.entries[key]


def _check_keys(doc: Document, sec: Section, allowed: Iterable[str]):
    allowed = set(allowed)
    for k, e in sec.entries.items():
        if k not in allowed:
            raise doc.error(f"unknown key {k!r} (allowed: {', '.join(sorted(allowed))})", e)


# ---------------------------------------------------------------------------
# measures
#
# A measure document lists any number of [atom] (position or angle, mass) and
# [density] (file = two-column CSV x,value) sections, with top-level
# ``domain = line | circle``.  Alternatively ``law = <catalog name>`` plus the
# law's parameters at top level.

CATALOG_PARAMS = {
    "semicircle": ("variance",), "arcsine": ("variance",), "point": ("position", "mass"),
    "haar": ("mass",), "circle_point": ("angle", "mass"), "poisson": ("rho",),
}


def read_density_csv(path, source_doc: Document, entry: Entry) -> tuple[np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise source_doc.error(f"density file not found: {p}", entry)
    rows = []
    with p.open() as fh:
        for ln, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split(",")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                if not rows:  # header row
                    continue
                raise ConfigError("expected two numeric columns", p, ln, 1) from None
    if len(rows) < 2:
        raise ConfigError("density file needs at least two rows", p)
    a = np.array(rows)
    return a[:, 0], a[:, 1]


def catalog_measure(name: str, params: dict[str, float]) -> M.Measure:
    if name in ("semicircle", "arcsine"):
        return M.law_catalog(name, **params)
    if name == "point":
        return M.point(params.get("position", 0.0), params.get("mass", 1.0))
    if name == "haar":
        return M.haar(params.get("mass", 1.0))
    if name == "circle_point":
        return M.circle_point(params.get("angle", 0.0), params.get("mass", 1.0))
    if name == "poisson":
        return M.poisson_law(params["rho"])
    raise KeyError(name)


def measure_from_document(doc: Document) -> M.Measure:
    top = doc.top.entries
    if "law" in top:
        name = top["law"].value
        if name not in CATALOG_PARAMS:
            raise doc.error(f"unknown law {name!r} (known: {', '.join(CATALOG_PARAMS)})", top["law"])
        _check_keys(doc, doc.top, ("law", "domain", *CATALOG_PARAMS[name]))
        params = {k: as_float(doc, top[k]) for k in CATALOG_PARAMS[name] if k in top}
        try:
            return catalog_measure(name, params)
        except (M.MeasureError, KeyError, TypeError) as exc:
            raise doc.error(f"bad parameters for {name}: {exc}", top["law"]) from None
    _check_keys(doc, doc.top, ("domain",))
    domain = top["domain"].value if "domain" in top else "line"
    if domain not in ("line", "circle"):
        raise doc.error("domain must be 'line' or 'circle'", top["domain"])
    atoms, dens = [], []
    base = Path(doc.source).parent
    for sec in doc.sections:
        if sec.name == "atom":
            loc = "position" if domain == "line" else "angle"
            _check_keys(doc, sec, (loc, "mass"))
            atoms.append((as_float(doc, _require(doc, sec, loc)),
                          as_float(doc, _require(doc, sec, "mass"), nonneg=True)))
        elif sec.name == "density":
            _check_keys(doc, sec, ("file",))
            e = _require(doc, sec, "file")
            x, v = read_density_csv(base / e.value, doc, e)
            try:
                dens.append(M.DensityPart.trapezoid(x, v) if domain == "line" else M.periodic_density(x, v))
            except M.MeasureError as exc:
                raise doc.error(str(exc), e) from None
        else:
            raise ConfigError(f"unknown section [{sec.name}]", doc.source, sec.line, 1)
    try:
        if domain == "line":
            return M.RealMeasure(atoms=tuple(atoms), densities=tuple(dens))
        return M.CircleMeasure(atoms=tuple(atoms), densities=tuple(dens))
    except M.MeasureError as exc:
        raise ConfigError(str(exc), doc.source) from None


def parse_measure_ref(ref: str, base: Path, doc: Document, entry: Entry):
    """``catalog:NAME key=val ...``, ``family:semicircle`` or a measure file path."""
    if ref.startswith("family:"):
        name = ref[len("family:"):].strip()
        if name != "semicircle":
            raise doc.error(f"unknown family {name!r} (known: semicircle)", entry)
        return lambda t: M.semicircle(t) if t > 0 else M.point(0.0, 1.0)
    if ref.startswith("catalog:"):
        parts = ref[len("catalog:"):].split()
        if not parts or parts[0] not in CATALOG_PARAMS:
            raise doc.error(f"unknown catalog law in {ref!r}", entry)
        params = {}
        for item in parts[1:]:
            k, _, v = item.partition("=")
            if k not in CATALOG_PARAMS[parts[0]]:
                raise doc.error(f"unknown parameter {k!r} for {parts[0]}", entry)
            try:
                params[k] = float(v)
            except ValueError:
                raise doc.error(f"bad value {v!r} for {k}", entry) from None
        try:
            return catalog_measure(parts[0], params)
        except (M.MeasureError, KeyError, TypeError) as exc:
            raise doc.error(f"bad parameters for {parts[0]}: {exc}", entry) from None
    p = base / ref
    if not p.exists():
        raise doc.error(f"measure file not found: {p}", entry)
    return measure_from_document(read_document(p))


def path_from_document(doc: Document) -> M.MeasurePath:
    """Path document: top-level ``interpolation``/``mass_sup``, then [segment] sections
    with ``t_start``, ``t_end`` and ``measure`` (a reference, see :func:`parse_measure_ref`)."""
    _check_keys(doc, doc.top, ("interpolation", "mass_sup", "domain"))
    top = doc.top.entries
    interp = top["interpolation"].value if "interpolation" in top else "piecewise-constant"
    mass_sup = as_float(doc, top["mass_sup"], positive=True) if "mass_sup" in top else None
    base = Path(doc.source).parent
    segs = []
    for sec in doc.sections:
        if sec.name != "segment":
            raise ConfigError(f"unknown section [{sec.name}] in path document", doc.source, sec.line, 1)
        _check_keys(doc, sec, ("t_start", "t_end", "measure"))
        a = as_float(doc, _require(doc, sec, "t_start"), nonneg=True)
        b = as_float(doc, _require(doc, sec, "t_end"), positive=True)
        e = _require(doc, sec, "measure")
        segs.append(M.Segment(a, b, parse_measure_ref(e.value, base, doc, e)))
    if not segs:
        raise ConfigError("path document has no [segment] sections", doc.source)
    try:
        return M.MeasurePath(tuple(segs), interpolation=interp, mass_sup=mass_sup)
    except M.MeasureError as exc:
        raise ConfigError(str(exc), doc.source) from None


def load_path(path) -> M.MeasurePath:
    return path_from_document(read_document(path))


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def atomic_write(path, data: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, meta=None) -> Path:
    atomic_write(path, csv_text(header, rows, meta))
    return Path(path)


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of :func:`write_csv` for numeric tables: (meta, header, data)."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        elif line.strip():
            lines.append(line)
    header = lines[0].split(",")
    data = np.array([[float(x) for x in l.split(",")] for l in lines[1:]]) if len(lines) > 1 \
        else np.empty((0, len(header)))
    return meta, header, data


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "loewner_lab": __version__}


def write_manifest(out_dir, command: str, settings: dict, inputs: Sequence, outputs: Sequence,
                   status: dict) -> Path:
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "settings": settings,
        "inputs": [{"path": str(p), "sha256": sha256(p)} for p in inputs],
        "outputs": [{"path": Path(p).name, "sha256": sha256(p)} for p in outputs],
        "status": status,
        "versions": versions(),
    }
    path = out_dir / "manifest.json"
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path
