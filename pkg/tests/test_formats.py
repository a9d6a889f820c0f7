"""Key-value documents, measure/path loading and CSV/manifest output."""
import hashlib
import json

import pytest

from loewner_lab.formats import (
    ConfigError, atomic_write, csv_text, load_path, measure_from_document, parse_kv, read_csv,
    read_document, write_csv, write_manifest,
)
from loewner_lab.measures import CircleMeasure, RealMeasure, path_at, real_moments


def test_parse_sections_and_positions():
    doc = parse_kv("domain = line   # comment\n\n[atom]\nposition = 0.5\nmass =  2\n[atom]\nposition=1\nmass=1\n")
    assert doc.top.entries["domain"].value == "line"
    assert [s.name for s in doc.sections] == ["atom", "atom"]
    e = doc.sections[0].entries["mass"]
    assert (e.value, e.line, e.col) == ("2", 5, 9)


@pytest.mark.parametrize("text, line, col, msg", [
    ("a = 1\nb\n", 2, 1, "expected 'key = value'"),
    ("a = 1\na = 2\n", 2, 1, "duplicate key"),
    ("[atom\n", 1, 1, "malformed section"),
    ("  x y = 3\n", 1, 3, "invalid key"),
    ("a =\n", 1, 4, "missing value"),
])
def test_parse_errors_carry_line_and_column(text, line, col, msg):
    with pytest.raises(ConfigError, match=msg) as info:
        parse_kv(text, "cfg.txt")
    assert (info.value.line, info.value.col) == (line, col)
    assert str(info.value).startswith(f"cfg.txt:{line}:{col}:")


def test_value_errors_point_at_the_value(tmp_path):
    p = tmp_path / "m.measure"
    p.write_text("[atom]\nposition = abc\nmass = 1\n")
    with pytest.raises(ConfigError) as info:
        measure_from_document(read_document(p))
    assert (info.value.line, info.value.col) == (2, 12)


def test_missing_file():
    with pytest.raises(ConfigError, match="file not found"):
        read_document("/nonexistent/x.path")


def test_measure_documents(tmp_path):
    (tmp_path / "d.csv").write_text("x,value\n-1,0.5\n1,0.5\n")
    (tmp_path / "m.measure").write_text("[atom]\nposition = 2\nmass = 0.5\n[density]\nfile = d.csv\n")
    mu = measure_from_document(read_document(tmp_path / "m.measure"))
    assert isinstance(mu, RealMeasure) and mu.total_mass == pytest.approx(1.5)
    (tmp_path / "c.measure").write_text("domain = circle\n[atom]\nangle = 3.0\nmass = 1\n")
    assert isinstance(measure_from_document(read_document(tmp_path / "c.measure")), CircleMeasure)
    (tmp_path / "l.measure").write_text("law = semicircle\nvariance = 2\n")
    sc = measure_from_document(read_document(tmp_path / "l.measure"))
    assert real_moments(sc, 2)[2] == pytest.approx(2, abs=1e-8)


@pytest.mark.parametrize("body, msg", [
    ("law = cauchy\n", "unknown law"),
    ("law = semicircle\nvariance = -1\n", "bad parameters"),
    ("law = semicircle\nsigma = 1\n", "unknown key"),
    ("[blob]\nx = 1\n", "unknown section"),
    ("[atom]\nposition = 1\n", "missing key 'mass'"),
    ("[density]\nfile = nope.csv\n", "density file not found"),
    ("[atom]\nposition = 1\nmass = -1\n", "nonnegative"),
])
def test_measure_document_errors(tmp_path, body, msg):
    p = tmp_path / "bad.measure"
    p.write_text(body)
    with pytest.raises(ConfigError, match=msg):
        measure_from_document(read_document(p))


def test_repo_path_documents(configs_dir):
    arc = load_path(configs_dir / "arcsine.path")
    assert path_at(arc, 0.5).atoms == ((0.0, 2.0),)
    two = load_path(configs_dir / "two_atoms.path")
    assert path_at(two, 0.25).atoms == ((0.0, 1.0),) and path_at(two, 0.75).atoms == ((1.0, 1.0),)
    sc = load_path(configs_dir / "semicircle.path")
    assert real_moments(path_at(sc, 0.5), 2)[2] == pytest.approx(0.5, abs=1e-8)
    assert load_path(configs_dir / "circle_atom.path").on_circle


@pytest.mark.parametrize("body, msg", [
    ("", "no \\[segment\\]"),
    ("[segment]\nt_start = 0\nt_end = 1\nmeasure = catalog:bogus\n", "unknown catalog law"),
    ("[segment]\nt_start = 0\nt_end = 1\nmeasure = catalog:point size=1\n", "unknown parameter"),
    ("[segment]\nt_start = 0\nt_end = 1\nmeasure = family:gauss\n", "unknown family"),
    ("[segment]\nt_start = 0\nt_end = 1\nmeasure = missing.measure\n", "measure file not found"),
    ("[segment]\nt_start = 0.5\nt_end = 1\nmeasure = catalog:point\n", "start at t = 0"),
    ("mass_sup = 1\n[segment]\nt_start = 0\nt_end = 1\nmeasure = catalog:point mass=2\n", "exceeds mass_sup"),
])
def test_path_document_errors(tmp_path, body, msg):
    p = tmp_path / "bad.path"
    p.write_text(body)
    with pytest.raises(ConfigError, match=msg):
        load_path(p)


def test_csv_round_trip(tmp_path):
    rows = [(0.1, 1, True), (1 / 3, 2, False)]
    p = write_csv(tmp_path / "a.csv", ["x", "n", "ok"], rows, {"window": (-1, 1)})
    meta, header, data = read_csv(p)
    assert meta == {"window": "(-1, 1)"} and header == ["x", "n", "ok"]
    assert data[1, 0] == 1 / 3 and list(data[:, 2]) == [1, 0]
    assert csv_text(["x"], [(0.1,)]) == "x\n0.1\n"


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / "sub" / "f.txt", "hello")
    assert (tmp_path / "sub" / "f.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]


def test_manifest_hashes(tmp_path):
    a = write_csv(tmp_path / "a.csv", ["x"], [(1.0,)])
    m = write_manifest(tmp_path, "demo", {"tol": 1e-10}, [], [a], {"x_ok": True})
    doc = json.loads(m.read_text())
    assert doc["outputs"][0]["sha256"] == hashlib.sha256(a.read_bytes()).hexdigest()
    assert doc["settings"]["tol"] == 1e-10 and "numpy" in doc["versions"]
