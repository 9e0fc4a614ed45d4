"""Tests for the command-line interface: CSV schemas, determinism,
exit codes, and the mesh checker."""

import csv

import numpy as np
import pytest

from curlcurl.cases import generate_cube
from curlcurl.cli import (
    EXIT_CONFIG,
    EXIT_MESH,
    EXIT_OK,
    EXPERIMENT_COLUMNS,
    MARKS_COLUMNS,
    RUN_COLUMNS,
    main,
    marks_path,
    parse_degrees,
    thread_count,
)
from curlcurl.mesh import write_mesh


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_run_writes_schema_and_marks(tmp_path):
    out = tmp_path / "run.csv"
    code = main(["run", "--case", "cube-smooth", "--N", "2", "--degree", "0",
                 "--levels", "1", "--out", str(out)])
    assert code == EXIT_OK
    header, rows = read_rows(out)
    assert tuple(header) == RUN_COLUMNS
    assert len(rows) == 1
    level, h, ndofs, err, cofree, ofree, upper, maxeff = rows[0]
    assert int(level) == 0
    assert float(h) == pytest.approx(np.sqrt(3) / 2)
    assert int(ndofs) == 98
    assert 0 < float(err) < float(upper)
    assert 0 < float(cofree) < float(ofree)
    assert float(maxeff) > 0

    mheader, mrows = read_rows(marks_path(str(out)))
    assert tuple(mheader) == MARKS_COLUMNS
    assert mrows
    indicators = [float(r[2]) for r in mrows]
    assert all(v > 0 for v in indicators)
    assert len({r[1] for r in mrows}) == len(mrows)


def test_run_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "--case", "cube-smooth", "--N", "2", "--degree", "1",
            "--levels", "1", "--estimator", "sweep"]
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert marks_path(str(a)) != str(a)
    assert (tmp_path / "a.marks.csv").read_bytes() == \
        (tmp_path / "b.marks.csv").read_bytes()
    assert b"\r\n" in a.read_bytes()


def test_run_lshape_case(tmp_path):
    out = tmp_path / "lshape.csv"
    code = main(["run", "--case", "lshape-singular", "--N", "1",
                 "--degree", "0", "--levels", "1", "--out", str(out)])
    assert code == EXIT_OK
    _, rows = read_rows(out)
    assert float(rows[0][RUN_COLUMNS.index("error")]) > 0


def test_file_case_matches_builtin(tmp_path):
    """An exported cube mesh reproduces the builtin run byte for byte."""
    mesh_file = tmp_path / "cube.mesh"
    write_mesh(generate_cube(2, "N"), mesh_file)
    builtin, imported = tmp_path / "builtin.csv", tmp_path / "imported.csv"
    base = ["run", "--degree", "0", "--levels", "1"]
    assert main(base + ["--case", "cube-smooth", "--N", "2",
                        "--out", str(builtin)]) == EXIT_OK
    assert main(base + ["--case", "file", "--mesh", str(mesh_file),
                        "--out", str(imported)]) == EXIT_OK
    assert builtin.read_bytes() == imported.read_bytes()


def test_patch_experiment_schema_and_ratios(tmp_path):
    out = tmp_path / "exp.csv"
    code = main(["patch-experiment", "--case", "cube-smooth", "--N", "2",
                 "--degrees", "0..1", "--enrich", "1", "--seed", "9",
                 "--out", str(out)])
    assert code == EXIT_OK
    header, rows = read_rows(out)
    assert tuple(header) == EXPERIMENT_COLUMNS
    assert [int(r[0]) for r in rows] == [0, 1]
    for row in rows:
        ratio_patch = float(row[EXPERIMENT_COLUMNS.index("ratio_patch")])
        ratio_sweep = float(row[EXPERIMENT_COLUMNS.index("ratio_sweep")])
        assert ratio_patch >= 1 - 1e-10
        assert ratio_sweep >= ratio_patch - 1e-10


def test_patch_experiment_comma_degrees(tmp_path):
    out = tmp_path / "exp.csv"
    code = main(["patch-experiment", "--case", "cube-smooth", "--N", "2",
                 "--degrees", "0,1", "--enrich", "0", "--out", str(out)])
    assert code == EXIT_OK
    _, rows = read_rows(out)
    assert len(rows) == 2


def test_check_mesh_summary(tmp_path, capsys):
    mesh_file = tmp_path / "cube.mesh"
    write_mesh(generate_cube(2, "D"), mesh_file)
    assert main(["check-mesh", str(mesh_file)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "27 vertices, 48 tets" in out
    assert "48 Dirichlet" in out


def test_check_mesh_missing_file(capsys):
    assert main(["check-mesh", "/nonexistent/f.mesh"]) == EXIT_MESH
    assert "error" in capsys.readouterr().err


def test_check_mesh_reports_bad_line(tmp_path, capsys):
    bad = tmp_path / "bad.mesh"
    bad.write_text("tetmesh 1\nvertices 1\n0 0 nope\n")
    assert main(["check-mesh", str(bad)]) == EXIT_MESH
    err = capsys.readouterr().err
    assert "line 3" in err
    assert "nope" in err


def test_run_rejects_bad_config(tmp_path, capsys):
    out = str(tmp_path / "x.csv")
    bad_args = [
        ["run", "--case", "cube-smooth", "--theta", "1.5", "--out", out],
        ["run", "--case", "cube-smooth", "--degree", "-1", "--out", out],
        ["run", "--case", "cube-smooth", "--levels", "0", "--out", out],
        ["run", "--case", "file", "--out", out],
        ["run", "--case", "cube-smooth", "--c-l", "0", "--out", out],
    ]
    for args in bad_args:
        assert main(args) == EXIT_CONFIG, args
        assert "error" in capsys.readouterr().err


def test_unknown_flags_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--case", "cube-smooth", "--bogus", "1",
              "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2


def test_parse_degrees_forms():
    assert parse_degrees("0..4") == [0, 1, 2, 3, 4]
    assert parse_degrees("2,0, 3") == [2, 0, 3]
    assert parse_degrees("1") == [1]
    for bad in ("", "4..2", "-1", "a..b"):
        with pytest.raises(ValueError):
            parse_degrees(bad)


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv("CURLCURL_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("CURLCURL_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("CURLCURL_THREADS", "0")
    assert thread_count() == 1
    monkeypatch.setenv("CURLCURL_THREADS", "many")
    with pytest.raises(ValueError):
        thread_count()


def test_bad_thread_env_is_config_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CURLCURL_THREADS", "many")
    code = main(["run", "--case", "cube-smooth", "--N", "2",
                 "--out", str(tmp_path / "x.csv")])
    assert code == EXIT_CONFIG
    assert "CURLCURL_THREADS" in capsys.readouterr().err


def test_threaded_run_matches_serial(tmp_path, monkeypatch):
    serial, threaded = tmp_path / "s.csv", tmp_path / "t.csv"
    args = ["run", "--case", "cube-smooth", "--N", "2", "--degree", "0",
            "--levels", "1"]
    monkeypatch.setenv("CURLCURL_THREADS", "1")
    assert main(args + ["--out", str(serial)]) == EXIT_OK
    monkeypatch.setenv("CURLCURL_THREADS", "3")
    assert main(args + ["--out", str(threaded)]) == EXIT_OK
    assert serial.read_bytes() == threaded.read_bytes()
