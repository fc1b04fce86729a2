import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tqc.cli import main
from tqc.iteration import read_trace
from tqc.mesh import read_mesh_arrays


@pytest.fixture(scope="module")
def cases(tmp_path_factory):
    d = tmp_path_factory.mktemp("cases")
    for name, size in (("affine", 2048), ("identity", 64), ("landmarks", 600)):
        assert main(["make-testcase", name, str(size), "--dir", str(d)]) == 0
    return d


def check_output(capsys):
    out = capsys.readouterr().out
    return float(next(line for line in out.splitlines() if line.startswith("energy gap:")).split(":", 1)[1])


def test_solve_affine(cases, tmp_path):
    out = tmp_path / "map.off"
    trace = tmp_path / "t.csv"
    rc = main(["solve", "--mesh", str(cases / "affine.off"), "--constraints", str(cases / "affine.csv"), "--out", str(out), "--trace", str(trace)])
    assert rc == 0
    rows = read_trace(trace)
    assert rows[-1]["energy_gap"] <= 1e-6 * rows[0]["energy_gap"]
    _, faces = read_mesh_arrays(out)
    _, src_faces = read_mesh_arrays(cases / "affine.off")
    assert np.array_equal(faces, src_faces)
    diag = tmp_path / "map_diag"
    assert {p.name for p in diag.iterdir()} == {"diagnostics.json", "hist.csv", "arglap.csv", "mu.csv"}
    scalars = json.loads((diag / "diagnostics.json").read_text())
    assert scalars["fold_count"] == 0 and scalars["reason"] == "converged"


def test_solve_identity(cases, tmp_path):
    trace = tmp_path / "t.csv"
    rc = main(["solve", "--mesh", str(cases / "identity.off"), "--constraints", str(cases / "identity.csv"), "--out", str(tmp_path / "m.off"), "--trace", str(trace)])
    assert rc == 0
    assert read_trace(trace)[-1]["iter"] <= 2


def test_missing_mesh(cases, tmp_path, capsys):
    missing = tmp_path / "nowhere.off"
    rc = main(["solve", "--mesh", str(missing), "--constraints", str(cases / "affine.csv"), "--out", str(tmp_path / "m.off")])
    assert rc == 1
    assert str(missing) in capsys.readouterr().err


def test_best_effort_exit_and_check_roundtrip(cases, tmp_path, capsys):
    out, trace, diag = tmp_path / "m.off", tmp_path / "t.csv", tmp_path / "d"
    args = ["--mesh", str(cases / "landmarks.off"), "--constraints", str(cases / "landmarks.csv")]
    rc = main(["solve", *args, "--out", str(out), "--trace", str(trace), "--diag", str(diag), "--max-iter", "3", "--tol-mu", "1e-12"])
    assert rc == 2
    assert out.exists() and trace.exists() and (diag / "diagnostics.json").exists()
    capsys.readouterr()
    rc = main(["check", *args, "--map", str(out), "--mu", str(diag / "mu.csv"), "--diag", str(tmp_path / "c")])
    assert rc == 0
    gap = check_output(capsys)
    final = read_trace(trace)[-1]["energy_gap"]
    assert gap == pytest.approx(final, rel=1e-12)
    assert (tmp_path / "c" / "hist.csv").exists()


def test_check_identity(cases, capsys):
    rc = main(["check", "--mesh", str(cases / "identity.off"), "--constraints", str(cases / "identity.csv"), "--map", str(cases / "identity.off")])
    assert rc == 0
    assert abs(check_output(capsys)) < 1e-20


def test_check_wrong_mesh(cases, capsys):
    rc = main(["check", "--mesh", str(cases / "affine.off"), "--constraints", str(cases / "affine.csv"), "--map", str(cases / "identity.off")])
    assert rc == 1
    assert "connectivity" in capsys.readouterr().err


def test_check_violated_constraints(cases, capsys):
    # the identity map does not satisfy the affine boundary data
    rc = main(["check", "--mesh", str(cases / "affine.off"), "--constraints", str(cases / "affine.csv"), "--map", str(cases / "affine.off")])
    assert rc == 1
    assert "constraints satisfied: False" in capsys.readouterr().out


def test_unknown_testcase(tmp_path, capsys):
    assert main(["make-testcase", "torus", "100", "--dir", str(tmp_path)]) == 1
    assert "torus" in capsys.readouterr().err


def test_paths_must_differ(cases, tmp_path):
    m = str(cases / "affine.off")
    assert main(["solve", "--mesh", m, "--constraints", str(cases / "affine.csv"), "--out", m]) == 1


def test_bad_params(cases, tmp_path, capsys):
    rc = main(["solve", "--mesh", str(cases / "affine.off"), "--constraints", str(cases / "affine.csv"), "--out", str(tmp_path / "m.off"), "--alpha", "2"])
    assert rc == 1
    assert "alpha" in capsys.readouterr().err


def test_thread_env(cases, tmp_path, monkeypatch):
    args = ["solve", "--mesh", str(cases / "identity.off"), "--constraints", str(cases / "identity.csv"), "--out", str(tmp_path / "m.off")]
    monkeypatch.setenv("TQC_THREADS", "1")
    assert main(args) == 0
    monkeypatch.setenv("TQC_THREADS", "many")
    assert main(args) == 1


def test_partial_boundary_rejected(cases, tmp_path):
    lines = (cases / "identity.csv").read_text().splitlines()
    p = tmp_path / "partial.csv"
    p.write_text("\n".join(lines[:-3]) + "\n")
    assert main(["solve", "--mesh", str(cases / "identity.off"), "--constraints", str(p), "--out", str(tmp_path / "m.off")]) == 1


def test_console_script(cases, tmp_path):
    env = dict(os.environ, TQC_THREADS="1")
    proc = subprocess.run(
        [sys.executable, "-m", "tqc.cli", "solve", "--mesh", str(cases / "identity.off"), "--constraints", str(cases / "identity.csv"), "--out", str(tmp_path / "m.off")],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("converged")
