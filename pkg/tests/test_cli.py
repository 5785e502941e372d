import subprocess
import sys

import numpy as np
import pytest

from bhacs.acs import J0, constant_field
from bhacs.cli import main
from bhacs.geometry import Grid
from bhacs.snapshot import read_snapshot, write_snapshot
from bhacs.topology import perturbation_seed


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = d / "run.cfg"
    cfg.write_text("n = 8\nseed = perturbation\neps = 0.2\nmax_iters = 6\ncheckpoint_every = 3\n")
    code = main(["--config", str(cfg), "--out", str(d / "out"), "--quiet", "minimize"])
    return d, code


def test_minimize_outputs(run_dir):
    d, code = run_dir
    out = d / "out"
    assert code == 2  # iteration limit reached
    for name in ("final.bhacs", "checkpoint_000003.bhacs", "checkpoint_000006.bhacs",
                 "trace.csv", "periods.csv", "summary.txt"):
        assert (out / name).exists(), name
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,e2") and len(lines) == 8


def test_minimize_converges_exit_zero(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 8\nseed = constant\n")
    assert main(["--quiet", "minimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_verify(run_dir, capsys):
    d, _ = run_dir
    assert main(["verify", str(d / "out" / "final.bhacs"), "--tests", "4"]) == 0
    text = capsys.readouterr().out
    assert "constraints: pass" in text and "residual_weak_max" in text and "p12=" in text


def test_verify_fails_on_broken_field(tmp_path, capsys):
    J = constant_field(J0, 8)
    J[0, 0, 0, 0] *= 2
    path = tmp_path / "bad.bhacs"
    write_snapshot(path, J, e2=0.0, e1=0.0, periods=np.zeros(6))
    assert main(["verify", str(path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_chern_and_scan(run_dir, capsys, tmp_path):
    d, _ = run_dir
    snap = str(d / "out" / "final.bhacs")
    assert main(["chern", snap, "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.count("\n") == 6
    assert (tmp_path / "periods.csv").exists()
    assert main(["scan", snap, "--radii", "0.25", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "scan.csv").read_text().startswith("i1,i2,i3,i4,F_r0.25")


def test_glue(tmp_path, capsys):
    grid = Grid(16)
    outer, inner = tmp_path / "o.bhacs", tmp_path / "i.bhacs"
    write_snapshot(outer, perturbation_seed(grid, eps=0.05).values)
    write_snapshot(inner, constant_field(J0, 16))
    assert main(["glue", str(outer), str(inner), "--j", "3", "--scale", "0.4", "--out", str(tmp_path / "g")]) == 0
    assert "measured_constant" in capsys.readouterr().out
    assert read_snapshot(tmp_path / "g" / "glued.bhacs").n == 16


def test_plot(run_dir, tmp_path):
    d, _ = run_dir
    target = tmp_path / "p.gp"
    assert main(["plot", str(d / "out" / "trace.csv"), "--periods", str(d / "out" / "periods.csv"),
                 "-o", str(target), "--quiet"]) == 0
    script = target.read_text()
    assert "$trace << EOD" in script and "$periods << EOD" in script


def test_errors(tmp_path, capsys):
    bad = tmp_path / "t.bhacs"
    bad.write_bytes(b"BHACS1\n\x08\x00")
    assert main(["verify", str(bad)]) == 1
    assert "truncated" in capsys.readouterr().err
    cfg = tmp_path / "x.cfg"
    cfg.write_text("n = 8\nwhat = 1\n")
    assert main(["minimize", "--config", str(cfg)]) == 1
    assert "unknown key 'what'" in capsys.readouterr().err
    assert main(["chern", str(tmp_path / "missing.bhacs")]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bhacs", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "minimize" in res.stdout
