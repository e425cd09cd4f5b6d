import json
import os
import subprocess
import sys

import numpy as np
import pytest

from binarykin.cli import main
from binarykin.fieldio import write_field
from binarykin.vgrid import DistributionPair, SpatialGrid, VelocityGrid


def _run(*argv, env=None):
    full = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-W", "ignore", "-m", "binarykin", *argv], capture_output=True, text=True,
                          env=full, timeout=600)


def _json(capsys):
    return json.loads(capsys.readouterr().out)


# ------------------------------------------------------------------ usage


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["coercivity", "--grid", "nine"],
                                  ["kernel-decay", "--speeds", "1,x"], ["moments"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_help_is_success(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for cmd in ("kinematics-check", "qtest", "moments", "coercivity", "kernel-decay", "simulate", "selftest"):
        assert cmd in out


def test_module_entry_and_threads_env():
    bad = _run("kinematics-check", "--samples", "10", "--jacobian-samples", "2", env={"BINARYKIN_THREADS": "lots"})
    assert bad.returncode == 2 and "BINARYKIN_THREADS" in bad.stderr
    ok = _run("kinematics-check", "--samples", "10", "--jacobian-samples", "2", env={"BINARYKIN_THREADS": "1"})
    assert ok.returncode == 0, ok.stderr
    assert json.loads(ok.stdout)["samples"] == 10


# -------------------------------------------------------------- commands


def test_kinematics_check(capsys):
    assert main(["kinematics-check", "--samples", "5000", "--jacobian-samples", "10"]) == 0
    out = _json(capsys)
    for key in ("momentum_residual_max", "energy_residual_max", "relative_speed_residual_max"):
        assert out[key] <= 1e-12
        assert out[key.replace("residual_max", "roundoff_bound")] > 0
    assert out["jacobian_det_plus_one_max"] <= 1e-6 and out["jacobian_fd_error_bound"] > 0
    assert main(["kinematics-check", "--samples", "10", "--mass-a", "2"]) == 2
    assert main(["kinematics-check", "--samples", "0"]) == 1


def test_coercivity_json_and_spectrum(tmp_path, capsys):
    spec = tmp_path / "spectrum.csv"
    assert main(["coercivity", "--gamma", "-1", "--grid", "5", "--spectrum", str(spec)]) == 0
    out = _json(capsys)
    assert out["delta_hat"] > 0 and out["delta_hat_tolerance"] < 1e-6 * out["delta_hat"]
    assert len(out["kernel_residuals"]) == 6
    assert out["spectrum_csv"] == str(spec)
    lines = spec.read_text().splitlines()
    assert lines[1] == "index,eigenvalue,tolerance"
    assert float(lines[2].split(",")[1]) == pytest.approx(out["delta_hat"], rel=1e-12)
    assert spec.with_suffix(".png").stat().st_size > 0


def test_coercivity_bad_gamma(capsys):
    assert main(["coercivity", "--gamma", "-4", "--grid", "5"]) == 1
    assert "gamma" in capsys.readouterr().err


def test_kernel_decay_csv(tmp_path):
    out, png = tmp_path / "decay.csv", tmp_path / "decay.png"
    assert main(["kernel-decay", "--speeds", "0,1", "--output", str(out), "--plot", str(png)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("gamma=-1,weight_power=0")
    assert lines[1] == "speed,integral,normalized,abserr"
    rows = [list(map(float, line.split(","))) for line in lines[2:]]
    assert [r[0] for r in rows] == [0.0, 1.0]
    assert all(r[1] > 0 and r[3] <= 1e-3 * r[1] for r in rows)
    assert png.stat().st_size > 0


def test_qtest_small(tmp_path):
    out, png = tmp_path / "q.csv", tmp_path / "q.png"
    assert main(["qtest", "--resolutions", "5,7", "--pairing-resolutions", "5,7", "--states", "1",
                 "--output", str(out), "--plot", str(png)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "check,resolution,residual,max_abs,observed_order,tolerance"
    checks = [line.split(",")[0] for line in lines[2:]]
    assert checks == ["annihilation"] * 2 + ["annihilation_raw"] * 2 + ["pairing"] * 2
    assert png.stat().st_size > 0


def test_moments(tmp_path, capsys):
    vg, xg = VelocityGrid(2.0, 5), SpatialGrid(1, 4)
    f = DistributionPair(vg, xg, np.random.default_rng(0).normal(size=(2, xg.size, vg.size)) * 1e-3)
    p = write_field(tmp_path / "s.csv", f, {"mass_a": 7, "mass_b": 8})
    assert main(["moments", "--state", str(p)]) == 0
    out = _json(capsys)
    assert set(out["functionals"]) == {"e1", "e2", "v1m", "v2m", "v3m", "v2sqm"}
    assert out["masses"] == [7.0, 8.0]
    assert out["reconstruction_residual"] <= 1e-12
    bare = write_field(tmp_path / "bare.csv", f)
    assert main(["moments", "--state", str(bare)]) == 2
    assert main(["moments", "--state", str(bare), "--mass-a", "1", "--mass-b", "1"]) == 0
    capsys.readouterr()
    assert main(["moments", "--state", str(tmp_path / "gone.csv")]) == 1
    assert "gone.csv" in capsys.readouterr().err


def test_simulate_missing_config(capsys):
    assert main(["simulate", "--config", "missing.cfg"]) == 1
    assert "missing.cfg" in capsys.readouterr().err


def test_simulate_bad_config(tmp_path, capsys):
    p = tmp_path / "run.cfg"
    p.write_text("# run\ndt = 0.05\ncolour = red\n")
    assert main(["simulate", "--config", str(p)]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "colour" in err


def test_simulate_deterministic(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"v_points = 5\nx_points = 6\nt_end = 0.1\ninitial = random\nseed = 11\n"
                   f"output_dir = {tmp_path / 'a'}\n")
    assert main(["simulate", "--config", str(cfg)]) == 0
    summary = _json(capsys)
    assert summary["status"] == "ok" and summary["steps"] == 2
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("monitors.csv", "final_state.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for name in ("monitors.png", "final_state.png"):
        assert (tmp_path / "a" / name).stat().st_size > 0
    header = (tmp_path / "a" / "monitors.csv").read_text().splitlines()[1].split(",")
    assert header[:3] == ["t", "cons_e1", "cons_e2"] and "min_F" in header
    cfg.write_text(cfg.read_text().replace("seed = 11", "seed = 12"))
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "final_state.csv").read_bytes() != (tmp_path / "c" / "final_state.csv").read_bytes()
