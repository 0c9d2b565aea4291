import csv
import io as stdio
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fluidlim import cli
from fluidlim.model import InvariantError


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    reader = csv.reader(stdio.StringIO(text))
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader])
    return header, data


def test_simulate_particle(capsys):
    code, out, _ = _run(["simulate", "--model", "particle", "--w", "2", "--mu", "1.0", "--N", "200",
                         "--horizon", "1.0", "--seed", "11"], capsys)
    assert code == 0
    header, data = _rows(out)
    assert header[:4] == ["t", "x0", "x1", "x2"]
    assert {"inert", "excited", "h", "e"} <= set(header)
    t = data[:, 0]
    assert np.all(np.diff(t) >= 0) and t[-1] == 1.0


def test_simulate_particle_to_file(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code, stdout, _ = _run(["simulate", "--model", "particle", "--w", "2", "--mu", "1.0", "--sigma2", "0",
                            "--N", "200", "--horizon", "2", "--seed", "42", "--out", str(out)], capsys)
    assert code == 0 and stdout == ""
    _, data = _rows(out.read_text())
    assert np.all(np.diff(data[:, 0]) >= 0)


def test_simulate_walk_ends_near_mean(capsys):
    code, out, _ = _run(["simulate", "--model", "walk", "--mu", "0.5", "--N", "1000", "--horizon", "1.0"], capsys)
    assert code == 0
    _, data = _rows(out)
    assert abs(data[-1, 1] - 0.5) <= 0.1


def test_simulate_is_reproducible(capsys):
    argv = ["simulate", "--model", "walk", "--N", "300", "--seed", "5"]
    assert _run(argv, capsys)[1] == _run(argv, capsys)[1]


def test_simulate_svg(tmp_path, capsys):
    svg = tmp_path / "p.svg"
    code, _, _ = _run(["simulate", "--model", "particle", "--N", "100", "--svg", str(svg), "--overlay-fluid",
                       "--out", str(tmp_path / "t.csv")], capsys)
    assert code == 0 and svg.read_text().lstrip().startswith("<?xml")


def test_missing_model_is_usage_error(capsys):
    code, _, err = _run(["simulate", "--N", "100"], capsys)
    assert code == 2 and "--model" in err


def test_fluid_at_ln2(capsys):
    code, out, _ = _run(["fluid", "--model", "particle", "--w", "2", "--mu", "1.0", "--horizon", "2.0"], capsys)
    assert code == 0
    header, data = _rows(out)
    t = data[:, 0]
    k = int(np.argmin(np.abs(t - math.log(2))))
    assert abs(t[k] - math.log(2)) <= 5e-4
    # evaluate the closed form at the grid time actually printed
    s = t[k]
    want = [1.0, 0.5 * (1 - math.exp(-2 * s)), 1 - math.exp(-s)]
    np.testing.assert_allclose(data[k, 1:4], want, atol=1e-6)
    h, e = data[k, header.index("h")], data[k, header.index("e")]
    assert h == pytest.approx(math.exp(-s), abs=1e-6)
    assert e == pytest.approx(math.exp(-s) - math.exp(-2 * s), abs=1e-6)


def test_fluid_horizon_zero(capsys):
    code, out, _ = _run(["fluid", "--model", "particle", "--horizon", "0"], capsys)
    assert code == 0
    _, data = _rows(out)
    assert data.shape[0] == 1 and data[0, 0] == 0.0


def test_fluid_step_halving_drops_error_16x(capsys):
    def err(step):
        code, out, _ = _run(["fluid", "--model", "particle", "--horizon", "2.0", "--step", str(step)], capsys)
        assert code == 0
        _, d = _rows(out)
        t = d[:, 0]
        exact = np.column_stack([np.ones_like(t), 0.5 * (1 - np.exp(-2 * t)), 1 - np.exp(-t)])
        return np.max(np.abs(d[:, 1:4] - exact))

    assert 12 <= err(1e-2) / err(5e-3) <= 20


def test_fluid_exit_bound_stops_rows(capsys):
    code, out, _ = _run(["fluid", "--model", "particle", "--horizon", "2.0", "--exit-bound", "0.5"], capsys)
    assert code == 0
    _, data = _rows(out)
    assert data[-1, 0] == pytest.approx(math.log(2), abs=1e-9)


def test_verify_writes_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FLUIDLIM_THREADS", "1")
    out = tmp_path / "r.json"
    samples = tmp_path / "s.csv"
    code, _, err = _run(["verify", "--model", "walk", "--N-ladder", "50,100,200", "--replicates", "100",
                         "--delta", "0.2", "--seed", "3", "--out", str(out), "--csv", str(samples)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["N_ladder"] == [50, 100, 200] and len(rep["per_N"]) == 3
    assert "slope" in err
    assert len(samples.read_text().splitlines()) == 301


def test_verify_particle_slope(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FLUIDLIM_THREADS", "1")
    out = tmp_path / "r.json"
    code, _, _ = _run(["verify", "--model", "particle", "--N-ladder", "100,400,1600", "--replicates", "300",
                       "--seed", "8", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert -0.65 <= rep["slope_median_dev"] <= -0.35
    keys = {"N", "median_sup_dev", "exceedance", "wilson_lo", "wilson_hi", "exit_prob", "median_sigma"}
    assert keys <= set(rep["per_N"][0])
    assert {"model", "params", "u", "delta", "N_ladder", "per_N", "slope_median_dev", "zeta"} <= set(rep)


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--model", "walk", "--N-ladder", "50,100", "--replicates", "0"],
        ["verify", "--model", "walk", "--N-ladder", "50", "--replicates", "100"],
        ["verify", "--model", "walk", "--N-ladder", "50,100", "--replicates", "10"],
        ["simulate", "--model", "particle", "--N", "0"],
        ["simulate", "--model", "walk", "--N", "10", "--mu", "1.5"],
        ["simulate", "--model", "walk", "--N", "10", "--sigma2", "0.3"],
        ["bounds", "--model", "particle", "--N", "100", "--bound-kappa", "1.0"],
        ["fluid", "--model", "particle", "--exit-coord", "7", "--exit-bound", "0.5"],
    ],
)
def test_usage_errors(argv, capsys, monkeypatch):
    monkeypatch.setenv("FLUIDLIM_THREADS", "1")
    assert _run(argv, capsys)[0] == 2


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("FLUIDLIM_THREADS", "many")
    argv = ["verify", "--model", "walk", "--N-ladder", "50,100", "--replicates", "100"]
    assert _run(argv, capsys)[0] == 2


def test_bounds_json(capsys):
    code, out, _ = _run(["bounds", "--model", "particle", "--N", "1000", "--horizon", "1.0", "--delta", "0.1"], capsys)
    assert code == 0
    d = json.loads(out)
    assert {"bound", "argmin_n", "chebyshev_term", "moment_term", "gamma_term", "n"} <= set(d)
    assert 0 <= d["bound"] <= 1
    # the optimised minimum is never worse than the single substituted n
    assert d["bound"] <= d["substituted_bound"] + 1e-15


def test_exit_json(capsys, monkeypatch):
    code, out, _ = _run(["exit", "--model", "particle", "--N-ladder", "100,400", "--replicates", "100"], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["zeta"] == pytest.approx(math.log(2), abs=1e-9)
    assert [row["N"] for row in d["per_N"]] == [100, 400]


def test_io_failure_exit_code(tmp_path, capsys):
    bad = str(tmp_path / "missing" / "x.csv")
    assert _run(["fluid", "--model", "walk", "--out", bad], capsys)[0] == 3


def test_invariant_breach_exit_code(capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise InvariantError("probability outside [0, 1]")

    monkeypatch.setattr(cli, "simulate", broken)
    code, _, err = _run(["simulate", "--model", "particle", "--N", "50"], capsys)
    assert code == 4 and "invariant" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fluidlim", "fluid", "--model", "walk", "--horizon", "0.5",
                          "--step", "0.25"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.splitlines() == ["t,y0", "0,0", "0.25,0.125", "0.5,0.25"]
