import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from distdrift import __version__
from distdrift.cli import (EXIT_CONFIG, EXIT_MANY_SOLUTIONS, EXIT_NO_SOLUTION, EXIT_OK, main)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(*args):
    return subprocess.run([sys.executable, "-m", "distdrift", *map(str, args)],
                          capture_output=True, text=True)


def _csv(path):
    rows = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    return np.loadtxt(rows[1:], delimiter=",", ndmin=2)


def cli(*args):
    return main([str(a) for a in args])


def _header(path):
    return [line for line in Path(path).read_text().splitlines() if line.startswith("#")]


def test_version():
    res = _run("--version")
    assert res.returncode == 0 and __version__ in res.stdout


def test_scale_default_is_brownian_and_deterministic(tmp_path):
    assert cli("scale", "--out", tmp_path / "a") == EXIT_OK
    assert cli("scale", "--out", tmp_path / "b") == EXIT_OK
    a = (tmp_path / "a" / "sigma.csv").read_bytes()
    assert a == (tmp_path / "b" / "sigma.csv").read_bytes()
    data = _csv(tmp_path / "a" / "sigma.csv")
    assert np.all(data[:, 1] == 0) and np.allclose(data[:, 2], data[:, 0])
    hdr = _header(tmp_path / "a" / "sigma.csv")
    assert hdr[0] == f"# distdrift {__version__}" and hdr[1] == "# command: scale"
    assert hdr[2].startswith("# config_sha256: ") and hdr[3] == "# seed: 0"
    rep = json.loads((tmp_path / "a" / "wellposedness.json").read_text())
    assert rep["provenance"]["command"] == "scale"


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n  "sim": {"dt": }\n}')
    assert cli("scale", "--config", bad, "--out", tmp_path) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_invalid_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sim": {"dt": 0.5}}))
    assert cli("simulate", "--config", bad, "--out", tmp_path) == EXIT_CONFIG
    assert "dt" in capsys.readouterr().err


def test_no_solution_exit_code(tmp_path):
    assert cli("solve", "--config", CONFIGS / "no_solution.json", "--out", tmp_path) == EXIT_NO_SOLUTION
    rep = json.loads((tmp_path / "solver.json").read_text())
    assert rep["outcome"] == "no-root"
    assert len(rep["phi_scan"]["x1"]) == len(rep["phi_scan"]["phi"]) > 100
    assert max(abs(v) for v in rep["phi_scan"]["x1"]) >= 1e6


def test_many_solutions_exit_code(tmp_path):
    assert cli("solve", "--config", CONFIGS / "sine_family.json", "--out", tmp_path) == EXIT_MANY_SOLUTIONS
    rep = json.loads((tmp_path / "solver.json").read_text())
    assert rep["outcome"] == "many-roots"


def test_monotone_problem_solves(tmp_path):
    assert cli("solve", "--config", CONFIGS / "monotone.json", "--out", tmp_path) == EXIT_OK
    cond = json.loads((tmp_path / "conditions.json").read_text())
    assert cond["monotone"] and cond["gamma"] <= 0
    assert "not a proof" in cond["label"]
    sol = _csv(tmp_path / "solution.csv")
    assert sol[0, 1] == 0.5 and sol[-1, 1] == -0.5


def test_seed_override_changes_provenance(tmp_path):
    args = ["simulate", "--dt", "1e-3", "--paths", "50", "--x0", "0.5"]
    assert cli(*args, "--out", tmp_path / "a") == EXIT_OK
    assert cli(*args, "--seed", "4", "--out", tmp_path / "b") == EXIT_OK
    ha, hb = _header(tmp_path / "a" / "paths_summary.csv"), _header(tmp_path / "b" / "paths_summary.csv")
    assert ha[3] == "# seed: 0" and hb[3] == "# seed: 4" and ha[2] != hb[2]


def test_thread_count_does_not_change_output(tmp_path):
    outs = []
    for n in (1, 2):
        out = tmp_path / f"t{n}"
        res = _run("simulate", "--dt", "1e-3", "--paths", "2000", "--x0", "0.3", "--seed", "11",
                   "--threads", n, "--out", out)
        assert res.returncode == 0, res.stderr
        outs.append((out / "paths_summary.csv").read_bytes())
    assert outs[0] == outs[1]
