import csv
import io
import json

import numpy as np
import pytest

from kinslip import cli
from kinslip.kinetic import KineticSolverError

KINETIC = """
run.mode = kinetic
grid.nx = 8
grid.ny = 8
time.t_end = 0.01
regime.epsilon = 0.1
audit.every = 2
"""

NS = """
run.mode = ns
grid.nx = 16
grid.ny = 16
time.t_end = 0.05
"""


def _write(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def kinetic_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("kin")
    cfg = _write(d, KINETIC)
    code = cli.main(["run", cfg, "--out", str(d / "out")])
    return code, d / "out", cfg


def test_kinetic_run_outputs(kinetic_run):
    code, out, _ = kinetic_run
    assert code == cli.EXIT_PASS
    for name in ("config.txt", "snapshots.csv", "timeseries.csv", "final.npy", "entropy.csv",
                 "report.json"):
        assert (out / name).is_file(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema"] == cli.RUN_SCHEMA and rep["passed"]
    assert rep["mass_drift"] <= cli.TOL_MASS
    with open(out / "snapshots.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == cli.SNAPSHOT_COLUMNS
    assert len(rows) == 2 * 8 * 8
    assert any((out / "plotdata").glob("*.dat"))


def test_report_is_bit_reproducible(kinetic_run, tmp_path):
    _, out, cfg = kinetic_run
    assert cli.main(["run", cfg, "--out", str(tmp_path / "again")]) == cli.EXIT_PASS
    assert (tmp_path / "again" / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_audit_replays_run(kinetic_run):
    _, out, _ = kinetic_run
    assert cli.main(["audit", str(out)]) == cli.EXIT_PASS
    summ = json.loads((out / "entropy_summary.json").read_text())
    assert summ["schema"] == cli.AUDIT_SCHEMA
    assert summ["replay_matches_stored_state"] is True
    assert summ["violated"] is False


def test_audit_needs_run_dir(tmp_path):
    assert cli.main(["audit", str(tmp_path)]) == cli.EXIT_CONFIG


def test_ns_run(tmp_path):
    assert cli.main(["run", _write(tmp_path, NS), "--out", str(tmp_path / "o")]) == cli.EXIT_PASS
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["mode"] == "ns" and rep["checks"]["energy_inequality"]
    assert rep["max_divergence"] < 1e-10


@pytest.mark.parametrize("text", ["grid.nx = 8\nbogus = 1\n", "run.mode = lbm\n",
                                  "run.mode = ns\nfluid.scheme_order = 2\n",
                                  "lattice.nodes_per_axis = 4\n"])
def test_config_errors(tmp_path, text):
    assert cli.main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise KineticSolverError("synthetic")
    monkeypatch.setattr(cli, "run_kinetic", boom)
    assert cli.main(["run", _write(tmp_path, KINETIC), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER


def test_lattice_audit_stdout(capsys):
    assert cli.main(["lattice-audit"]) == cli.EXIT_PASS
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows and set(("moment_name", "value", "target", "defect")) <= set(rows[0])


def test_wall_audit_stdout(capsys):
    assert cli.main(["wall-audit", "--count", "10"]) == cli.EXIT_PASS
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert all(r["passed"] == "True" for r in rows)


def test_ns_sweep(tmp_path):
    text = """
sweep.mode = ns-to-euler
sweep.values = 0.02, 0.01, 0.005
sweep.n_out = 4
grid.nx = 16
grid.ny = 16
time.t_end = 0.2
"""
    out = tmp_path / "s"
    assert cli.main(["sweep", _write(tmp_path, text), "--out", str(out)]) == cli.EXIT_PASS
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and len(rep["rows"]) == 3
    assert (out / "sweep.csv").is_file()


def test_jsonable_handles_nan_and_arrays():
    assert cli.jsonable({"a": float("nan"), "b": np.arange(2), "c": np.float64(1.5)}) == \
        {"a": None, "b": [0, 1], "c": 1.5}
