import csv
import json
import subprocess
import sys

import pytest
import yaml

from dickelmg import __version__
from dickelmg.cli import main


def _run(tmp_path, name, cfg, command, *extra):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out), *extra]), out


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


OP = {
    "params": {"epsilon": 1, "jy": 1, "n_spins": 6, "boson_cutoff": 30},
    "op_scan": {"axis": "lambda", "values": {"start": 0.5, "stop": 0.8, "num": 4}},
}


def test_op_scan_writes_csv_and_sidecar(tmp_path):
    code, out = _run(tmp_path, "op", OP, "op-scan")
    assert code == 0
    rows = _rows(out / "op_scan.csv")
    assert rows[0] == ["coupling", "zeta_s", "zeta_mx", "zeta_my", "m_z", "chi"]
    assert len(rows) == 5
    side = json.loads((out / "op_scan.json").read_text())
    assert side["artifact_version"] == __version__
    assert side["command"] == "op-scan"
    assert side["config"]["params"]["n_spins"] == 6


@pytest.mark.parametrize(
    "command,cfg,csv_name",
    [
        ("op-scan", OP, "op_scan.csv"),
        (
            "bias-scan",
            {
                "params": {"epsilon": 1, "jy": 1, "n_spins": 6, "boson_cutoff": 20},
                "bias_scan": {"lambda0": {"start": 0.6, "stop": 0.7, "num": 3}, "t_final": 20, "dt": 0.05},
            },
            "bias_scan.csv",
        ),
        (
            "chi-scan",
            {
                "params": {"epsilon": 1, "jy": 1, "n_spins": 4, "boson_cutoff": 20},
                "chi_scan": {"axis": "lambda", "n_values": [4, 6, 8, 10], "boson_cutoff": "auto"},
            },
            "chi_scan_N8.csv",
        ),
    ],
)
def test_outputs_identical_across_worker_counts(tmp_path, command, cfg, csv_name):
    code1, out1 = _run(tmp_path, "w1", cfg, command, "--workers", "1")
    code2, out2 = _run(tmp_path, "w2", cfg, command, "--workers", "2")
    assert code1 == code2 == 0
    assert (out1 / csv_name).read_bytes() == (out2 / csv_name).read_bytes()
    # sidecars differ only in the recorded worker count
    for side in out1.glob("*.json"):
        a, b = json.loads(side.read_text()), json.loads((out2 / side.name).read_text())
        a["config"].pop("workers", None), b["config"].pop("workers", None)
        assert a == b


def test_bad_inputs_exit_2(tmp_path):
    assert _run(tmp_path, "desc", {"op_scan": {"values": [0.3, 0.2]}}, "op-scan")[0] == 2
    assert _run(tmp_path, "empty", {"op_scan": {"values": []}}, "op-scan")[0] == 2
    assert _run(tmp_path, "unknown", {"op_scan": {"bogus": 1}}, "op-scan")[0] == 2
    assert _run(tmp_path, "neg", {"params": {"n_spins": -3}}, "op-scan")[0] == 2


def test_numerical_failure_exits_3(tmp_path):
    cfg = {
        "params": {"epsilon": 1, "lam": 0.9, "n_spins": 10, "boson_cutoff": 6},
        "dynamics": {"t_final": 1, "dt": 0.02},
    }
    assert _run(tmp_path, "cut", cfg, "dynamics")[0] == 3


def test_dynamics_and_qfunc_outputs(tmp_path):
    cfg = {
        "params": {"epsilon": 1, "lam": 0.6, "jy": 1, "n_spins": 4, "boson_cutoff": 20},
        "dynamics": {"t_final": 2, "dt": 0.02, "snapshot_times": [0, 2]},
    }
    code, out = _run(tmp_path, "dyn", cfg, "dynamics")
    assert code == 0
    rows = _rows(out / "trajectory.csv")
    assert rows[0] == ["t", "gain", "sqnr", "echo", "rate"]
    assert float(rows[1][1]) == 1.0
    side = json.loads((out / "trajectory.json").read_text())
    assert side["representation"] == "hilbert"
    assert any(p.name.startswith("q_spin_t") for p in out.iterdir())
    code, out = _run(tmp_path, "q", cfg, "qfunc")
    assert code == 0 and (out / "q_spin.csv").exists() and (out / "q_boson.csv").exists()


def test_liouville_and_thermal(tmp_path):
    cfg = {
        "params": {"epsilon": 1, "lam": 0.5, "jy": 1, "n_spins": 2, "boson_cutoff": 10},
        "liouville": {"t_final": 1, "dt": 0.02},
        "thermal": {"temperatures": [0.01, 1.0]},
    }
    code, out = _run(tmp_path, "lv", cfg, "liouville-evolve")
    assert code == 0
    assert json.loads((out / "trajectory.json").read_text())["representation"] == "liouville"
    code, out = _run(tmp_path, "th", cfg, "thermal")
    assert code == 0 and len(_rows(out / "thermal.csv")) == 3


def test_phase_diagram_meanfield(tmp_path):
    cfg = {"phase_diagram": {"axis1": {"name": "x", "start": 0, "stop": 1, "num": 21},
                             "axis2": {"name": "jy", "start": 0, "stop": 1, "num": 21}}}
    code, out = _run(tmp_path, "pd", cfg, "phase-diagram")
    assert code == 0
    assert len(_rows(out / "phase_diagram.csv")) == 21 * 21 + 1
    bounds = json.loads((out / "phase_boundaries.json").read_text())
    assert "triple_point" in bounds


def test_selftest_and_entry_point(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    assert "selftest passed" in capsys.readouterr().out
    res = subprocess.run([sys.executable, "-m", "dickelmg.cli", "--version"], capture_output=True, text=True)
    assert res.stdout.strip() == __version__
