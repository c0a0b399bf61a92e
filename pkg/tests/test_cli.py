import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from ringsqueeze.cli import main

SMALL_SET = ["--set", "n_k=7", "--set", "n_phantom=2", "--set", "energy_pJ=10"]
SMALL_BASE = {"n_k": 7, "n_phantom": 2, "energy_pJ": 10}


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "cfg.json"
    assert main(["config", "--scenario", "example1", *SMALL_SET, "--out", str(path)]) == 0
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_units(cfg_path):
    d = json.loads(cfg_path.read_text())
    assert "pumps" in d and "bins" in d


def test_spectrum(cfg_path, tmp_path):
    out = tmp_path / "spec.csv"
    assert main(["spectrum", "--config", str(cfg_path), "--range", "-10:10", "--points", "501", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["detuning_GHz", "power_transmission", "phase_rad"]
    assert len(rows) == 502
    power = np.array([float(r[1]) for r in rows[1:]])
    assert np.all((power >= 0) & (power <= 1 + 1e-12))
    assert power.min() < 0.5


def test_nltable(cfg_path, tmp_path):
    out = tmp_path / "nl.json"
    assert main(["nltable", "--config", str(cfg_path), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    quads = {tuple(r["quad"]) for r in d["quads"]}
    assert ("S", "S", "P1", "P2") in quads
    assert all("delta_k_per_um" in r for r in d["quads"])


def test_pumps(cfg_path, tmp_path):
    out = tmp_path / "pumps.csv"
    assert main(["pumps", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["t_ps", "pump", "ring_energy_pJ", "waveguide_energy_pJ"]
    assert {r[1] for r in rows[1:]} == {"P1", "P2"}
    assert max(float(r[2]) for r in rows[1:]) > 0


def test_propagate_and_analyze(cfg_path, tmp_path):
    dump = tmp_path / "k.bin"
    assert main(["propagate", "--config", str(cfg_path), "--out", str(dump)]) == 0
    meta = json.loads((tmp_path / "k.bin.json").read_text())
    assert meta["basis"] == "out" and meta["dtype"] == "<c16"
    for subset in ("signal_out", "idlers_out", "S:0,LI:0"):
        out = tmp_path / f"an_{subset.replace(':', '').replace(',', '')}.json"
        assert main(["analyze", "--in", str(dump), "--subset", subset, "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["max_squeezing_dB"] <= 0
        assert min(rep["symplectic_eigenvalues"]) >= 0.5 - 1e-9
        assert len(rep["mercer_wolf"]["occupancies"]) == rep["n_modes"]


def _run(tmp_path, name, axes, scenario="example1"):
    ov = tmp_path / f"{name}.json"
    ov.write_text(json.dumps({"base": SMALL_BASE, "axes": axes,
                              "observables": ["max_squeezing_db", "n_tot_S", "fidelity_vs_dp_only"]}))
    out = tmp_path / name
    code = main(["run", "--scenario", scenario, "--config", str(ov), "--out", str(out)])
    return code, out


def test_run_grid_outputs_and_determinism(tmp_path):
    axes = [{"name": "kappa_aux", "values": [0.0, 0.0643]}, {"name": "pump_detuning_MHz", "values": [-284]}]
    code, out = _run(tmp_path, "a", axes)
    assert code == 0
    rows = _rows(out / "grid.csv")
    assert len(rows) == 1 + 2 * 1
    assert rows[0][:2] == ["kappa_aux", "pump_detuning_MHz"]
    for name in ("max_squeezing_db", "n_tot_S", "fidelity_vs_dp_only"):
        svg = (out / f"{name}.svg").read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    meta = json.loads((out / "meta.json").read_text())
    assert meta["failed_points"] == 0 and "numpy" in meta["versions"]
    code, again = _run(tmp_path, "b", axes)
    assert code == 0
    assert (out / "grid.csv").read_bytes() == (again / "grid.csv").read_bytes()
    assert (out / "n_tot_S.svg").read_bytes() == (again / "n_tot_S.svg").read_bytes()


def test_run_partial_failure_exit_code(tmp_path):
    code, out = _run(tmp_path, "bad", [{"name": "kappa_aux", "values": [0.05, 1.5]}])
    assert code == 2
    rows = _rows(out / "grid.csv")
    assert len(rows) == 3
    assert rows[2][-1].startswith("InvalidCoupling")
    assert json.loads((out / "meta.json").read_text())["failed_points"] == 1


def test_missing_config_file(tmp_path, capsys):
    assert main(["nltable", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_console_script():
    exe = shutil.which("ringsqueeze")
    if exe is None:
        pytest.skip("console script not installed")
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("spectrum", "nltable", "pumps", "analyze", "run"):
        assert cmd in res.stdout
