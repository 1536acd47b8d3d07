from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from surfvortex import __version__
from surfvortex.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, build_parser, config_hash, resolve, run


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_mesh_info_sphere(capsys):
    assert run(["mesh-info", "--preset", "sphere3", "--no-timestamp"]) == EXIT_OK
    doc = _json(capsys)
    info = doc["result"]
    assert info["euler_characteristic"] == 2 and info["genus"] == 0
    assert abs(info["total_curvature"] - 4 * math.pi) <= 1e-9
    assert doc["version"] == __version__
    assert doc["config_hash"] == config_hash(doc["config"])
    assert "timestamp" not in doc


def test_timestamp_present_by_default(capsys):
    assert run(["mesh-info", "--preset", "torus16"]) == EXIT_OK
    assert "timestamp" in _json(capsys)


def test_output_is_byte_identical_without_timestamp(capsys):
    argv = ["zeta", "--preset", "torus16", "--no-timestamp"]
    run(argv)
    first = capsys.readouterr().out
    run(argv)
    assert capsys.readouterr().out == first


def test_ini_config_and_flag_precedence(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[mesh]\npreset = sphere3\n[run]\nseed = 9\n[gamma-f]\nhalvings = 6\n")
    args = build_parser().parse_args(["mesh-info", "--config", str(ini)])
    cfg = resolve(args)
    assert cfg["preset"] == "sphere3" and cfg["seed"] == 9
    args = build_parser().parse_args(["mesh-info", "--config", str(ini), "--preset", "torus16", "--seed", "2"])
    cfg = resolve(args)
    assert cfg["preset"] == "torus16" and cfg["seed"] == 2
    args = build_parser().parse_args(["gamma-f", "--config", str(ini)])
    assert resolve(args)["halvings"] == 6


def test_gamma_f_writes_json_and_csv(tmp_path):
    out = tmp_path / "g"
    assert run(["gamma-f", "--out", str(out), "--no-timestamp"]) == EXIT_OK
    doc = json.loads((out / "gamma-f.json").read_text())
    assert doc["result"]["gamma_F"] > 0
    rows = (out / "gamma_f.csv").read_text().splitlines()
    assert rows[0] == "t,I_F,I_F_plus_pi_log_t" and len(rows) == 12


@pytest.mark.parametrize(
    "argv",
    [
        ["mesh-info"],
        ["mesh-info", "--preset", "nosuch"],
        ["mesh-info", "--preset", "sphere3", "--mesh", "x.off"],
        ["mesh-info", "--mesh", "/nonexistent.off"],
        ["mesh-info", "--preset", "sphere3", "--config", "/nonexistent.ini"],
        ["minimize", "--preset", "sphere3", "--eps", "-1"],
        ["minimize", "--preset", "sphere3", "--eps", "0.01"],
        ["psi", "--preset", "sphere3", "--points", "f0", "--d", "1"],
        ["psi", "--preset", "sphere3", "--points", "f0;f5", "--d", "1"],
        ["gamma-f", "--halvings", "x"],
    ],
)
def test_configuration_errors_exit_2(argv, capsys):
    assert run(argv) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_numerical_failure_exits_3(capsys):
    # the regular part cannot be resolved on the coarsest icosphere
    assert run(["greens", "--preset", "sphere3"]) == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_greens_on_resolved_mesh(capsys):
    assert run(["greens", "--preset", "sphere4", "--point", "f0", "--no-timestamp"]) == EXIT_OK
    res = _json(capsys)["result"]
    assert abs(res["mean"]) <= 1e-10
    assert abs(res["log_slope"] - 1.0) <= 0.05


def test_renorm_energy_flat_torus(capsys):
    assert run(["renorm-energy", "--preset", "torus16", "--no-timestamp"]) == EXIT_OK
    res = _json(capsys)["result"]
    assert res["W_formula"] == 0.0


def test_console_script_version():
    proc = subprocess.run([sys.executable, "-m", "surfvortex.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
