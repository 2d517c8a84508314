import asyncio
import csv
import json
from pathlib import Path

import pytest

from Cocycle_Thermo.fixtures import create_sample_config
from Cocycle_Thermo.main import COMMANDS, main

CONFIG_DIR = Path(__file__).parent / "Cocycle_Thermo" / "configs"


def run(*argv):
    return asyncio.run(main(list(argv)))


def small_config(tmp_path, name="fix_sc", **overrides):
    data = create_sample_config(name)
    data.update({
        "grid": {"m_grid": 1, "n_proj": 32},
        "t": {"values": [0.5, 1.0]},
        "n": 6,
        "depth": 6,
        "mixing": {"L": 2, "n_gap": 2},
        "lyapunov": {"n": 40, "trials": 30, "h_step": 0.05, "eps": 0.1, "n_list": [5, 10]},
        "typicality": {"period_cap": 2, "insert_cap": 2},
    })
    data.update(overrides)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def read_manifest(out, command):
    with open(out / "manifests" / f"{command}_manifest.json", encoding="utf-8") as f:
        return json.load(f)


def test_usage_and_unknown_commands():
    assert run() == 2
    assert run("integrate", "x.json") == 2
    assert run("pressure") == 2


def test_validate_shipped_configs():
    for name in ("fix_sc", "fix_dg", "fix_ty"):
        assert run("validate", str(CONFIG_DIR / f"{name}.json")) == 0


def test_validate_reports_config_errors(tmp_path):
    path = small_config(tmp_path, n=1, seed=-3)
    assert run("validate", str(path)) == 2
    assert run("validate", str(tmp_path / "nope.json")) == 2


def test_not_mixing_exit_code(tmp_path):
    path = small_config(tmp_path, shift={"transitions": [[0, 1], [1, 0]]})
    assert run("pressure", str(path), "--out", str(tmp_path / "out")) == 4


def test_sample_config_command(tmp_path):
    target = tmp_path / "sample.json"
    assert run("sample-config", "fix_dg", "--out", str(target)) == 0
    assert json.loads(target.read_text(encoding="utf-8"))["name"] == "fix_dg"
    assert run("validate", str(target)) == 0
    assert run("sample-config", "fix_zz") == 2


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_completes(command, tmp_path):
    out = tmp_path / "out"
    assert run(command, str(small_config(tmp_path)), "--out", str(out)) == 0
    manifest = read_manifest(out, command)
    assert manifest["status"] == "completed"
    assert manifest["seed"] == 0
    assert manifest["outputs"]
    assert all(Path(p).exists() for p in manifest["outputs"])


def test_pressure_tables_are_reproducible(tmp_path):
    path = small_config(tmp_path)
    first, second = tmp_path / "a", tmp_path / "b"
    assert run("pressure", str(path), "--out", str(first)) == 0
    assert run("pressure", str(path), "--out", str(second)) == 0
    for name in ("pressure.csv", "pressure_by_n.csv"):
        assert (first / "tables" / name).read_bytes() == (second / "tables" / name).read_bytes()
    assert read_manifest(first, "pressure")["config_hash"] == read_manifest(second, "pressure")["config_hash"]

    with open(first / "tables" / "pressure.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["t"] for row in rows] == ["0.5", "1"]
    assert all(row["config"] == "fix_sc" and row["n"] == "6" for row in rows)


def test_typicality_on_diagonal_cocycle(tmp_path):
    out = tmp_path / "out"
    assert run("typicality", str(small_config(tmp_path, "fix_dg")), "--out", str(out)) == 0
    report = json.loads((out / "tables" / "typicality.json").read_text(encoding="utf-8"))
    assert report["one_typical"]["typical"] is False
    assert report["typical"]["typical"] is False


def test_fiber_bunching_requirement(tmp_path):
    out = tmp_path / "out"
    path = small_config(tmp_path, "fix_dg", require_fiber_bunching=True)
    assert run("pressure", str(path), "--out", str(out)) == 3
    manifest = read_manifest(out, "pressure")
    assert manifest["status"] == "failed"
    assert manifest["errors"][0]["type"] == "FiberBunchingError"


def test_spectrum_failure_keeps_partial_row(tmp_path, monkeypatch):
    monkeypatch.setenv("COCYCLE_GAP_FLOOR", "1.5")
    out = tmp_path / "out"
    assert run("spectrum", str(small_config(tmp_path)), "--out", str(out)) == 5
    with open(out / "tables" / "spectrum.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert rows[-1]["failed"] == "true"
    assert read_manifest(out, "spectrum")["errors"][0]["type"] == "SpectralGapError"


def test_spectrum_reports_empirical_t_max(tmp_path):
    out = tmp_path / "out"
    assert run("spectrum", str(small_config(tmp_path)), "--out", str(out)) == 0
    with open(out / "tables" / "spectrum.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [float(row["t_max_scan"]) for row in rows] == [1.0, 1.0]
    assert [row["outside_t_max"] for row in rows] == ["false", "false"]
    assert read_manifest(out, "spectrum")["result"]["t_max"] == 1.0


def test_spectrum_flags_t_beyond_failed_scan(tmp_path, monkeypatch):
    monkeypatch.setenv("COCYCLE_GAP_FLOOR", "1.5")
    out = tmp_path / "out"
    assert run("spectrum", str(small_config(tmp_path)), "--out", str(out)) == 5
    with open(out / "tables" / "spectrum.csv", newline="", encoding="utf-8") as f:
        row = list(csv.DictReader(f))[-1]
    assert float(row["t_max_scan"]) == 0.0
    assert row["outside_t_max"] == "true"


def test_lyapunov_marks_derivative_stencil_against_t_max(tmp_path):
    out = tmp_path / "out"
    assert run("lyapunov", str(small_config(tmp_path)), "--out", str(out)) == 0
    with open(out / "tables" / "pressure_derivative.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert all(float(row["t_max_scan"]) == pytest.approx(1.05) for row in rows)
    assert all(row["outside_t_max"] == "false" for row in rows)


def test_mixing_bounds_use_mixing_time_gap(tmp_path):
    out = tmp_path / "out"
    assert run("mixing", str(small_config(tmp_path)), "--out", str(out)) == 0
    with open(out / "tables" / "mixing_summary.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["k"] for row in rows] == ["1", "1"]
    for row in rows:
        assert float(row["kappa"]) == pytest.approx(1.0, abs=1e-8)
        assert float(row["delta"]) == pytest.approx(1.0, abs=1e-8)
