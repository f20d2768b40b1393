from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mcflab import cli
from mcflab.store import OUTPUT_ROOT_ENV

ROOT = Path(__file__).resolve().parents[1]
LINE = ROOT / "configs" / "single_run_line.json"


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(root))
    return root


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_line_run_is_byte_stationary(out_root):
    assert cli.main(["run", str(LINE)]) == 0
    rows = read_csv(out_root / "line_stationary" / "snapshots" / "run.csv")
    header, body = rows[0], rows[1:]
    assert header == ["t", "x", "u"]
    times = sorted({r[0] for r in body}, key=float)
    first = [r[1:] for r in body if r[0] == times[0]]
    last = [r[1:] for r in body if r[0] == times[-1]]
    assert float(times[-1]) == 0.1 and first == last


def test_manifest_contents(out_root):
    cli.main(["run", str(LINE)])
    m = json.loads((out_root / "line_stationary" / "manifest.json").read_text())
    assert m["status"] == "pass" and len(m["config_hash"]) == 64
    assert {f["path"] for f in m["files"]} >= {"config.json", "snapshots/run.csv", "monitor/run.csv"}


def test_runs_are_deterministic(tmp_path, monkeypatch):
    inv = []
    for k in range(2):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / f"r{k}"))
        assert cli.main(["run", str(LINE)]) == 0
        m = json.loads((tmp_path / f"r{k}" / "line_stationary" / "manifest.json").read_text())
        inv.append(m["files"])
    assert inv[0] == inv[1]


def test_failing_check_exits_1(tmp_path, out_root):
    raw = {
        "experiment": "invariant_suite",
        "datum": {"name": "cone"},
        "grid": {"kind": "1d", "x_min": -4.0, "x_max": 4.0, "h": 0.1},
        "flow": {"t_end": 0.1, "snapshot_stride": 5},
        "checks": [{"name": "ecker_huisken", "window": 1.0, "bound": 0.01}],
    }
    assert cli.main(["run", str(write(tmp_path, raw))]) == 1


def test_missing_grid_exits_2(tmp_path, out_root, capsys):
    raw = json.loads(LINE.read_text())
    del raw["grid"]
    assert cli.main(["run", str(write(tmp_path, raw))]) == 2
    assert "/grid" in capsys.readouterr().err


def test_missing_file_and_bad_args_exit_2(tmp_path, out_root):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    assert cli.main(["check", "medium"]) == 2
    assert cli.main([]) == 2


def test_runtime_error_exits_3(tmp_path, out_root):
    raw = {
        "experiment": "single_run",
        "name": "bad",
        "datum": {"name": "oscillatory"},
        "grid": {"kind": "radial", "r_max": 2.0, "h": 0.1},
        "flow": {"t_end": 0.01},
    }
    assert cli.main(["run", str(write(tmp_path, raw))]) == 3
    m = json.loads((out_root / "bad" / "manifest.json").read_text())
    assert m["status"] == "error" and "rotationally symmetric" in m["error"]


def test_sweep(tmp_path, out_root):
    raw = {
        "experiment": "sweep",
        "name": "sw",
        "sweep": {
            "parameter": "grid.h",
            "values": [0.2, 0.1],
            "base": {
                "experiment": "harnack_suite",
                "datum": {"name": "paraboloid"},
                "grid": {"kind": "1d", "x_min": -4.0, "x_max": 4.0, "h": 0.2},
                "flow": {"t_end": 0.2, "snapshot_stride": 10, "policy": "clamped_initial"},
            },
        },
    }
    assert cli.main(["sweep", str(write(tmp_path, raw))]) == 0
    assert (out_root / "sw" / "sweep.json").exists()
    members = sorted(p.name for p in (out_root / "sw").iterdir() if p.is_dir())
    assert members == ["000", "001"]
    # a non-sweep config is rejected by the sweep command
    assert cli.main(["sweep", str(LINE)]) == 2


def test_schema_command(capsys):
    assert cli.main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["$schema"].endswith("2020-12/schema")


def test_console_entry_point(tmp_path):
    env = {"PATH": "", OUTPUT_ROOT_ENV: str(tmp_path)}
    proc = subprocess.run([sys.executable, "-m", "mcflab", "run", str(LINE)], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "line_stationary" / "manifest.json").exists()
