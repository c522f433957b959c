"""Command-line front end: config parsing, outputs, exit codes."""

from __future__ import annotations

import configparser
import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from skewdiff.cli import ConfigError, load_config, main


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


def simulate_config(tmp_path, out_name="sim.csv", extra=""):
    return write_config(tmp_path, f"""
[run]
command = simulate
output = {tmp_path / out_name}
seed = 11
n_paths = 1500
{extra}

[model]
name = constant

[grid]
T = 1.0
N = 8
""")


def test_simulate_writes_deterministic_csv(tmp_path):
    cfg = simulate_config(tmp_path)
    assert main([cfg]) == 0
    first = (tmp_path / "sim.csv").read_bytes()
    assert main([cfg]) == 0
    assert (tmp_path / "sim.csv").read_bytes() == first
    # worker count must not leak into the output bytes
    assert main([cfg, "--set", "run.threads=1"]) == 0
    one = (tmp_path / "sim.csv").read_bytes()
    assert main([cfg, "--set", "run.threads=4"]) == 0
    assert (tmp_path / "sim.csv").read_bytes() == one == first
    lines = first.decode().splitlines()
    assert lines[0] == "path,x_T"
    assert len(lines) == 1501
    assert b"\r" not in first


def test_csv_floats_round_trip(tmp_path):
    cfg = simulate_config(tmp_path)
    assert main([cfg]) == 0
    rows = (tmp_path / "sim.csv").read_text().splitlines()[1:]
    for row in rows[:50]:
        _, text = row.split(",")
        assert format(float(text), ".17g") == text


def test_json_sidecar_and_round_trip(tmp_path):
    cfg = simulate_config(tmp_path)
    assert main([cfg]) == 0
    meta = json.loads((tmp_path / "sim.json").read_text())
    for key in ("command", "config", "seed", "version",
                "wall_time_seconds", "fitted", "oracles", "flags"):
        assert key in meta
    assert meta["seed"] == 11
    assert meta["command"] == "simulate"
    assert meta["oracles"]
    # the config echo re-parses to an equivalent configuration
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for section, items in meta["config"].items():
        cp.add_section(section)
        for k, v in items.items():
            cp.set(section, k, v)
    echo_path = tmp_path / "echo.ini"
    with open(echo_path, "w") as fh:
        cp.write(fh)
    orig = dataclasses.asdict(load_config(cfg))
    echoed = dataclasses.asdict(load_config(str(echo_path)))
    for skip in ("echo", "coeffs"):
        orig.pop(skip)
        echoed.pop(skip)
    assert orig == echoed


def test_cli_writes_only_configured_outputs(tmp_path):
    out_dir = tmp_path / "nested" / "deep"
    cfg = write_config(tmp_path, f"""
[run]
command = validate
output = {out_dir / "report.csv"}

[model]
name = skew-bm
""")
    before = {p for p in tmp_path.rglob("*")}
    assert main([cfg]) == 0
    created = {p for p in tmp_path.rglob("*")} - before
    files = {p for p in created if p.is_file()}
    assert files == {out_dir / "report.csv", out_dir / "report.json"}


def test_validate_reports_all_checks(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = validate
output = {tmp_path / "v.csv"}

[model]
name = skew-bm
alpha = 0.7
""")
    assert main([cfg]) == 0
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "condition,passed,observed,bound,witness"
    body = [ln.split(",") for ln in lines[1:]]
    assert {row[0] for row in body} == {"drift_bounded", "a_hoelder",
                                        "ellipticity", "sigma_positive"}
    assert all(row[1] == "1" for row in body)
    meta = json.loads((tmp_path / "v.json").read_text())
    assert meta["fitted"]["passed"] is True and meta["flags"] == []


def test_validate_flags_breaker_model_but_exits_zero(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = validate
output = {tmp_path / "v.csv"}

[model]
name = sine-breaker
""")
    assert main([cfg]) == 0
    meta = json.loads((tmp_path / "v.json").read_text())
    assert "assumption-violated" in meta["flags"]


def test_density_command_outputs_lattice(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = density
output = {tmp_path / "d.csv"}
lattice = -0.9, -0.3, 0.3, 0.9
series_order = 3
series_time_slices = 24
series_nodes_per_side = 12

[model]
name = hoelder-bump

[grid]
T = 0.5
N = 4
""")
    assert main([cfg]) == 0
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "y,p_continuous,p_scheme,abs_gap"
    assert len(lines) == 5
    ys = [float(ln.split(",")[0]) for ln in lines[1:]]
    assert ys == [-0.9, -0.3, 0.3, 0.9]
    gaps = [float(ln.split(",")[3]) for ln in lines[1:]]
    assert all(g < 0.05 for g in gaps)
    meta = json.loads((tmp_path / "d.json").read_text())
    assert meta["fitted"]["envelope_C"] > 0.0
    assert meta["fitted"]["envelope_c"] > 1.0


def test_rate_density_outputs_schema(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = rate-density
output = {tmp_path / "rd.csv"}
lattice = -0.3, -0.1, 0.1, 0.3
series_order = 3
series_time_slices = 24
series_nodes_per_side = 12

[model]
name = hoelder-bump

[grid]
T = 0.5
N = 2, 4, 8
""")
    assert main([cfg]) == 0
    lines = (tmp_path / "rd.csv").read_text().splitlines()
    assert lines[0] == "N,h,sup_norm_error,normalized_error,slope_running"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "2" and float(first[1]) == 0.25
    assert first[4] == "nan"
    last = lines[3].split(",")
    assert np.isfinite(float(last[4]))
    meta = json.loads((tmp_path / "rd.json").read_text())
    assert set(meta["fitted"]) >= {"C", "c", "slope", "theoretical_slope",
                                   "resolution_floor"}


def test_bounds_command(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = bounds
output = {tmp_path / "b.csv"}

[model]
name = skew-bm
alpha = 0.7

[grid]
T = 1.0
N = 4
""")
    assert main([cfg]) == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "side,C,c,max_violation,n_points,n_excluded"
    sides = {ln.split(",")[0] for ln in lines[1:]}
    assert sides == {"upper", "lower"}
    for ln in lines[1:]:
        assert float(ln.split(",")[3]) <= 0.0
    meta = json.loads((tmp_path / "b.json").read_text())
    assert meta["flags"] == []


def test_inline_model_section(tmp_path):
    cfg = write_config(tmp_path, f"""
[run]
command = simulate
output = {tmp_path / "i.csv"}
n_paths = 200

[model]
drift = constant 0.1
sigma = constant 0.9
alpha = 0.4
eta = 1.0
L = 0.5
lambda = 1.4

[grid]
T = 0.5
N = 4
""")
    parsed = load_config(cfg)
    assert parsed.coeffs.alpha == 0.4
    assert parsed.coeffs.lambda_ell == 1.4
    assert float(parsed.coeffs.sigma(2.0)) == 0.9
    assert main([cfg]) == 0


def test_config_errors_exit_two(tmp_path, capsys):
    bad = [
        "not an ini file at all\n",
        "[run]\ncommand = simulate\n",  # missing output, model, grid
        f"[run]\ncommand = warp\noutput = {tmp_path / 'x.csv'}\n"
        "\n[model]\nname = constant\n\n[grid]\nT = 1\nN = 4\n",
        f"[run]\ncommand = simulate\noutput = {tmp_path / 'x.csv'}\n"
        "\n[model]\nname = constant\n\n[grid]\nT = -1\nN = 4\n",
        f"[run]\ncommand = simulate\noutput = {tmp_path / 'x.csv'}\n"
        "\n[model]\nname = constant\nwat = 3\n\n[grid]\nT = 1\nN = 4\n",
        f"[run]\ncommand = rate-density\noutput = {tmp_path / 'x.csv'}\n"
        "\n[model]\nname = constant\n\n[grid]\nT = 1\nN = 4, 8\n",
        f"[run]\ncommand = simulate\noutput = {tmp_path / 'x.csv'}\n"
        "typo_key = 1\n\n[model]\nname = constant\n\n[grid]\nT = 1\n"
        "N = 4\n",
    ]
    for i, body in enumerate(bad):
        cfg = write_config(tmp_path, body, name=f"bad{i}.ini")
        assert main([cfg]) == 2, body
        assert "config error" in capsys.readouterr().err
    assert main([str(tmp_path / "missing.ini")]) == 2
    cfg = simulate_config(tmp_path)
    assert main([cfg, "--set", "nonsense"]) == 2


def test_numeric_errors_exit_three(tmp_path, capsys):
    # a closed-form reference cannot exist for varying coefficients;
    # the failure happens while running, not while parsing
    cfg = write_config(tmp_path, f"""
[run]
command = rate-functional
output = {tmp_path / "rf.csv"}
reference = closed-form
n_paths = 1000

[model]
name = hoelder-bump

[grid]
T = 1.0
N = 2, 4, 8
""")
    assert main([cfg]) == 3
    err = capsys.readouterr().err
    assert "numeric error" in err and "rate-functional" in err


def test_module_entry_point(tmp_path):
    cfg = simulate_config(tmp_path, out_name="m.csv")
    proc = subprocess.run([sys.executable, "-m", "skewdiff", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m.csv").exists()
