import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from adelim.cli import bundled_config, run


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return rows


def quick_raman_config(**overrides):
    cfg = bundled_config("raman_pi")
    cfg["initial_state"]["momentum_samples"] = 7   # odd: resonant class exact
    cfg["output"]["samples"] = 11
    cfg["output"]["window"] = [-2, 2]
    cfg.update(overrides)
    return cfg


def test_five_level_compare_outputs(tmp_path):
    cfg = bundled_config("five_level_compare")
    cfg["samples"] = 41
    cfg["time_span_s"] = 2.0
    assert run(cfg, tmp_path) == 0
    for name in ("validity.json", "populations.csv", "delta.csv",
                 "run_meta.json"):
        assert (tmp_path / name).exists(), name
    deltas = read_csv(tmp_path / "delta.csv")
    assert {r["method"] for r in deltas} == {"markov", "paulisch", "sanz",
                                             "ours"}
    validity = json.loads((tmp_path / "validity.json").read_text())
    assert validity["gamma_star_rad_s"] == 14.0
    pops = read_csv(tmp_path / "populations.csv")
    assert {r["level"] for r in pops} == {"g", "m", "e"}
    t0_total = sum(float(r["population"]) for r in pops
                   if float(r["time_s"]) == 0.0)
    assert t0_total == pytest.approx(1.0, abs=1e-9)


def test_raman_pulse_outputs_and_schemas(tmp_path):
    assert run(quick_raman_config(), tmp_path) == 0
    for name, columns in [
        ("populations.csv", "time_s, area_progress, level, population"),
        ("density.csv", "area_progress, doppler_over_rabi, level, density"),
        ("pulse.csv", "time_s, area_progress, amplitude_rad_s"),
    ]:
        head = (tmp_path / name).read_text().splitlines()[0]
        assert head == f"# columns: {columns}"
    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert meta["total_area"] == pytest.approx(np.pi, rel=1e-9)
    dens = read_csv(tmp_path / "density.csv")
    assert {r["level"] for r in dens} == {"e", "g"}
    # resonant momentum class ends inverted for the pi pulse
    final_area = max(float(r["area_progress"]) for r in dens)
    rows_e = [r for r in dens if r["level"] == "e"
              and float(r["area_progress"]) == final_area]
    nearest = min(rows_e, key=lambda r: abs(float(r["doppler_over_rabi"])))
    assert float(nearest["density"]) > 0.97


def test_compare_full_writes_delta(tmp_path):
    cfg = bundled_config("raman_compare")
    cfg["output"]["samples"] = 21
    assert run(cfg, tmp_path) == 0
    deltas = read_csv(tmp_path / "delta.csv")
    assert {r["method"] for r in deltas} == {"ours"}
    worst = max(float(r["delta"]) for r in deltas)
    assert worst < 0.05
    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert meta["max_population_error"] == pytest.approx(worst)


def test_reruns_are_byte_identical_except_run_meta(tmp_path):
    cfg = quick_raman_config()
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("validity.json", "populations.csv", "density.csv",
                 "pulse.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes(), name
    ma = json.loads((tmp_path / "a" / "run_meta.json").read_text())
    mb = json.loads((tmp_path / "b" / "run_meta.json").read_text())
    ma.pop("generated_at_unix_s")
    mb.pop("generated_at_unix_s")
    assert ma == mb


def test_malformed_config_exits_2_with_field(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "raman_pulse",
                               "system": {"preset": "rb87_d2"}}))
    proc = subprocess.run(
        [sys.executable, "-m", "adelim", "--out", str(tmp_path / "out"),
         "run", "--config", str(bad)],
        capture_output=True, text=True)
    assert proc.returncode == 2
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert "duration_s" in err["field"]


def test_unknown_scenario_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "nope"}))
    proc = subprocess.run(
        [sys.executable, "-m", "adelim", "--out", str(tmp_path / "out"),
         "run", "--config", str(bad)],
        capture_output=True, text=True)
    assert proc.returncode == 2
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["field"] == "scenario"


def test_validity_subcommand(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "adelim", "--out", str(tmp_path), "validity"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gamma_star = 14" in proc.stdout
    report = json.loads((tmp_path / "validity.json").read_text())
    assert report["verdict"] in ("pass", "warn")


def test_s_integral_subcommand_table(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "adelim", "--out", str(tmp_path), "s-integral",
         "--pulse-kind", "box", "--a0", "1.0", "--duration", "100",
         "--time", "50", "--gamma-min", "100", "--gamma-max", "100",
         "--write-csv"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    line = proc.stdout.strip().splitlines()[-1]
    fields = [float(x) for x in line.split(",")]
    assert fields[0] == 100.0
    assert fields[5] < 1e-9            # closed and quadrature routes agree
    assert (tmp_path / "s_integral.csv").exists()


def test_area_override_flag(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(quick_raman_config()))
    proc = subprocess.run(
        [sys.executable, "-m", "adelim", "--out", str(tmp_path / "out"),
         "raman-pulse", "--config", str(cfg_path), "--area", "pi/2"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    meta = json.loads((tmp_path / "out" / "run_meta.json").read_text())
    assert meta["total_area"] == pytest.approx(np.pi / 2, rel=1e-9)


def test_thread_count_does_not_change_outputs(tmp_path):
    cfg = quick_raman_config()
    run(cfg, tmp_path / "serial", threads=1)
    run(cfg, tmp_path / "pool", threads=2)
    for name in ("populations.csv", "density.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == \
            (tmp_path / "pool" / name).read_bytes(), name
