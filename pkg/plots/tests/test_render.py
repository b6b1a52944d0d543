import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from elimfigs import FigureSpec, SchemaError, render
from elimfigs.cli import bundled_spec, main


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_cli(args, cwd):
    proc = subprocess.run([sys.executable, "-m", "adelim", *args],
                          cwd=cwd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="module")
def cli_outputs(tmp_path_factory):
    """Fresh simulation outputs in a working directory shaped like the
    bundled figure specs expect (CSV files under out/)."""
    base = tmp_path_factory.mktemp("runs")
    five = base / "five_level"
    five.mkdir()
    cfg = {"scenario": "five_level_compare", "time_span_s": 4.0, "samples": 81}
    (five / "cfg.json").write_text(json.dumps(cfg))
    _run_cli(["--out", "out", "run", "--config", "cfg.json"], five)

    raman = base / "raman"
    raman.mkdir()
    cfg = {
        "scenario": "raman_pulse",
        "system": {"preset": "rb87_d2", "duration_s": 1.0e-3,
                   "pulse_area": "pi",
                   "detuning_rad_s": 6.283185307179586e8},
        "initial_state": {"level": "g", "momentum_samples": 17,
                          "doppler_window_rabi_units": 4.0},
        "output": {"samples": 33, "window": [-2, 2]},
    }
    (raman / "cfg.json").write_text(json.dumps(cfg))
    _run_cli(["--out", "out", "run", "--config", "cfg.json"], raman)
    return {"five_level": five, "raman": raman}


def test_bundled_five_level_figure_renders(cli_outputs):
    base = cli_outputs["five_level"]
    spec = FigureSpec.from_dict(bundled_spec("five_level_compare"))
    inputs = [base / p for p in spec.inputs.values()]
    before = {p: _sha(p) for p in inputs}
    out = render(spec, base_dir=base)
    assert out.exists()
    assert out.stat().st_size > 0
    # rendering is read-only
    assert {p: _sha(p) for p in inputs} == before


def test_bundled_raman_density_figure_renders(cli_outputs):
    base = cli_outputs["raman"]
    spec = FigureSpec.from_dict(bundled_spec("raman_density"))
    inputs = [base / p for p in spec.inputs.values()]
    before = {p: _sha(p) for p in inputs}
    out = render(spec, base_dir=base)
    assert out.exists()
    assert out.stat().st_size > 0
    assert {p: _sha(p) for p in inputs} == before


def test_cli_render_from_spec_file(cli_outputs, tmp_path):
    base = cli_outputs["five_level"]
    spec = bundled_spec("five_level_compare")
    spec_path = tmp_path / "figure.json"
    spec_path.write_text(json.dumps(spec))
    rc = main(["render", "--spec", str(spec_path),
               "--base-dir", str(base), "--out", "fig.png"])
    assert rc == 0
    assert (base / "fig.png").stat().st_size > 0


def test_empty_csv_raises_schema_error(tmp_path):
    (tmp_path / "populations.csv").write_text(
        "# columns: time_s, area_progress, level, population\n"
        "time_s,area_progress,level,population\n")
    (tmp_path / "delta.csv").write_text(
        "# columns: time_s, method, delta\ntime_s,method,delta\n")
    spec = FigureSpec.from_dict({
        "kind": "five_level_compare",
        "inputs": {"populations_csv": "populations.csv",
                   "delta_csv": "delta.csv"},
        "output": "fig.png"})
    with pytest.raises(SchemaError):
        render(spec, base_dir=tmp_path)


def test_missing_column_names_the_column(tmp_path):
    (tmp_path / "populations.csv").write_text(
        "time_s,level,population\n0.0,g,1.0\n")
    (tmp_path / "delta.csv").write_text(
        "time_s,method\n0.0,ours\n")
    spec = FigureSpec.from_dict({
        "kind": "five_level_compare",
        "inputs": {"populations_csv": "populations.csv",
                   "delta_csv": "delta.csv"},
        "output": "fig.png"})
    with pytest.raises(SchemaError) as err:
        render(spec, base_dir=tmp_path)
    assert "delta" in str(err.value)


def test_unknown_kind_rejected():
    with pytest.raises(SchemaError):
        FigureSpec.from_dict({"kind": "pie_chart", "inputs": {},
                              "output": "x.png"})
