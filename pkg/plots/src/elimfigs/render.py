"""Render publication-style figures from simulation CSV outputs.

Two figure kinds are supported:

* ``five_level_compare`` -- three population panels (reference numerics of
  the retained levels) plus an error panel with one curve per elimination
  method, from populations.csv and delta.csv.
* ``raman_density`` -- pulse-shape panel, one momentum-density panel per
  level (Doppler frequency vs covered pulse area, resonant class marked
  with a white dashed line) and the resonant-class population traces, from
  pulse.csv, density.csv and populations.csv.

Inputs are the CSV schemas written by the simulation CLI; rendering never
modifies them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("five_level_compare", "raman_density")


class SchemaError(Exception):
    """Input CSV missing, empty, or lacking a required column."""


@dataclass
class FigureSpec:
    kind: str
    inputs: dict
    output: str
    title: str = ""
    axis_labels: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "FigureSpec":
        if data.get("kind") not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {data.get('kind')!r}")
        return cls(kind=data["kind"], inputs=dict(data.get("inputs", {})),
                   output=data.get("output", "figure.png"),
                   title=data.get("title", ""),
                   axis_labels=dict(data.get("axis_labels", {})))


def read_table(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Read a headered CSV (comment lines start with '#') into columns."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file missing: {path}")
    with open(path) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    if not rows:
        raise SchemaError(f"{path} holds no data rows")
    for col in required:
        if col not in rows[0]:
            raise SchemaError(f"{path} lacks required column {col!r}")
    out: dict[str, np.ndarray] = {}
    for col in rows[0]:
        vals = [r[col] for r in rows]
        try:
            out[col] = np.array([float(v) for v in vals])
        except ValueError:
            out[col] = np.array(vals)
    return out


def _resolve(spec: FigureSpec, key: str, base_dir) -> Path:
    if key not in spec.inputs:
        raise SchemaError(f"figure spec lacks input {key!r}")
    return Path(base_dir) / spec.inputs[key]


def _render_five_level(spec: FigureSpec, base_dir) -> plt.Figure:
    pops = read_table(_resolve(spec, "populations_csv", base_dir),
                      ("time_s", "level", "population"))
    delta = read_table(_resolve(spec, "delta_csv", base_dir),
                       ("time_s", "method", "delta"))
    levels = sorted(set(pops["level"]))
    fig, axes = plt.subplots(len(levels) + 1, 1, figsize=(6, 9), sharex=True)
    for ax, level in zip(axes, levels):
        sel = pops["level"] == level
        ax.plot(pops["time_s"][sel], pops["population"][sel], "k-")
        ax.set_ylabel(f"population {level}")
        ax.set_ylim(-0.05, 1.05)
    ax = axes[-1]
    for method in sorted(set(delta["method"])):
        sel = delta["method"] == method
        ax.plot(delta["time_s"][sel], delta["delta"][sel], label=method)
    ax.set_yscale("log")
    ax.set_ylabel("amplitude error")
    ax.set_xlabel(spec.axis_labels.get("x", "time (s)"))
    ax.legend(fontsize=8)
    return fig


def _pivot_density(table, level: str):
    sel = table["level"] == level
    areas = np.unique(table["area_progress"][sel])
    nus = np.unique(table["doppler_over_rabi"][sel])
    grid = np.full((len(nus), len(areas)), np.nan)
    ai = np.searchsorted(areas, table["area_progress"][sel])
    ni = np.searchsorted(nus, table["doppler_over_rabi"][sel])
    grid[ni, ai] = table["density"][sel]
    return areas, nus, grid


def _render_raman_density(spec: FigureSpec, base_dir) -> plt.Figure:
    pulse = read_table(_resolve(spec, "pulse_csv", base_dir),
                       ("time_s", "area_progress", "amplitude_rad_s"))
    dens = read_table(_resolve(spec, "density_csv", base_dir),
                      ("area_progress", "doppler_over_rabi", "level",
                       "density"))
    levels = sorted(set(dens["level"]))
    fig, axes = plt.subplots(len(levels) + 2, 1,
                             figsize=(6, 3 * (len(levels) + 2) * 0.8))
    axes[0].plot(pulse["area_progress"], pulse["amplitude_rad_s"], "C0-")
    axes[0].set_ylabel("drive (rad/s)")
    axes[0].set_xlabel("covered pulse area")

    resonant = {}
    for ax, level in zip(axes[1:], levels):
        areas, nus, grid = _pivot_density(dens, level)
        mesh = ax.pcolormesh(areas, nus, grid, shading="nearest",
                             vmin=0.0, vmax=1.0, cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=f"density {level}")
        i_res = int(np.argmin(np.abs(nus)))
        ax.axhline(nus[i_res], color="w", linestyle="--", linewidth=1.0)
        ax.set_ylabel(spec.axis_labels.get("y", "doppler / rabi"))
        resonant[level] = (areas, grid[i_res])
    ax = axes[-1]
    for level, (areas, line) in resonant.items():
        ax.plot(areas, line, label=level)
    ax.set_xlabel(spec.axis_labels.get("x", "covered pulse area"))
    ax.set_ylabel("resonant-class population")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    return fig


def render(spec: FigureSpec, base_dir=".", dpi: int = 150) -> Path:
    """Render the figure spec and write the image; returns the output path."""
    if spec.kind == "five_level_compare":
        fig = _render_five_level(spec, base_dir)
    else:
        fig = _render_raman_density(spec, base_dir)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    out = Path(base_dir) / spec.output
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=dpi)
    plt.close(fig)
    return out
