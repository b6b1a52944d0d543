"""Batch scenario runner.

Reads a JSON scenario, builds the system, runs the validity check,
propagates effective and/or full dynamics and writes machine-readable
results:

    validity.json    validity report
    populations.csv  time_s, area_progress, level, population
    density.csv      area_progress, doppler_over_rabi, level, density
    delta.csv        time_s, method, delta        (comparison runs)
    pulse.csv        time_s, area_progress, amplitude_rad_s
    run_meta.json    versions, tolerances, losses, flags, config echo

All config keys carry SI-unit suffixes (_s, _rad_s, _kg, _hz); *_hz values
are ordinary frequencies and are multiplied by 2*pi on load.  Outputs are
byte-identical across reruns with the same config and thread count, except
for the run_meta timestamp.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, models, propagator, pulses
from .elimination import (effective_hamiltonian, finite_effective_matrix_fn,
                          s_integral_closed, s_integral_quadrature,
                          SIntegralSpec, validity_report)
from .errors import AdelimError, ConfigError
from .hilbert import StateVector
from .models import (FIVE_LEVEL_OMEGA, SystemSpec, five_level_full_matrix,
                     five_level_system)
from .propagator import (IntegratorConfig, expm_trajectory, matrix_evolve,
                         observables, relative_error)

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# config handling


def _require(cfg: dict, key: str, ctx: str = ""):
    if key not in cfg:
        raise ConfigError(f"missing config field {ctx + key!r}", field=ctx + key)
    return cfg[key]


def _angular(cfg: dict, key_base: str, ctx: str, default=None) -> float:
    """Read a frequency given either as <base>_rad_s or <base>_hz."""
    if key_base + "_rad_s" in cfg:
        return float(cfg[key_base + "_rad_s"])
    if key_base + "_hz" in cfg:
        return 2.0 * math.pi * float(cfg[key_base + "_hz"])
    if default is not None:
        return default
    raise ConfigError(f"missing config field {ctx}{key_base}_rad_s (or _hz)",
                      field=ctx + key_base + "_rad_s")


def _parse_area(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower().replace(" ", "")
    table = {"pi": math.pi, "pi/2": math.pi / 2, "pi/4": math.pi / 4,
             "2pi": 2 * math.pi}
    if text in table:
        return table[text]
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse pulse area {value!r}",
                          field="system.pulse_area")


def _pulse_from_config(cfg: dict, ctx: str) -> pulses.PulseShape:
    kind = _require(cfg, "kind", ctx)
    if kind == "tabulated":
        return pulses.tabulated_from_csv(_require(cfg, "samples_csv", ctx))
    return pulses.PulseShape(
        kind,
        a0=float(_require(cfg, "a0_rad_s", ctx)),
        t0=float(cfg.get("t0_s", 0.0)),
        duration=float(_require(cfg, "duration_s", ctx)),
        a1=float(cfg.get("a1_rad_s", 0.0)),
        a2=float(cfg.get("a2_rad_s", 0.0)))


def build_system(cfg: dict) -> SystemSpec:
    ctx = "system."
    if "preset" in cfg:
        if cfg["preset"] != "rb87_d2":
            raise ConfigError(f"unknown preset {cfg['preset']!r}",
                              field="system.preset")
        return models.rubidium87_raman(
            float(_require(cfg, "duration_s", ctx)),
            _parse_area(cfg.get("pulse_area", math.pi)),
            detuning_rad_s=_angular(cfg, "detuning", ctx, 2 * math.pi * 1e8),
            pulse_kind=cfg.get("pulse_kind", "sine_squared"),
            commensuration_rtol=float(cfg.get("commensuration_rtol", 1e-9)),
            support_window=tuple(cfg.get("support_window", (-8, 8))))
    kind = _require(cfg, "kind", ctx)
    if kind == models.FIVE_LEVEL:
        return five_level_system(float(cfg.get("horizon_s", 4.0)))
    atom_cfg = _require(cfg, "atom", ctx)
    constants = models.AtomConstants(
        atom_cfg.get("label", "custom"),
        float(_require(atom_cfg, "mass_kg", ctx + "atom.")),
        {k: float(v) for k, v in _require(atom_cfg, "levels",
                                          ctx + "atom.").items()})
    lasers = []
    for i, lcfg in enumerate(_require(cfg, "lasers", ctx)):
        lctx = f"{ctx}lasers[{i}]."
        lasers.append(models.LaserSpec(
            float(_require(lcfg, "wavevector_rad_m", lctx)),
            _angular(lcfg, "frequency", lctx),
            _pulse_from_config(_require(lcfg, "envelope", lctx),
                               lctx + "envelope."),
            tuple(_require(lcfg, "transition", lctx))))
    kwargs = dict(commensuration_rtol=float(cfg.get("commensuration_rtol", 1e-9)),
                  support_window=tuple(cfg.get("support_window", (-8, 8))))
    builders = {
        models.RAMAN: lambda: models.raman_system(constants, *lasers, **kwargs),
        models.BRAGG: lambda: models.bragg_system(constants, *lasers, **kwargs),
        models.DOUBLE_RAMAN: lambda: models.double_raman_system(
            constants, lasers, **kwargs),
        models.DOUBLE_BRAGG: lambda: models.double_bragg_system(
            constants, lasers, **kwargs),
    }
    if kind not in builders:
        raise ConfigError(f"unknown system kind {kind!r}", field="system.kind")
    if kind in (models.RAMAN, models.BRAGG) and len(lasers) != 2:
        raise ConfigError(f"{kind} takes two lasers", field="system.lasers")
    if kind in (models.DOUBLE_RAMAN, models.DOUBLE_BRAGG) and len(lasers) != 4:
        raise ConfigError(f"{kind} takes four lasers", field="system.lasers")
    return builders[kind]()


# ---------------------------------------------------------------------------
# output writers


def _write_csv(path: Path, header: str, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# columns: {', '.join(columns)}\n")
        fh.write(f"# {header}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                (FLOAT_FMT % v) if isinstance(v, float) else str(v)
                for v in row) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _run_meta(out: Path, config: dict, extra: dict) -> None:
    import scipy
    meta = {
        "adelim_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "generated_at_unix_s": time.time(),
        "config": config,
    }
    meta.update(extra)
    _write_json(out / "run_meta.json", meta)


# ---------------------------------------------------------------------------
# scenario runners


def _run_five_level(config: dict, out: Path, threads: int) -> None:
    span = float(config.get("time_span_s", 4.0))
    n = int(config.get("samples", 161))
    gap_shift = float(config.get("gap_shift_rad_s", 0.0))
    ts = np.linspace(0.0, span, n)
    system = five_level_system(horizon=span)
    if gap_shift:
        system.xi_matrix = system.xi_matrix + gap_shift * np.eye(2)

    report = validity_report(system, 0.0, span)
    _write_json(out / "validity.json", report.as_dict())

    H5 = five_level_full_matrix()
    if gap_shift:
        H5[3:, 3:] += gap_shift * np.eye(2)
    psi0 = np.zeros(5, complex)
    psi0[0] = 1.0  # population starts in g
    full = expm_trajectory(H5, psi0, 0.0, ts, system.space.levels)

    relevant = system.space.relevant
    psi0_3 = np.zeros(3, complex)
    psi0_3[0] = 1.0
    from .elimination import (markov_hamiltonian, paulisch_hamiltonian,
                              sanz_hamiltonian)
    d, x, om = system.delta_matrix, system.xi_matrix, system.omega_static
    methods = {
        "markov": expm_trajectory(markov_hamiltonian(d, x, om), psi0_3, 0.0,
                                  ts, relevant),
        "paulisch": expm_trajectory(paulisch_hamiltonian(d, x, om), psi0_3,
                                    0.0, ts, relevant),
        "sanz": expm_trajectory(sanz_hamiltonian(d, x, om), psi0_3, 0.0, ts,
                                relevant),
        "ours": matrix_evolve(finite_effective_matrix_fn(system, 1), psi0_3,
                              0.0, span, IntegratorConfig(rtol=1e-10,
                                                          atol=1e-12),
                              sample_times=ts, levels=relevant),
    }

    rows = []
    pops = full.level_populations
    for i, t in enumerate(ts):
        for j, level in enumerate(relevant):
            rows.append((float(t), 0.0, level, float(pops[i, j])))
    _write_csv(out / "populations.csv",
               "reference (full numeric) populations of the retained levels",
               ["time_s", "area_progress", "level", "population"], rows)

    rows = []
    for name, traj in methods.items():
        delta = relative_error(full, traj, relevant)
        for t, dv in zip(ts, delta):
            rows.append((float(t), name, float(dv)))
    _write_csv(out / "delta.csv",
               "amplitude distance to the full numeric solution per method",
               ["time_s", "method", "delta"], rows)

    _run_meta(out, config, {
        "scenario": "five_level_compare",
        "gamma_star_rad_s": report.gamma_star,
        "final_delta": {name: float(relative_error(full, traj, relevant)[-1])
                        for name, traj in methods.items()},
    })


def _initial_families(system: SystemSpec, init_cfg: dict,
                      rabi_scale: float) -> np.ndarray:
    n = int(init_cfg.get("momentum_samples", 64))
    width = float(init_cfg.get("doppler_window_rabi_units", 4.0))
    rate = system.doppler_rate()
    if rate == 0.0 or n == 1:
        return np.zeros(max(n, 1))
    p_max = width * rabi_scale / rate
    return np.linspace(-p_max, p_max, n)


def _run_pulse(config: dict, out: Path, threads: int) -> None:
    system = build_system(_require(config, "system"))
    elim_cfg = config.get("elimination", {})
    integ_cfg = config.get("integrator", {})
    init_cfg = config.get("initial_state", {"level": system.space.relevant[-1]})
    out_cfg = config.get("output", {})

    eff = effective_hamiltonian(
        system,
        order=int(elim_cfg.get("order", 1)),
        s_mode=elim_cfg.get("s_mode", "closed"),
        rwa=bool(elim_cfg.get("rwa", False)))
    _write_json(out / "validity.json", eff.validity.as_dict())

    t0, t1 = system.coupling_window()
    n_samples = int(out_cfg.get("samples", 81))
    ts = np.linspace(t0, t1, n_samples)
    cfg = IntegratorConfig(rtol=float(integ_cfg.get("rtol", 1e-9)),
                           atol=float(integ_cfg.get("atol", 1e-12)))

    env1 = system.lasers[0].envelope
    env2 = system.lasers[1].envelope if len(system.lasers) > 1 else env1
    gamma0 = system.metadata.get("pulse_area_reference_detuning_rad_s")
    if gamma0 is None:
        gamma0 = float(np.mean([abs(d.gamma_fn(0.0)) for d in system.eff_diag]))
    total_area = pulses.pulse_area(env1, env2, gamma0, t1)
    rabi_scale = total_area / (t1 - t0)      # mean two-photon Rabi frequency

    base = _initial_families(system, init_cfg, rabi_scale)
    window = tuple(out_cfg.get("window", (-4, 4)))
    ladder = system.default_ladder(base, window=window)
    level0 = init_cfg.get("level", system.space.relevant[-1])
    if level0 not in eff.block.space.levels:
        raise ConfigError(f"initial level {level0!r} not a retained level",
                          field="initial_state.level")
    # box wave function: every momentum class starts in level0 with unit
    # family norm (families propagate independently)
    psi0 = StateVector.zero(eff.block.space, ladder)
    psi0.amplitudes[eff.block.space.index(level0), :, -ladder.window[0]] = 1.0

    traj = propagator.evolve(eff.block, psi0, t0, t1, cfg, sample_times=ts,
                             area_pair=(env1, env2, gamma0), threads=threads)
    obs = observables(traj, doppler_rate=system.doppler_rate(),
                      rabi_frequency=rabi_scale)

    area = traj.pulse_area_progress
    rows = []
    for i, t in enumerate(ts):
        for j, level in enumerate(traj.levels):
            rows.append((float(t), float(area[i]), level,
                         float(obs.level_populations[i, j]
                               / max(1, ladder.n_families))))
    _write_csv(out / "populations.csv",
               "family-averaged populations of the retained levels",
               ["time_s", "area_progress", "level", "population"], rows)

    rows = []
    dens = obs.densities
    nu = obs.doppler if obs.doppler is not None \
        else ladder.momentum_grid()
    occupied = dens.max(axis=0) > 1e-14        # (L, F, S) bins ever populated
    for i in range(len(ts)):
        for j, level in enumerate(traj.levels):
            for f in range(ladder.n_families):
                for s in range(ladder.n_sites):
                    if not occupied[j, f, s]:
                        continue
                    rows.append((float(area[i]), float(nu[f, s]), level,
                                 float(dens[i, j, f, s])))
    _write_csv(out / "density.csv",
               "per-(momentum bin) densities vs covered pulse area; "
               "doppler axis in units of the mean two-photon Rabi frequency",
               ["area_progress", "doppler_over_rabi", "level", "density"],
               rows)

    rows = [(float(t), float(a), float(pulses.evaluate(env1, t)))
            for t, a in zip(ts, area)]
    _write_csv(out / "pulse.csv", "drive envelope",
               ["time_s", "area_progress", "amplitude_rad_s"], rows)

    extra = {
        "scenario": config.get("scenario", system.kind + "_pulse"),
        "effective_metadata": eff.metadata,
        "commensuration_residual": system.commensuration_residual,
        "truncation_estimate": traj.truncation_estimate,
        "mean_rabi_rad_s": rabi_scale,
        "total_area": total_area,
        "threads": threads,
    }

    if config.get("compare_full", False):
        fam = int(np.argmin(np.abs(base))) if len(base) else 0
        sub_ladder = system.default_ladder([base[fam]] if len(base) else [0.0],
                                           window=window)
        full_block = models.full_hamiltonian(system)
        psiF = StateVector.zero(full_block.space, sub_ladder)
        psiF.amplitudes[full_block.space.index(level0), 0,
                        -sub_ladder.window[0]] = 1.0
        trF = propagator.evolve(full_block, psiF, t0, t1, cfg, sample_times=ts)
        psiE = StateVector.zero(eff.block.space, sub_ladder)
        psiE.amplitudes[eff.block.space.index(level0), 0,
                        -sub_ladder.window[0]] = 1.0
        trE = propagator.evolve(eff.block, psiE, t0, t1, cfg, sample_times=ts)
        pops_f = trF.level_populations
        pops_e = trE.level_populations
        rows = []
        for i, t in enumerate(ts):
            err = 0.0
            for level in eff.block.space.levels:
                jf = list(trF.levels).index(level)
                je = list(trE.levels).index(level)
                err = max(err, abs(float(pops_f[i, jf] - pops_e[i, je])))
            rows.append((float(t), "ours", err))
        _write_csv(out / "delta.csv",
                   "max-abs population deviation, effective vs full, "
                   "resonant momentum family",
                   ["time_s", "method", "delta"], rows)
        extra["max_population_error"] = max(r[2] for r in rows)

    _run_meta(out, config, extra)


def _run_validity(config: dict, out: Path) -> None:
    sys_cfg = config.get("system", {"kind": "five_level"})
    system = build_system(sys_cfg)
    t0, t1 = system.coupling_window()
    report = validity_report(system, t0, t1)
    _write_json(out / "validity.json", report.as_dict())
    _run_meta(out, config, {"scenario": "validity",
                            "verdict": report.verdict})
    print(f"gamma_star = {report.gamma_star:g} rad/s, coupling_ratio = "
          f"{report.coupling_ratio:g}, smoothness = {report.smoothness:g} "
          f"-> {report.verdict}")


def _run_s_integral(args, out: Path | None) -> None:
    shape = pulses.PulseShape(args.pulse_kind, a0=args.a0,
                              t0=0.0, duration=args.duration,
                              a1=args.a1, a2=args.a2)
    t = args.time if args.time is not None else 0.61 * args.duration
    gammas = np.linspace(args.gamma_min, args.gamma_max, args.gamma_steps)
    rows = []
    print("# gamma_rad_s, closed_re, closed_im, quadrature_re, quadrature_im,"
          " abs_difference")
    for g in gammas:
        spec = SIntegralSpec(shape, shape, lambda p, _g=g: _g + 0.0 * np.asarray(p))
        c = s_integral_closed(spec, 0.0, t, rwa=args.rwa)
        q = s_integral_quadrature(spec, 0.0, t, tol=args.tol)
        rows.append((float(g), c.real, c.imag, q.real, q.imag, abs(c - q)))
        print(f"{g:.6g}, {c.real:.12g}, {c.imag:.12g}, {q.real:.12g}, "
              f"{q.imag:.12g}, {abs(c - q):.3e}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "s_integral.csv",
                   f"pulse={args.pulse_kind} a0={args.a0} T={args.duration} "
                   f"t={t} rwa={args.rwa}",
                   ["gamma_rad_s", "closed_re", "closed_im", "quadrature_re",
                    "quadrature_im", "abs_difference"], rows)


# ---------------------------------------------------------------------------
# entry points


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="--config")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="--config")


def bundled_config(name: str) -> dict:
    ref = resources.files("adelim").joinpath("configs", f"{name}.json")
    return json.loads(ref.read_text())


def run(config: dict, out_dir, threads: int = 1) -> int:
    """Execute one scenario config; returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = _require(config, "scenario")
    if scenario == "five_level_compare":
        _run_five_level(config, out, threads)
    elif scenario in ("raman_pulse", "bragg_pulse", "double_raman_pulse",
                      "double_bragg_pulse"):
        _run_pulse(config, out, threads)
    elif scenario == "validity":
        _run_validity(config, out)
    else:
        raise ConfigError(f"unknown scenario {scenario!r}", field="scenario")
    return 0


def _error_json(exc: Exception) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.field:
        payload["field"] = exc.field
    return json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adelim",
        description="adiabatic-elimination scenario runner")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes across momentum families")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed recorded for randomized sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("--config", required=True)

    for name, cfg_name in [("five-level-compare", "five_level_compare"),
                           ("raman-pulse", "raman_pi"),
                           ("bragg-pulse", "bragg_pulse"),
                           ("double-raman-pulse", "double_raman_pulse"),
                           ("double-bragg-pulse", "double_bragg_pulse")]:
        p = sub.add_parser(name, help=f"run the bundled {cfg_name} scenario")
        p.set_defaults(bundled=cfg_name)
        p.add_argument("--config", default=None,
                       help="override the bundled config")
        if name == "raman-pulse":
            p.add_argument("--area", default=None,
                           help="pulse area, e.g. pi or pi/2")

    p_val = sub.add_parser("validity", help="validity report only")
    p_val.add_argument("--config", default=None)

    p_s = sub.add_parser("s-integral",
                         help="closed vs quadrature S-integral table")
    p_s.add_argument("--pulse-kind", default="box")
    p_s.add_argument("--a0", type=float, default=1.0)
    p_s.add_argument("--a1", type=float, default=0.0)
    p_s.add_argument("--a2", type=float, default=0.0)
    p_s.add_argument("--duration", type=float, default=1.0)
    p_s.add_argument("--gamma-min", type=float, default=100.0)
    p_s.add_argument("--gamma-max", type=float, default=100.0)
    p_s.add_argument("--gamma-steps", type=int, default=1)
    p_s.add_argument("--time", type=float, default=None)
    p_s.add_argument("--tol", type=float, default=1e-10)
    p_s.add_argument("--rwa", action="store_true")
    p_s.add_argument("--write-csv", action="store_true")

    args = parser.parse_args(argv)
    try:
        if args.command == "s-integral":
            _run_s_integral(args, Path(args.out) if args.write_csv else None)
            return 0
        if args.command == "validity":
            config = load_config(args.config) if args.config else \
                {"scenario": "validity", "system": {"kind": "five_level"}}
            config["scenario"] = "validity"
            return run(config, args.out, args.threads)
        if args.command == "run":
            config = load_config(args.config)
        else:
            config = load_config(args.config) if args.config else \
                bundled_config(args.bundled)
            if getattr(args, "area", None):
                config.setdefault("system", {})["pulse_area"] = args.area
        if args.seed is not None:
            config["seed"] = args.seed
        return run(config, args.out, args.threads)
    except ConfigError as exc:
        print(_error_json(exc), file=sys.stderr)
        return 2
    except AdelimError as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
