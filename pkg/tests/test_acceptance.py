"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime.  Tolerances are fixed here, not computed."""

import time

import numpy as np
import pytest

from adelim import models, propagator, pulses
from adelim.elimination import (SIntegralSpec, commuting_limit_hamiltonian,
                                effective_hamiltonian,
                                finite_effective_matrix_fn,
                                markov_hamiltonian, paulisch_hamiltonian,
                                projector_first_order, projector_order,
                                projector_series, s_integral_closed,
                                s_integral_quadrature, sanz_hamiltonian,
                                sylvester_ode, validity_report)
from adelim.hilbert import HBAR, MomentumLadder, StateVector, \
    conjugate_shift_check
from adelim.models import (FIVE_LEVEL_DELTA, FIVE_LEVEL_OMEGA, FIVE_LEVEL_XI,
                           five_level_full_matrix, five_level_system,
                           rubidium87_preset, rubidium87_raman)
from adelim.propagator import (IntegratorConfig, evolve, expm_trajectory,
                               matrix_evolve, relative_error)

TABLE_D = np.diag(FIVE_LEVEL_DELTA).astype(complex)
TABLE_X = np.diag(FIVE_LEVEL_XI).astype(complex)
TABLE_OM = np.array(FIVE_LEVEL_OMEGA, dtype=complex)


class Criterion:
    def __init__(self, name, budget_s):
        self.name = name
        self.budget = budget_s
        self.start = time.perf_counter()

    def done(self, detail=""):
        elapsed = time.perf_counter() - self.start
        print(f"[acceptance] {self.name}: PASS in {elapsed:.1f}s"
              + (f" ({detail})" if detail else ""))
        assert elapsed < self.budget, \
            f"{self.name} exceeded its {self.budget}s runtime budget"


def test_s_integral_oracle_equivalence():
    crit = Criterion("S-integral closed vs quadrature (randomized sweep)", 10.0)
    rng = np.random.default_rng(2024)
    kinds = ["box", "sine_squared", "blackman"]
    worst = 0.0
    n_cases = 210
    for i in range(n_cases):
        kind = kinds[i % 3]
        a0 = rng.uniform(0.1, 10.0)
        T = rng.uniform(0.1, 10.0)
        wT = 2 * np.pi / T
        poles = [0.0, wT, 2 * wT]
        while True:
            gamma = rng.uniform(5.0, 500.0)
            if min(abs(gamma - p) for p in poles) > 0.5:
                break
        t = rng.uniform(0.05 * T, T)
        if kind == "blackman":
            shape = pulses.blackman(a0, rng.uniform(0, a0), rng.uniform(0, a0),
                                    t0=0.0, duration=T)
        else:
            shape = pulses.PulseShape(kind, a0=a0, t0=0.0, duration=T)
        spec = SIntegralSpec(shape, shape, lambda p, _g=gamma: _g + 0.0 * np.asarray(p))
        closed = s_integral_closed(spec, 0.0, t)
        quad = s_integral_quadrature(spec, 0.0, t, tol=1e-12 * (1 + abs(closed)))
        rel = abs(closed - quad) / (1.0 + abs(closed))
        worst = max(worst, rel)
        assert rel <= 1e-9, (kind, a0, T, gamma, t, rel)
    crit.done(f"{n_cases} cases, worst deviation {worst:.2e}")


def test_projector_algebra():
    crit = Criterion("projector orders: P0 = P2 = 0, P1 vs dense stepping",
                     30.0)
    times = np.linspace(0.5, 10.0, 20)
    fns = projector_series(TABLE_D, TABLE_X, TABLE_OM, 0.0, 2)
    worst_p1 = 0.0
    dense = sylvester_ode(TABLE_D, TABLE_X, TABLE_OM, 0.0, times,
                          rtol=1e-12, atol=1e-14)
    for i, t in enumerate(times):
        p0 = projector_order(0, [], TABLE_D, TABLE_X, TABLE_OM, 0.0, t)
        assert np.linalg.norm(p0) == 0.0
        p2 = projector_order(2, fns[:2], TABLE_D, TABLE_X, TABLE_OM, 0.0, t)
        assert np.linalg.norm(p2) < 1e-12
        p1 = projector_first_order(TABLE_D, TABLE_X, TABLE_OM, 0.0, t)
        worst_p1 = max(worst_p1, float(np.abs(p1 - dense[i]).max()))
    assert worst_p1 <= 1e-8
    crit.done(f"20 times, worst |P1 - dense| = {worst_p1:.2e}")


def _five_level_deltas(gap_shift, span, n):
    ts = np.linspace(0.0, span, n)
    system = five_level_system(horizon=span)
    system.xi_matrix = system.xi_matrix + gap_shift * np.eye(2)
    H5 = five_level_full_matrix()
    H5[3:, 3:] += gap_shift * np.eye(2)
    psi0 = np.zeros(5, complex)
    psi0[0] = 1.0
    full = expm_trajectory(H5, psi0, 0.0, ts, ("g", "m", "e", "a1", "a2"))
    psi3 = np.zeros(3, complex)
    psi3[0] = 1.0
    relevant = ("g", "m", "e")
    d, x, om = system.delta_matrix, system.xi_matrix, system.omega_static
    trajs = {
        "markov": expm_trajectory(markov_hamiltonian(d, x, om), psi3, 0.0,
                                  ts, relevant),
        "paulisch": expm_trajectory(paulisch_hamiltonian(d, x, om), psi3,
                                    0.0, ts, relevant),
        "sanz": expm_trajectory(sanz_hamiltonian(d, x, om), psi3, 0.0, ts,
                                relevant),
        "ours": matrix_evolve(finite_effective_matrix_fn(system, 1), psi3,
                              0.0, span, IntegratorConfig(rtol=1e-10),
                              sample_times=ts, levels=relevant),
    }
    return {name: relative_error(full, traj, relevant)
            for name, traj in trajs.items()}


def test_five_level_method_comparison():
    crit = Criterion("five-level comparison of elimination methods", 60.0)
    # window: nine cycles of the retained <-> eliminated exchange
    # (2*pi/gamma_star = 0.449 s); all four methods stay accurate there
    span = 4.0
    deltas = _five_level_deltas(0.0, span, 161)
    for name, d in deltas.items():
        assert d.max() < 0.15, (name, d.max())
    ours_final = deltas["ours"][-1]
    assert ours_final <= 1.5 * deltas["paulisch"][-1]
    assert ours_final <= 1.5 * deltas["sanz"][-1]
    # doubling the manifold gap (structure-preserving shift) must shrink the
    # final error by the quadratic factor
    doubled = _five_level_deltas(14.0, span, 161)
    ratio = ours_final / doubled["ours"][-1]
    assert ratio >= 3.0, ratio
    crit.done(f"final deltas: ours {ours_final:.4f}, "
              f"paulisch {deltas['paulisch'][-1]:.4f}, "
              f"sanz {deltas['sanz'][-1]:.4f}; gap-doubling ratio {ratio:.1f}")


def test_commuting_limit_convergence():
    crit = Criterion("commuting-limit convergence to the unitarity-corrected "
                     "generator", 10.0)
    rng = np.random.default_rng(7)
    xi = np.diag([10.0, 13.0])
    om = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    norms = {}
    for eps in (0.1, 0.05, 0.025):
        delta = eps * np.linalg.norm(xi, 2) * np.eye(2)
        norms[eps] = np.linalg.norm(
            commuting_limit_hamiltonian(delta, xi, om)
            - sanz_hamiltonian(delta, xi, om), 2)
    r1 = norms[0.1] / norms[0.05]
    r2 = norms[0.05] / norms[0.025]
    # quadratic shrink (factor 4) within a factor of two
    assert 2.0 <= r1 <= 8.0, r1
    assert 2.0 <= r2 <= 8.0, r2
    crit.done(f"shrink ratios {r1:.2f}, {r2:.2f}")


def _raman_family_transfer(area, n_samples=64, width=4.0):
    spec = rubidium87_raman(1.0e-3, area)
    eff = effective_hamiltonian(spec, 1, "closed")
    t0, t1 = spec.coupling_window()
    env = spec.lasers[0].envelope
    gamma0 = spec.metadata["pulse_area_reference_detuning_rad_s"]
    rabi = pulses.pulse_area(env, env, gamma0, t1) / (t1 - t0)
    rate = spec.doppler_rate()
    base = np.linspace(-width, width, n_samples) * rabi / rate
    ladder = spec.default_ladder(base, window=(-2, 2))
    psi0 = StateVector.zero(eff.block.space, ladder)
    psi0.amplitudes[eff.block.space.index("g"), :, -ladder.window[0]] = 1.0
    traj = evolve(eff.block, psi0, t0, t1, sample_times=np.linspace(t0, t1, 9))
    pops = traj.populations[-1]                        # (levels, families)
    transfer = pops[eff.block.space.index("e")]
    doppler_units = rate * base / rabi
    return doppler_units, transfer


def test_raman_pulse_protocol():
    crit = Criterion("Raman pi and pi/2 pulses with velocity selectivity",
                     120.0)
    nu, transfer_pi = _raman_family_transfer(np.pi)
    resonant = int(np.argmin(np.abs(nu)))
    assert transfer_pi[resonant] >= 0.98, transfer_pi[resonant]
    # transfer at four Rabi widths of Doppler detuning is strongly suppressed
    edge = int(np.argmin(np.abs(nu - 4.0)))
    assert abs(nu[edge] - 4.0) < 1e-9
    assert transfer_pi[edge] <= 0.2, transfer_pi[edge]
    nu2, transfer_half = _raman_family_transfer(np.pi / 2)
    res2 = int(np.argmin(np.abs(nu2)))
    assert 0.45 <= transfer_half[res2] <= 0.55, transfer_half[res2]
    crit.done(f"pi transfer {transfer_pi[resonant]:.4f}, "
              f"pi/2 transfer {transfer_half[res2]:.4f}, "
              f"4-Rabi-width transfer {transfer_pi[edge]:.4f}")


def test_recoil_scalar_encoded_in_laser_values():
    crit = Criterion("recoil frequency recovered from the quoted laser "
                     "values", 5.0)
    data = rubidium87_preset()
    # the quoted pair detuning is the hyperfine splitting plus the recoil
    # shift of the two-photon resonance
    recovered = data["derived"]["resonance_recoil_rad_s"]
    assert abs(recovered - 1.0e4) <= 0.005 * 1.0e4, recovered
    crit.done(f"recovered {recovered:.6g} rad/s vs 1.0e4")


def test_shift_identity():
    crit = Criterion("kinetic-phase / plane-wave exchange identity", 10.0)
    rng = np.random.default_rng(11)
    lad = MomentumLadder((0.0,), k_ref=1.654e6, window=(-8, 8))
    mass = 1.44316060e-25
    worst = 0.0
    for _ in range(100):
        T = rng.uniform(0.0, 5e-3)
        k = int(rng.integers(-8, 9))
        p = rng.uniform(-8.0, 8.0)
        w1, w2 = rng.uniform(0.0, 1e4, 2)
        lhs, rhs = conjugate_shift_check(T, k, p, lad, mass,
                                         omega1=w1, omega2=w2)
        worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-12, worst
    crit.done(f"100 draws, worst phase mismatch {worst:.2e}")


def test_validity_gate():
    crit = Criterion("validity gate on the five-level benchmark", 5.0)
    system = five_level_system(horizon=4.0)
    report = validity_report(system, 0.0, 4.0)
    assert report.gamma_star == 14.0
    scaled = five_level_system(horizon=4.0)
    scaled.omega_static = scaled.omega_static * 20.0
    report20 = validity_report(scaled, 0.0, 4.0)
    assert report20.verdict in ("warn", "fail")
    assert report20.verdict == "fail"      # coupling exceeds the gap
    assert report20.verdict != report.verdict
    crit.done(f"gamma_star exactly 14; x20 coupling -> {report20.verdict}")


def test_effective_vs_full_raman():
    crit = Criterion("effective vs full dynamics, resonant momentum class",
                     60.0)
    spec = rubidium87_raman(2.0e-5, np.pi, detuning_rad_s=2.0e7,
                            commensuration_rtol=1e-3)
    eff = effective_hamiltonian(spec, 1, "closed")
    budget = 3.0 * eff.validity.coupling_ratio
    full = models.full_hamiltonian(spec)
    lad = spec.default_ladder([0.0], window=(-6, 6))
    ts = np.linspace(0.0, 2.0e-5, 81)
    psiE = StateVector.basis_state(eff.block.space, lad, "g", 0, 0)
    trE = evolve(eff.block, psiE, 0.0, 2.0e-5, sample_times=ts)
    psiF = StateVector.basis_state(full.space, lad, "g", 0, 0)
    trF = evolve(full, psiF, 0.0, 2.0e-5, sample_times=ts)
    worst = 0.0
    for level in eff.block.space.levels:
        pe = trE.level_populations[:, list(trE.levels).index(level)]
        pf = trF.level_populations[:, list(trF.levels).index(level)]
        worst = max(worst, float(np.abs(pe - pf).max()))
    assert worst <= budget, (worst, budget)
    crit.done(f"max population error {worst:.4f} (budget {budget:.3f})")
