"""Builders for the concrete driven-atom systems.

Each builder produces a SystemSpec holding (a) the interaction-picture
decomposition into retained-level diagonal, eliminated-level diagonal and
coupling blocks, used to assemble the full Hamiltonian for oracle
propagation, and (b) the first-order effective structure: which pulse
memory integrals appear on which (level, level, ladder shift) slots and
with which momentum-dependent detunings.

Counter-propagation is encoded purely by signed wavevectors; retro-reflected
geometries are ordinary laser lists whose members carry opposite signs.
A uniform energy offset (recorded as ``gauge_offset``) is subtracted from
every diagonal; it contributes only a global phase.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np

from .elimination import effective_hamiltonian  # re-exported convenience
from .errors import GridError
from .hilbert import (HBAR, BlockOperator, InternalSpace, LadderTerm,
                      MomentumLadder, find_commensuration)
from .pulses import PulseShape, evaluate, value_at

SPEED_OF_LIGHT = 299792458.0  # m/s

FIVE_LEVEL = "five_level"
RAMAN = "raman"
DOUBLE_RAMAN = "double_raman"
BRAGG = "bragg"
DOUBLE_BRAGG = "double_bragg"


@dataclass(frozen=True)
class AtomConstants:
    """Mass and internal level frequencies (rad/s)."""

    label: str
    mass_kg: float
    level_frequencies: Mapping[str, float]

    def __post_init__(self):
        if self.mass_kg <= 0:
            raise ValueError("mass must be positive")

    def frequency(self, level: str) -> float:
        return self.level_frequencies[level]


@dataclass(frozen=True)
class LaserSpec:
    """One classical plane-wave drive: signed wavevector (rad/m), angular
    frequency (rad/s), temporal envelope and the (level, ancilla) transition
    it couples."""

    wavevector_rad_m: float
    frequency_rad_s: float
    envelope: PulseShape
    transition: tuple[str, str]


@dataclass(frozen=True)
class Coupling:
    """Full-Hamiltonian coupling term: envelope(t)*exp(-i*phase_freq*t) on
    the (ancilla <- level) slot with the given ladder shift."""

    ancilla: str
    level: str
    steps: int
    envelope: PulseShape
    phase_freq: float = 0.0


@dataclass(frozen=True)
class STerm:
    """One pulse-memory-integral slot of the effective generator."""

    row: str
    col: str
    steps: int
    gamma_fn: Callable[[np.ndarray], np.ndarray]
    shape_n: PulseShape
    shape_j: PulseShape
    phase_freq: float = 0.0


def _linear_gamma(const: float, slope: float) -> Callable[[np.ndarray], np.ndarray]:
    def gamma(p, _c=const, _s=slope):
        return _c + _s * np.asarray(p, dtype=float)
    return gamma


@dataclass
class SystemSpec:
    """A concrete system: constants, lasers, level partition and the derived
    block decomposition plus effective structure."""

    kind: str
    constants: AtomConstants
    lasers: tuple[LaserSpec, ...]
    space: InternalSpace
    gauge_offset: float = 0.0

    # momentum grid (COM systems)
    k_ref: float = 0.0
    commensuration: int = 1
    laser_steps: tuple[int, ...] | None = None
    effective_steps: int = 0
    commensuration_residual: float = 0.0
    kinetic_scale: float = 0.0            # rad/s per (p/hbar k_ref)^2

    # block decomposition
    delta_constants: dict = field(default_factory=dict)   # level -> rad/s (gauge removed)
    xi_constants: dict = field(default_factory=dict)
    couplings: tuple[Coupling, ...] = ()
    eff_diag: tuple[STerm, ...] = ()
    eff_offdiag: tuple[STerm, ...] = ()

    # finite-matrix systems
    delta_matrix: np.ndarray | None = None
    xi_matrix: np.ndarray | None = None
    omega_static: np.ndarray | None = None
    omega_matrix_fn: Callable[[float], np.ndarray] | None = None

    t_start: float = 0.0
    horizon: float = 1.0
    support_window: tuple[int, int] = (-8, 8)
    support_momenta: tuple[float, ...] = (0.0,)
    notes: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    # -- interface used by elimination ------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.kind == FIVE_LEVEL

    @property
    def time_dependent_omega(self) -> bool:
        return self.omega_matrix_fn is not None

    def coupling_window(self) -> tuple[float, float]:
        if self.lasers:
            los, his = zip(*(ls.envelope.window for ls in self.lasers))
            return min(los), max(his)
        return self.t_start, self.t_start + self.horizon

    def default_ladder(self, base_momenta: Sequence[float] = (0.0,),
                       window: tuple[int, int] | None = None) -> MomentumLadder:
        if self.is_finite:
            return MomentumLadder(tuple(base_momenta), k_ref=1.0,
                                  commensuration=1, window=(0, 1))
        gens = self.laser_steps or (self.effective_steps,)
        return MomentumLadder(tuple(base_momenta), k_ref=self.k_ref,
                              commensuration=self.commensuration,
                              window=window or self.support_window,
                              generators=tuple(gens),
                              residual=self.commensuration_residual)

    def _support_grid(self) -> np.ndarray:
        ladder = self.default_ladder(self.support_momenta)
        return ladder.momentum_grid().ravel()

    def delta_spectrum(self) -> np.ndarray:
        if self.is_finite:
            return np.linalg.eigvalsh(self.delta_matrix)
        p = self._support_grid()
        kin = self.kinetic_scale * p * p
        return np.concatenate([kin + c for c in self.delta_constants.values()])

    def xi_spectrum(self) -> np.ndarray:
        if self.is_finite:
            return np.linalg.eigvalsh(self.xi_matrix)
        p = self._support_grid()
        kin = self.kinetic_scale * p * p
        return np.concatenate([kin + c for c in self.xi_constants.values()])

    def momentum_support(self) -> dict:
        if self.is_finite:
            return {}
        p = self._support_grid()
        return {"p_min_hbar_kref": float(p.min()),
                "p_max_hbar_kref": float(p.max()),
                "window": list(self.support_window)}

    def omega_matrix(self, t: float) -> np.ndarray:
        """Coupling-magnitude matrix (eliminated x retained) at time t.

        Spatial plane-wave factors are unitary; entries sum |envelope| per
        slot, an upper estimate when several lasers share a slot."""
        if self.is_finite:
            if self.omega_matrix_fn is not None:
                return np.abs(self.omega_matrix_fn(t))
            return np.abs(self.omega_static)
        rows = self.space.irrelevant
        cols = self.space.relevant
        out = np.zeros((len(rows), len(cols)))
        for ls in self.lasers:
            level, ancilla = ls.transition
            out[rows.index(ancilla), cols.index(level)] += abs(
                evaluate(ls.envelope, t))
        return out

    def doppler_rate(self) -> float:
        """Effective Doppler frequency per unit momentum (rad/s per hbar*k_ref)."""
        k_eff = self.effective_steps * self.k_ref / self.commensuration
        return HBAR * abs(k_eff) * self.k_ref / self.constants.mass_kg

    def with_support(self, base_momenta: Sequence[float],
                     window: tuple[int, int] | None = None) -> "SystemSpec":
        return replace(self, support_momenta=tuple(base_momenta),
                       support_window=window or self.support_window)


# ---------------------------------------------------------------------------
# five-level benchmark (no center-of-mass motion, hbar = 1 units)

FIVE_LEVEL_DELTA = (-4.1, -4.0, 8.0)      # relevant g, m, e (1/s)
FIVE_LEVEL_XI = (22.0, 23.0)              # ancillas a1, a2 (1/s)
FIVE_LEVEL_OMEGA = ((1.5, 1.5, 1.5),
                    (1.0, 1.0, 1.0))      # rows: ancillas, cols: g, m, e


def five_level_system(horizon: float = 1.0) -> SystemSpec:
    """Constant five-level benchmark: three retained levels (g, m, e), two
    eliminated ancillas, all couplings constant."""
    space = InternalSpace(
        levels=("g", "m", "e", "a1", "a2"),
        frequencies=FIVE_LEVEL_DELTA + FIVE_LEVEL_XI,
        relevant=("g", "m", "e"),
        irrelevant=("a1", "a2"))
    return SystemSpec(
        kind=FIVE_LEVEL,
        constants=AtomConstants("five_level_benchmark", 1.0,
                                dict(zip(space.levels, space.frequencies))),
        lasers=(),
        space=space,
        delta_matrix=np.diag(FIVE_LEVEL_DELTA).astype(complex),
        xi_matrix=np.diag(FIVE_LEVEL_XI).astype(complex),
        omega_static=np.array(FIVE_LEVEL_OMEGA, dtype=complex),
        horizon=horizon)


def five_level_full_matrix() -> np.ndarray:
    """The constant 5x5 block Hamiltonian [[delta, W^dag], [W, xi]]."""
    d = np.diag(FIVE_LEVEL_DELTA)
    x = np.diag(FIVE_LEVEL_XI)
    om = np.array(FIVE_LEVEL_OMEGA)
    return np.block([[d, om.T], [om, x]]).astype(complex)


# ---------------------------------------------------------------------------
# grid helpers


def _recoil(k: float, mass: float) -> float:
    return HBAR * k * k / (2.0 * mass)


def _doppler_slope(k: float, k_ref: float, mass: float) -> float:
    # d(nu)/dp with p in units hbar*k_ref
    return HBAR * k * k_ref / mass


def _setup_grid(spec_kind: str, wavevectors: Sequence[float], k_eff: float,
                rtol: float, max_m: int):
    """Commensurate the laser wavevectors and the effective shift on one grid.

    Falls back to the effective shift alone (full model unavailable) when the
    individual lasers cannot be represented at the requested tolerance.
    """
    k_ref = abs(k_eff)
    if k_ref == 0:
        raise GridError(f"{spec_kind}: effective wavevector vanishes")
    try:
        m, steps, residual = find_commensuration(
            list(wavevectors) + [k_eff], k_ref=k_ref, max_m=max_m, rtol=rtol)
        return k_ref, m, steps[:-1], steps[-1], residual, None
    except GridError as exc:
        note = (f"laser wavevectors not commensurate at rtol={rtol:g}; "
                "full-model grid unavailable, effective grid uses the "
                "two-photon shift only")
        return k_ref, 1, None, int(math.copysign(1, k_eff)), 0.0, note


def _kinetic_scale(k_ref: float, mass: float) -> float:
    return HBAR * k_ref * k_ref / (2.0 * mass)


# ---------------------------------------------------------------------------
# Raman (lambda system, one ancilla)


def raman_system(constants: AtomConstants, laser1: LaserSpec, laser2: LaserSpec,
                 *, gauge: float | None = None,
                 commensuration_rtol: float = 1e-9,
                 max_m: int = 4096,
                 support_window: tuple[int, int] = (-8, 8)) -> SystemSpec:
    """Two-photon transition between two retained levels via one eliminated
    ancilla; laser1 couples the first retained level, laser2 the second,
    each to the same ancilla (polarization-selective coupling)."""
    e, a1 = laser1.transition
    g, a2 = laser2.transition
    if a1 != a2:
        raise ValueError("both lasers must couple to the same ancilla")
    if e == g:
        raise ValueError("lasers must couple two distinct retained levels")
    a = a1
    w = constants.level_frequencies
    w1, w2 = laser1.frequency_rad_s, laser2.frequency_rad_s
    k1, k2 = laser1.wavevector_rad_m, laser2.wavevector_rad_m
    k_eff = k2 - k1
    mass = constants.mass_kg

    k_ref, M, laser_steps, eff_steps, residual, note = _setup_grid(
        RAMAN, [k1, k2], k_eff, commensuration_rtol, max_m)
    gauge = (w[g] + w2) if gauge is None else gauge

    space = InternalSpace(levels=(e, g, a),
                          frequencies=(w[e], w[g], w[a]),
                          relevant=(e, g), irrelevant=(a,))

    nu1 = _doppler_slope(k1, k_ref, mass)
    nu2 = _doppler_slope(k2, k_ref, mass)
    wr1 = _recoil(k1, mass)
    wr2 = _recoil(k2, mass)
    gamma1 = _linear_gamma(w[a] - w[e] - w1 + wr1, nu1)
    gamma2 = _linear_gamma(w[a] - w[g] - w2 + wr2, nu2)
    env1, env2 = laser1.envelope, laser2.envelope

    couplings = ()
    if laser_steps is not None:
        couplings = (Coupling(a, e, laser_steps[0], env1),
                     Coupling(a, g, laser_steps[1], env2))

    return SystemSpec(
        kind=RAMAN, constants=constants, lasers=(laser1, laser2), space=space,
        gauge_offset=gauge, k_ref=k_ref, commensuration=M,
        laser_steps=laser_steps, effective_steps=eff_steps,
        commensuration_residual=residual,
        kinetic_scale=_kinetic_scale(k_ref, mass),
        delta_constants={e: w[e] + w1 - gauge, g: w[g] + w2 - gauge},
        xi_constants={a: w[a] - gauge},
        couplings=couplings,
        eff_diag=(STerm(e, e, 0, gamma1, env1, env1),
                  STerm(g, g, 0, gamma2, env2, env2)),
        eff_offdiag=(STerm(e, g, eff_steps, gamma2, env1, env2),
                     STerm(g, e, -eff_steps, gamma1, env2, env1)),
        support_window=support_window,
        notes=(note,) if note else (),
        metadata={"effective_recoil_rad_s": _recoil(k_eff, mass),
                  "effective_wavevector_rad_m": k_eff})


# ---------------------------------------------------------------------------
# double Raman (four lasers, two ancillas, retro-reflective)


def double_raman_system(constants: AtomConstants, lasers: Sequence[LaserSpec],
                        *, gauge: float | None = None,
                        commensuration_rtol: float = 1e-9, max_m: int = 4096,
                        support_window: tuple[int, int] = (-8, 8)) -> SystemSpec:
    """Retro-reflective double diffraction: +-k1 drive the first retained
    level, +-k2 the second, onto two eliminated ancillas."""
    if len(lasers) != 4:
        raise ValueError("double Raman takes exactly four lasers")
    by_level: dict[str, list[LaserSpec]] = {}
    for ls in lasers:
        by_level.setdefault(ls.transition[0], []).append(ls)
    if len(by_level) != 2 or any(len(v) != 2 for v in by_level.values()):
        raise ValueError("need one retro pair per retained level")
    (e, pair_e), (g, pair_g) = by_level.items()
    for pair in (pair_e, pair_g):
        kp = sorted(ls.wavevector_rad_m for ls in pair)
        if kp[0] != -kp[1]:
            raise GridError("retro pair wavevectors must be exactly opposite")
        if pair[0].frequency_rad_s != pair[1].frequency_rad_s:
            raise ValueError("retro pair members must share a frequency")
    l1p = max(pair_e, key=lambda ls: ls.wavevector_rad_m)
    a1 = l1p.transition[1]
    a2 = next(ls for ls in pair_e if ls is not l1p).transition[1]
    if a1 == a2:
        raise ValueError("the two propagation directions must address "
                         "distinct ancillas")
    try:
        l2p = next(ls for ls in pair_g if ls.transition[1] == a1)
    except StopIteration:
        raise ValueError("each ancilla must couple one beam of either pair")
    l2m = next(ls for ls in pair_g if ls is not l2p)
    if l2m.transition[1] != a2:
        raise ValueError("each ancilla must couple one beam of either pair")
    w = constants.level_frequencies
    mass = constants.mass_kg
    k1, k2 = l1p.wavevector_rad_m, l2p.wavevector_rad_m
    w1, w2 = l1p.frequency_rad_s, l2p.frequency_rad_s
    k_eff = k2 - k1
    k_ref, M, steps, eff_steps, residual, note = _setup_grid(
        DOUBLE_RAMAN, [k1, -k1, k2, -k2], k_eff, commensuration_rtol, max_m)
    gauge = (w[g] + w2) if gauge is None else gauge

    space = InternalSpace(levels=(e, g, a1, a2),
                          frequencies=(w[e], w[g], w[a1], w[a2]),
                          relevant=(e, g), irrelevant=(a1, a2))
    nu1 = _doppler_slope(k1, k_ref, mass)
    nu2 = _doppler_slope(k2, k_ref, mass)
    wr1, wr2 = _recoil(k1, mass), _recoil(k2, mass)
    env_e, env_g = l1p.envelope, l2p.envelope

    # detuning combinations of the double-diffraction elimination
    g11 = _linear_gamma(w[a1] - w[e] - w1 + wr1, nu1)
    g12 = _linear_gamma(w[a1] - w[e] - w1 + wr2, nu2)
    g21 = _linear_gamma(w[a2] - w[g] - w2 + wr1, -nu1)
    g22 = _linear_gamma(w[a2] - w[g] - w2 + wr2, -nu2)

    couplings = ()
    if steps is not None:
        s1, s1m, s2, s2m = steps
        couplings = (Coupling(a1, e, s1, env_e), Coupling(a2, e, s1m, env_e),
                     Coupling(a1, g, s2, env_g), Coupling(a2, g, s2m, env_g))

    return SystemSpec(
        kind=DOUBLE_RAMAN, constants=constants, lasers=tuple(lasers),
        space=space, gauge_offset=gauge, k_ref=k_ref, commensuration=M,
        laser_steps=steps, effective_steps=eff_steps,
        commensuration_residual=residual,
        kinetic_scale=_kinetic_scale(k_ref, mass),
        delta_constants={e: w[e] + w1 - gauge, g: w[g] + w2 - gauge},
        xi_constants={a1: w[a1] - gauge, a2: w[a2] - gauge},
        couplings=couplings,
        eff_diag=(STerm(e, e, 0, g11, env_e, env_e),
                  STerm(e, e, 0, g21, env_e, env_e),
                  STerm(g, g, 0, g12, env_g, env_g),
                  STerm(g, g, 0, g22, env_g, env_g)),
        eff_offdiag=(STerm(e, g, eff_steps, g12, env_e, env_g),
                     STerm(e, g, -eff_steps, g22, env_e, env_g),
                     STerm(g, e, -eff_steps, g11, env_g, env_e),
                     STerm(g, e, eff_steps, g21, env_g, env_e)),
        support_window=support_window,
        notes=(note,) if note else (),
        metadata={"effective_recoil_rad_s": _recoil(k_eff, mass),
                  "effective_wavevector_rad_m": k_eff})


# ---------------------------------------------------------------------------
# Bragg (two-level atom, single retained level)


def bragg_system(constants: AtomConstants, laser1: LaserSpec, laser2: LaserSpec,
                 *, gauge: float | None = None,
                 commensuration_rtol: float = 1e-9, max_m: int = 4096,
                 support_window: tuple[int, int] = (-8, 8)) -> SystemSpec:
    """Two-photon diffraction that returns to the same internal level; the
    interaction picture rotates the ancilla at the first laser frequency."""
    g, a1 = laser1.transition
    g2, a2 = laser2.transition
    if (g, a1) != (g2, a2):
        raise ValueError("both lasers must couple the same level pair")
    a = a1
    w = constants.level_frequencies
    mass = constants.mass_kg
    w1, w2 = laser1.frequency_rad_s, laser2.frequency_rad_s
    k1, k2 = laser1.wavevector_rad_m, laser2.wavevector_rad_m
    w_l = w2 - w1
    k_eff = k2 - k1
    k_ref, M, steps, eff_steps, residual, note = _setup_grid(
        BRAGG, [k1, k2], k_eff, commensuration_rtol, max_m)
    gauge = w[g] if gauge is None else gauge

    space = InternalSpace(levels=(g, a), frequencies=(w[g], w[a]),
                          relevant=(g,), irrelevant=(a,))
    nu1 = _doppler_slope(k1, k_ref, mass)
    nu2 = _doppler_slope(k2, k_ref, mass)
    wr1, wr2 = _recoil(k1, mass), _recoil(k2, mass)
    dw = w[a] - w[g] - w1
    gamma1 = _linear_gamma(dw + wr1, nu1)
    gamma2 = _linear_gamma(dw - w_l + wr2, nu2)
    env1, env2 = laser1.envelope, laser2.envelope

    couplings = ()
    if steps is not None:
        couplings = (Coupling(a, g, steps[0], env1, 0.0),
                     Coupling(a, g, steps[1], env2, w_l))

    return SystemSpec(
        kind=BRAGG, constants=constants, lasers=(laser1, laser2), space=space,
        gauge_offset=gauge, k_ref=k_ref, commensuration=M,
        laser_steps=steps, effective_steps=eff_steps,
        commensuration_residual=residual,
        kinetic_scale=_kinetic_scale(k_ref, mass),
        delta_constants={g: w[g] - gauge},
        xi_constants={a: w[a] - w1 - gauge},
        couplings=couplings,
        eff_diag=(STerm(g, g, 0, gamma1, env1, env1),
                  STerm(g, g, 0, gamma2, env2, env2)),
        eff_offdiag=(STerm(g, g, eff_steps, gamma2, env1, env2, w_l),
                     STerm(g, g, -eff_steps, gamma1, env2, env1, -w_l)),
        support_window=support_window,
        notes=(note,) if note else (),
        metadata={"effective_recoil_rad_s": _recoil(k_eff, mass),
                  "effective_wavevector_rad_m": k_eff,
                  "equal_detuning_note":
                      "for gamma1 ~ gamma2 the two shifted terms merge into "
                      "the travelling-lattice cosine form used in standard "
                      "treatments"})


# ---------------------------------------------------------------------------
# double Bragg (four lasers, two ancillas, single retained level)


def double_bragg_system(constants: AtomConstants, lasers: Sequence[LaserSpec],
                        *, gauge: float | None = None,
                        commensuration_rtol: float = 1e-9, max_m: int = 4096,
                        support_window: tuple[int, int] = (-8, 8)) -> SystemSpec:
    """Retro-reflective two-photon diffraction with one retained level and
    two eliminated ancillas (one per propagation direction)."""
    if len(lasers) != 4:
        raise ValueError("double Bragg takes exactly four lasers")
    g = lasers[0].transition[0]
    if any(ls.transition[0] != g for ls in lasers):
        raise ValueError("all lasers must couple the single retained level")
    by_freq: dict[float, list[LaserSpec]] = {}
    for ls in lasers:
        by_freq.setdefault(ls.frequency_rad_s, []).append(ls)
    if len(by_freq) != 2 or any(len(v) != 2 for v in by_freq.values()):
        raise ValueError("need two retro frequency pairs")
    (w1, pair1), (w2, pair2) = sorted(by_freq.items())
    for pair in (pair1, pair2):
        kp = sorted(ls.wavevector_rad_m for ls in pair)
        if kp[0] != -kp[1]:
            raise GridError("retro pair wavevectors must be exactly opposite")
    l1p = max(pair1, key=lambda ls: ls.wavevector_rad_m)
    a1 = l1p.transition[1]
    a2 = next(ls for ls in pair1 if ls is not l1p).transition[1]
    if a1 == a2:
        raise ValueError("the two propagation directions must address "
                         "distinct ancillas")
    try:
        l2p = next(ls for ls in pair2 if ls.transition[1] == a1)
    except StopIteration:
        raise ValueError("each ancilla must couple one beam of either pair")
    if next(ls for ls in pair2 if ls is not l2p).transition[1] != a2:
        raise ValueError("each ancilla must couple one beam of either pair")
    w = constants.level_frequencies
    mass = constants.mass_kg
    k1, k2 = l1p.wavevector_rad_m, l2p.wavevector_rad_m
    w_l = w2 - w1
    k_eff = k2 - k1
    k_ref, M, steps, eff_steps, residual, note = _setup_grid(
        DOUBLE_BRAGG, [k1, -k1, k2, -k2], k_eff, commensuration_rtol, max_m)
    gauge = w[g] if gauge is None else gauge

    space = InternalSpace(levels=(g, a1, a2),
                          frequencies=(w[g], w[a1], w[a2]),
                          relevant=(g,), irrelevant=(a1, a2))
    nu1 = _doppler_slope(k1, k_ref, mass)
    nu2 = _doppler_slope(k2, k_ref, mass)
    wr1, wr2 = _recoil(k1, mass), _recoil(k2, mass)
    env1, env2 = l1p.envelope, l2p.envelope

    g11 = _linear_gamma(w[a1] - w[g] - w1 + wr1, nu1)
    g12 = _linear_gamma(w[a1] - w[g] - w1 + wr2 - w_l, nu2)
    g21 = _linear_gamma(w[a2] - w[g] - w1 + wr1, -nu1)
    g22 = _linear_gamma(w[a2] - w[g] - w1 + wr2 - w_l, -nu2)

    couplings = ()
    if steps is not None:
        s1, s1m, s2, s2m = steps
        couplings = (Coupling(a1, g, s1, env1, 0.0),
                     Coupling(a1, g, s2, env2, w_l),
                     Coupling(a2, g, s1m, env1, 0.0),
                     Coupling(a2, g, s2m, env2, w_l))

    return SystemSpec(
        kind=DOUBLE_BRAGG, constants=constants, lasers=tuple(lasers),
        space=space, gauge_offset=gauge, k_ref=k_ref, commensuration=M,
        laser_steps=steps, effective_steps=eff_steps,
        commensuration_residual=residual,
        kinetic_scale=_kinetic_scale(k_ref, mass),
        delta_constants={g: w[g] - gauge},
        xi_constants={a1: w[a1] - w1 - gauge, a2: w[a2] - w1 - gauge},
        couplings=couplings,
        eff_diag=(STerm(g, g, 0, g11, env1, env1),
                  STerm(g, g, 0, g12, env2, env2),
                  STerm(g, g, 0, g21, env1, env1),
                  STerm(g, g, 0, g22, env2, env2)),
        eff_offdiag=(STerm(g, g, eff_steps, g12, env1, env2, w_l),
                     STerm(g, g, -eff_steps, g11, env2, env1, -w_l),
                     STerm(g, g, -eff_steps, g22, env1, env2, w_l),
                     STerm(g, g, eff_steps, g21, env2, env1, -w_l)),
        support_window=support_window,
        notes=(note,) if note else (),
        metadata={"effective_recoil_rad_s": _recoil(k_eff, mass),
                  "effective_wavevector_rad_m": k_eff})


# ---------------------------------------------------------------------------
# full (un-eliminated) Hamiltonian


def full_hamiltonian(spec: SystemSpec) -> BlockOperator:
    """Interaction-picture Hamiltonian over retained + eliminated levels,
    for oracle propagation.  Hermitian by construction."""
    if spec.is_finite:
        H = np.block([[spec.delta_matrix, spec.omega_static.conj().T],
                      [spec.omega_static, spec.xi_matrix]])
        terms = []
        for i, row in enumerate(spec.space.levels):
            for j, col in enumerate(spec.space.levels):
                val = complex(H[i, j])
                if val != 0:
                    def coeff(p, t, _v=val):
                        return np.broadcast_to(_v, np.shape(p))
                    terms.append(LadderTerm(row, col, 0, coeff))
        return BlockOperator(spec.space, terms, time_dependent=False)

    if spec.laser_steps is None:
        raise GridError(
            f"{spec.kind}: full Hamiltonian unavailable, laser wavevectors "
            "not commensurate on the grid (rebuild with a coarser "
            "commensuration_rtol)")

    terms: list[LadderTerm] = []
    kin = spec.kinetic_scale
    for level, const in {**spec.delta_constants, **spec.xi_constants}.items():
        def diag(p, t, _c=const, _k=kin):
            p = np.asarray(p, dtype=float)
            return (_k * p * p + _c).astype(complex)
        diag.time_independent = True
        terms.append(LadderTerm(level, level, 0, diag))
    for cp in spec.couplings:
        def up(p, t, _env=cp.envelope, _pf=cp.phase_freq):
            val = value_at(_env, t) * np.exp(-1j * _pf * t)
            return np.broadcast_to(val, np.shape(p))

        def down(p, t, _env=cp.envelope, _pf=cp.phase_freq):
            val = value_at(_env, t) * np.exp(1j * _pf * t)
            return np.broadcast_to(val, np.shape(p))
        terms.append(LadderTerm(cp.ancilla, cp.level, cp.steps, up))
        terms.append(LadderTerm(cp.level, cp.ancilla, -cp.steps, down))
    return BlockOperator(spec.space, terms, time_dependent=bool(spec.couplings))


# ---------------------------------------------------------------------------
# atom presets


def load_atom_constants(path) -> AtomConstants:
    """Read an atom-constants JSON file: {label, mass_kg,
    levels: {label: omega_rad_s}}."""
    with open(path) as fh:
        data = json.load(fh)
    return AtomConstants(data["label"], float(data["mass_kg"]),
                         {k: float(v) for k, v in data["levels"].items()})


def _preset_data(name: str) -> dict:
    ref = resources.files("adelim").joinpath("presets", f"{name}.json")
    return json.loads(ref.read_text())


def rubidium87_preset() -> dict:
    """Raw preset record for the rubidium-87 D2 Raman setup, with derived
    recoil scalars.

    The laser detuning in the preset encodes the two-photon resonance shift:
    subtracting 2*pi times the ground-state hyperfine splitting leaves the
    recoil frequency the laser pair was tuned for.
    """
    data = _preset_data("rb87_d2")
    w1 = data["laser_frequency_rad_s"]
    dw = data["laser_detuning_rad_s"]
    mass = data["mass_kg"]
    w2 = w1 - dw
    k1 = w1 / SPEED_OF_LIGHT
    k2 = -w2 / SPEED_OF_LIGHT
    k_eff = k2 - k1
    data["derived"] = {
        "laser2_frequency_rad_s": w2,
        "wavevector_1_rad_m": k1,
        "wavevector_2_rad_m": k2,
        "effective_wavevector_rad_m": k_eff,
        "effective_recoil_rad_s": _recoil(k_eff, mass),
        "single_photon_recoil_rad_s": _recoil(k1, mass),
        "resonance_recoil_rad_s":
            dw - 2.0 * np.pi * data["hyperfine_splitting_hz"],
    }
    return data


def rubidium87_raman(duration_s: float, pulse_area: float = math.pi,
                     *, detuning_rad_s: float = 2.0 * math.pi * 1e8,
                     pulse_kind: str = "sine_squared", t0: float = 0.0,
                     commensuration_rtol: float = 1e-9,
                     support_window: tuple[int, int] = (-8, 8)) -> SystemSpec:
    """Rubidium-87 D2 Raman system with counter-propagating lasers and a
    pulse pair calibrated to ``pulse_area``.

    Level frequencies place the bare two-photon resonance (including the
    effective recoil kick) at p = 0; ``detuning_rad_s`` is the single-photon
    detuning to the ancilla at p = 0.
    """
    from .pulses import calibrate_amplitude

    data = rubidium87_preset()
    der = data["derived"]
    mass = data["mass_kg"]
    w1 = data["laser_frequency_rad_s"]
    dw = data["laser_detuning_rad_s"]
    w2 = der["laser2_frequency_rad_s"]
    k1, k2 = der["wavevector_1_rad_m"], der["wavevector_2_rad_m"]
    wr_eff = der["effective_recoil_rad_s"]
    wr2 = _recoil(k2, mass)
    wr1 = _recoil(k1, mass)

    wg = 0.0
    we = wg - dw - wr_eff                       # bare resonance at p = 0
    wa = detuning_rad_s + wg + w2 - wr2         # gamma_2(p=0) = detuning
    gamma0 = detuning_rad_s + 0.5 * (wr_eff + wr1 - wr2)  # (g1(0)+g2(0))/2

    a0 = calibrate_amplitude(pulse_kind, duration_s, gamma0, pulse_area, t0=t0)
    env = PulseShape(pulse_kind, a0=a0, t0=t0, duration=duration_s)
    constants = AtomConstants(data["label"], mass,
                              {"g": wg, "e": we, "a": wa})
    laser1 = LaserSpec(k1, w1, env, ("e", "a"))
    laser2 = LaserSpec(k2, w2, env, ("g", "a"))
    spec = raman_system(constants, laser1, laser2,
                        commensuration_rtol=commensuration_rtol,
                        support_window=support_window)
    spec.metadata.update({
        "preset": data["label"],
        "pulse_area": pulse_area,
        "pulse_area_reference_detuning_rad_s": gamma0,
        "resonance_recoil_rad_s": der["resonance_recoil_rad_s"],
    })
    return spec
