"""Spinor states on a truncated momentum ladder and shift-structured operators.

Every Hamiltonian in this library couples momentum only through plane-wave
factors exp(i*k*x), so each initial quasi-momentum p0 evolves inside a closed
family {p0 + n*hbar*k_ref/M}.  States are stored as complex arrays indexed by
(internal level, family, ladder site) and operators as sums of LadderTerm
entries, each a momentum-diagonal coefficient composed with an integer ladder
shift.

Unit conventions: coefficients are angular frequencies (rad/s, i.e. H/hbar),
momenta are dimensionless multiples of hbar*k_ref, and the ladder step is
1/M in those units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GridError, TruncationError

HBAR = 1.054571817e-34  # J*s

Coefficient = Callable[[np.ndarray, float], "np.ndarray | complex | float"]


def find_commensuration(wavevectors: Sequence[float], k_ref: float | None = None,
                        *, max_m: int = 4096, rtol: float = 1e-9):
    """Smallest M so every wavevector is an integer multiple of k_ref/M.

    Returns (M, steps, residual) where ``steps`` are the signed integer step
    counts and ``residual`` the worst relative rounding error.  Raises
    GridError when no M within ``max_m`` reaches ``rtol``.
    """
    ks = np.asarray(wavevectors, dtype=float)
    if ks.size == 0:
        raise GridError("no wavevectors given")
    if np.any(ks == 0.0):
        raise GridError("diffraction wavevectors must be nonzero")
    if k_ref is None:
        k_ref = float(np.max(np.abs(ks)))
    if k_ref <= 0:
        raise GridError("reference wavevector must be positive")
    best = None
    for m in range(1, max_m + 1):
        exact = ks * m / k_ref
        steps = np.rint(exact)
        if np.any(steps == 0.0):  # a diffraction laser must move the atom
            continue
        residual = float(np.max(np.abs(exact - steps) / np.abs(exact)))
        if residual <= rtol:
            return m, tuple(int(s) for s in steps), residual
        if best is None or residual < best[2]:
            best = (m, tuple(int(s) for s in steps), residual)
    hint = f" (best residual {best[2]:.3g} at M={best[0]})" if best else ""
    raise GridError(
        f"wavevectors {list(ks)} are not commensurate with k_ref={k_ref:g} "
        f"within rtol={rtol:g} for M<={max_m}{hint}")


@dataclass(frozen=True)
class MomentumLadder:
    """Truncated integer ladder attached to a set of base quasi-momenta.

    ``base_momenta`` are in units of hbar*k_ref, ``window`` is the inclusive
    (n_min, n_max) site range and the grid step is k_ref/commensuration.
    """

    base_momenta: tuple[float, ...]
    k_ref: float
    commensuration: int = 1
    window: tuple[int, int] = (-8, 8)
    generators: tuple[int, ...] = ()
    residual: float = 0.0

    def __post_init__(self):
        n_min, n_max = self.window
        if n_min >= n_max:
            raise GridError(f"ladder window {self.window} must satisfy n_min < n_max")
        if self.k_ref <= 0:
            raise GridError("k_ref must be positive")
        if self.commensuration < 1:
            raise GridError("commensuration integer must be >= 1")
        if len(set(self.base_momenta)) != len(self.base_momenta):
            raise GridError("base momenta must be distinct")

    @property
    def n_sites(self) -> int:
        return self.window[1] - self.window[0] + 1

    @property
    def n_families(self) -> int:
        return len(self.base_momenta)

    @property
    def step(self) -> float:
        """Ladder step in units of hbar*k_ref."""
        return 1.0 / self.commensuration

    def sites(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def momenta(self, family: int) -> np.ndarray:
        """Grid momenta p0 + n*step of one family (units hbar*k_ref)."""
        return self.base_momenta[family] + self.sites() * self.step

    def momentum_grid(self) -> np.ndarray:
        """(n_families, n_sites) grid of momenta in units hbar*k_ref."""
        base = np.asarray(self.base_momenta)[:, None]
        return base + self.sites()[None, :] * self.step

    def widened(self, factor: int = 2) -> "MomentumLadder":
        n_min, n_max = self.window
        return replace(self, window=(n_min * factor, n_max * factor))


@dataclass(frozen=True)
class InternalSpace:
    """Ordered internal levels with rest frequencies and a relevant/irrelevant
    partition."""

    levels: tuple[str, ...]
    frequencies: tuple[float, ...]
    relevant: tuple[str, ...]
    irrelevant: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.levels) != len(self.frequencies):
            raise ValueError("levels and frequencies must align")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError("level labels must be unique")
        if not self.relevant:
            raise ValueError("relevant set must be non-empty")
        part = set(self.relevant) | set(self.irrelevant)
        if set(self.relevant) & set(self.irrelevant):
            raise ValueError("relevant/irrelevant sets overlap")
        if part != set(self.levels):
            raise ValueError("partition must cover all levels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def index(self, label: str) -> int:
        return self.levels.index(label)

    def frequency(self, label: str) -> float:
        return self.frequencies[self.index(label)]


@dataclass
class StateVector:
    """Complex amplitudes indexed by (level, family, ladder site).

    ``truncation_loss`` accumulates the squared amplitude pushed past the
    window by shift operations applied to this state so far.
    """

    space: InternalSpace
    ladder: MomentumLadder
    amplitudes: np.ndarray
    norm_tolerance: float = 1e-9
    truncation_loss: float = 0.0

    def __post_init__(self):
        expect = (self.space.n_levels, self.ladder.n_families, self.ladder.n_sites)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != expect:
            raise ValueError(f"amplitude shape {self.amplitudes.shape} != {expect}")
        if not np.all(np.isfinite(self.amplitudes.view(float))):
            raise ValueError("amplitudes must be finite")

    @classmethod
    def zero(cls, space: InternalSpace, ladder: MomentumLadder) -> "StateVector":
        shape = (space.n_levels, ladder.n_families, ladder.n_sites)
        return cls(space, ladder, np.zeros(shape, dtype=complex))

    @classmethod
    def basis_state(cls, space: InternalSpace, ladder: MomentumLadder,
                    level: str, family: int = 0, site: int = 0) -> "StateVector":
        psi = cls.zero(space, ladder)
        psi.amplitudes[space.index(level), family, site - ladder.window[0]] = 1.0
        return psi

    def copy(self) -> "StateVector":
        return StateVector(self.space, self.ladder, self.amplitudes.copy(),
                           self.norm_tolerance, self.truncation_loss)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def family_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.amplitudes) ** 2, axis=(0, 2)))

    def level_populations(self) -> np.ndarray:
        """|amplitude|^2 summed over the ladder, per (level, family)."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=2)

    def family(self, index: int) -> "StateVector":
        """Single-family view (copied) as its own StateVector."""
        sub = replace(self.ladder, base_momenta=(self.ladder.base_momenta[index],))
        return StateVector(self.space, sub,
                           self.amplitudes[:, index:index + 1, :].copy(),
                           self.norm_tolerance, self.truncation_loss)


def plane_wave_shift(k_steps: int, state: StateVector,
                     loss_cap: float | None = None) -> StateVector:
    """Apply exp(i*k*x) with k = k_steps*k_ref/M: move amplitudes up the
    ladder by ``k_steps`` sites.  Amplitude shifted past the window is
    dropped and reported via ``truncation_loss``."""
    n_min, n_max = state.ladder.window
    span = n_max - n_min
    if abs(k_steps) > span:
        raise GridError(f"shift {k_steps} exceeds ladder span {span}")
    out = np.zeros_like(state.amplitudes)
    s = int(k_steps)
    if s == 0:
        out[:] = state.amplitudes
        lost = 0.0
    elif s > 0:
        out[..., s:] = state.amplitudes[..., :-s]
        lost = float(np.sum(np.abs(state.amplitudes[..., -s:]) ** 2))
    else:
        out[..., :s] = state.amplitudes[..., -s:]
        lost = float(np.sum(np.abs(state.amplitudes[..., :-s]) ** 2))
    total = state.truncation_loss + lost
    if loss_cap is not None and total > loss_cap:
        raise TruncationError(
            f"truncation loss {total:.3e} exceeds cap {loss_cap:.3e}",
            lost_norm=total)
    return StateVector(state.space, state.ladder, out,
                       state.norm_tolerance, total)


@dataclass
class LadderTerm:
    """One operator term exp(i*shift*dk*x) * f(p, t) between two levels.

    The action is psi'(row, p + shift*step) += coeff(p, t) * psi(col, p):
    the coefficient is always evaluated at the pre-shift momentum, matching
    operators written with the plane-wave factor on the left.
    """

    row: str
    col: str
    shift: int
    coeff: Coefficient


@dataclass
class BlockOperator:
    """Sum of LadderTerm entries over an InternalSpace."""

    space: InternalSpace
    terms: list[LadderTerm]
    time_dependent: bool = True

    def __post_init__(self):
        for term in self.terms:
            if term.row not in self.space.levels or term.col not in self.space.levels:
                raise ValueError(f"term levels ({term.row}, {term.col}) not in space")

    def apply(self, t: float, state: StateVector,
              loss_cap: float | None = None,
              loss_out: list | None = None) -> StateVector:
        """Return (sum of terms) applied to ``state`` at time ``t``."""
        ladder = state.ladder
        grid = ladder.momentum_grid()  # (n_fam, n_sites)
        out = np.zeros_like(state.amplitudes)
        lost = 0.0
        li = self.space.index
        for term in self.terms:
            src = state.amplitudes[li(term.col)]
            contrib = np.asarray(term.coeff(grid, t), dtype=complex)
            contrib = np.broadcast_to(contrib, src.shape) * src
            s = term.shift
            if s == 0:
                out[li(term.row)] += contrib
            elif s > 0:
                out[li(term.row), :, s:] += contrib[:, :-s]
                lost += float(np.sum(np.abs(contrib[:, -s:]) ** 2))
            else:
                out[li(term.row), :, :s] += contrib[:, -s:]
                lost += float(np.sum(np.abs(contrib[:, :-s]) ** 2))
        if loss_out is not None:
            loss_out.append(lost)
        total = state.truncation_loss + lost
        if loss_cap is not None and total > loss_cap:
            raise TruncationError(
                f"truncation loss {total:.3e} exceeds cap {loss_cap:.3e}",
                lost_norm=total)
        return StateVector(state.space, ladder, out, state.norm_tolerance, total)

    def dagger(self, ladder: MomentumLadder) -> "BlockOperator":
        """Hermitian conjugate as a term list on the given ladder geometry."""
        step = ladder.step

        def flip(term: LadderTerm) -> LadderTerm:
            f, s = term.coeff, term.shift

            def coeff(p, t, _f=f, _s=s):
                return np.conj(_f(p - _s * step, t))

            return LadderTerm(term.col, term.row, -s, coeff)

        return BlockOperator(self.space, [flip(tm) for tm in self.terms],
                             self.time_dependent)

    def restricted(self, levels: Sequence[str]) -> "BlockOperator":
        keep = set(levels)
        terms = [tm for tm in self.terms if tm.row in keep and tm.col in keep]
        space = InternalSpace(
            levels=tuple(l for l in self.space.levels if l in keep),
            frequencies=tuple(f for l, f in zip(self.space.levels,
                                                self.space.frequencies) if l in keep),
            relevant=tuple(l for l in self.space.relevant if l in keep),
            irrelevant=tuple(l for l in self.space.irrelevant if l in keep))
        return BlockOperator(space, terms, self.time_dependent)

    def to_matrix(self, ladder: MomentumLadder, family: int, t: float) -> np.ndarray:
        """Dense matrix on the (level x ladder site) basis of one family."""
        ns = ladder.n_sites
        nl = self.space.n_levels
        p = ladder.momenta(family)
        H = np.zeros((nl * ns, nl * ns), dtype=complex)
        for term in self.terms:
            r = self.space.index(term.row) * ns
            c = self.space.index(term.col) * ns
            vals = np.broadcast_to(np.asarray(term.coeff(p, t), dtype=complex), (ns,))
            s = term.shift
            if s >= 0:
                idx = np.arange(0, ns - s)
            else:
                idx = np.arange(-s, ns)
            H[r + idx + s, c + idx] += vals[idx]
        return H


def diagonal_term(level: str, coeff: Coefficient) -> LadderTerm:
    return LadderTerm(level, level, 0, coeff)


def constant_coeff(value: complex) -> Coefficient:
    def coeff(p, t, _v=value):
        return np.broadcast_to(np.asarray(_v, dtype=complex), np.shape(p))
    return coeff


def conjugate_shift_check(T: float, k_steps: int, p: float,
                          ladder: MomentumLadder, mass: float,
                          omega1: float = 0.0, omega2: float = 0.0):
    """Evaluate both sides of the kinetic-phase / plane-wave exchange identity
    on the ladder basis state |p>.

    Left side: exp(-iT(p^2/2m hbar + w2)) exp(ikx) exp(+iT(p^2/2m hbar + w1)).
    Right side: exp(ikx) exp(-iT(dw + doppler + recoil)) with dw = w2 - w1,
    doppler = k p/m and recoil = hbar k^2/2m, both applied to |p>; returns the
    two resulting phases (complex amplitudes at the shifted site).
    """
    k_phys = k_steps * ladder.k_ref / ladder.commensuration  # rad/m
    p_phys = p * HBAR * ladder.k_ref                         # kg m/s
    p_shifted = p_phys + HBAR * k_phys

    kin = lambda q: q * q / (2.0 * mass * HBAR)              # rad/s
    lhs = np.exp(1j * T * (kin(p_phys) + omega1)) \
        * np.exp(-1j * T * (kin(p_shifted) + omega2))

    doppler = k_phys * p_phys / mass
    recoil = HBAR * k_phys ** 2 / (2.0 * mass)
    rhs = np.exp(-1j * T * ((omega2 - omega1) + doppler + recoil))
    return complex(lhs), complex(rhs)
