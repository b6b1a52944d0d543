"""Projector-based adiabatic elimination with explicit time dependence.

The central object is the pulse memory integral

    S_nj(gamma, t) = -i * Wn(t) * int_{t0}^{t} Wj(s) exp(-i*gamma*(t-s)) ds

evaluated per momentum grid point (gamma is momentum-diagonal).  Closed
forms exist for box, sine-squared and Blackman envelopes; an oscillation-
aware Gauss-Kronrod quadrature provides the independent route.

The projector mapping the retained onto the eliminated subspace solves a
Riccati-type operator ODE with P(t0) = 0.  Expanding in inverse powers of
the manifold gap gives the recursion

    P_0 = 0
    P_l(t) = -i * int_{t0}^{t} U_xi(s,t) F_l(s) U_delta^dag(s,t) ds
    F_1 = W - P_0 W^dag P_0,   F_l = - sum_{k<l} P_{l-1-k} W^dag P_k  (l > 1)

and the order-N effective generator  H_N = delta + W^dag * sum_{l<=N} P_l.
Even orders vanish identically because P_0 = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import pulses
from .errors import (DecompositionError, PoleError, SingularOperatorError,
                     ValidityError)
from .hilbert import BlockOperator, InternalSpace, LadderTerm
from .pulses import PulseShape, evaluate
from .quadrature import matrix_kernel_integral, oscillatory_integral

# |gamma| below this multiple of the envelope bandwidth 2*pi/T triggers a
# warning when the rotating-wave simplified form is requested.
RWA_GAMMA_FACTOR = 10.0

# Library policy thresholds for the validity verdict (not sourced values).
WARN_COUPLING_RATIO = 0.1
WARN_SMOOTHNESS = 0.1
FAIL_COUPLING_RATIO = 1.0


@dataclass(frozen=True)
class SIntegralSpec:
    """Inputs of one S integral: conjugated envelope (evaluated at t), the
    integrated envelope, and the momentum-diagonal detuning gamma(p) in rad/s.

    ``gamma`` maps momenta (units hbar*k_ref) to angular frequencies; it must
    be real-valued and vectorized.
    """

    shape_n: PulseShape
    shape_j: PulseShape
    gamma: Callable[[np.ndarray], np.ndarray]
    t0: float | None = None

    @property
    def start(self) -> float:
        return self.shape_j.window[0] if self.t0 is None else self.t0


def _pole_check(gamma: np.ndarray, denominators: dict[str, np.ndarray],
                scale: float) -> None:
    for name, den in denominators.items():
        bad = np.abs(den) <= 1e-15 * scale
        if np.any(bad):
            raise PoleError(f"singular denominator {name} "
                            f"(gamma={np.atleast_1d(gamma)[np.argmax(bad)]:g})",
                            denominator=name)


def s_integral_closed(spec: SIntegralSpec, p, t: float, *, rwa: bool = False):
    """Closed-form S integral at momentum p (scalar or ndarray) and time t.

    With ``rwa=True`` the terms oscillating at gamma and the 2*pi/T sideband
    shifts of the denominators are dropped, giving -Wn(t)*Wj(t)/gamma for
    every supported kind.
    """
    sn, sj = spec.shape_n, spec.shape_j
    if sn.kind not in (pulses.BOX, pulses.SINE_SQUARED, pulses.BLACKMAN) \
            or sj.kind != sn.kind:
        raise ValueError("closed form needs box, sine_squared or blackman "
                         "envelopes of matching kind; use the quadrature route")
    if sn.window != sj.window:
        raise ValueError("closed form needs a common envelope window")

    p = np.asarray(p, dtype=float)
    gamma = np.asarray(spec.gamma(p), dtype=float)
    T = sj.duration
    wT = 2.0 * np.pi / T
    scale = max(float(np.max(np.abs(gamma))), wT)

    if rwa:
        _pole_check(gamma, {"gamma": gamma}, scale)
        if float(np.min(np.abs(gamma))) < RWA_GAMMA_FACTOR * wT:
            warnings.warn(
                "rotating-wave simplified S requested with |gamma| below "
                f"{RWA_GAMMA_FACTOR:g} x (2*pi/T); result is unreliable",
                stacklevel=2)
        out = -evaluate(sn, t) * evaluate(sj, t) / gamma
        return out if out.ndim else complex(out)

    pref = evaluate(sn, t)
    if np.all(pref == 0.0):
        out = np.zeros_like(gamma, dtype=complex)
        return out if out.ndim else 0j

    tau = t - sn.window[0]
    e = np.exp(-1j * gamma * tau)

    if sn.kind == pulses.BOX:
        _pole_check(gamma, {"gamma": gamma}, scale)
        kernel = -sj.a0 * (1.0 - e) / gamma
    elif sn.kind == pulses.SINE_SQUARED:
        _pole_check(gamma, {"gamma": gamma,
                            "gamma + 2*pi/T": gamma + wT,
                            "gamma - 2*pi/T": gamma - wT}, scale)
        ep = np.exp(2j * np.pi * tau / T)
        kernel = -0.5 * sj.a0 * ((1.0 - e) / gamma
                                 - 0.5 * ((ep - e) / (gamma + wT)
                                          + (np.conj(ep) - e) / (gamma - wT)))
    else:  # BLACKMAN
        _pole_check(gamma, {"gamma": gamma,
                            "gamma + 2*pi/T": gamma + wT,
                            "gamma - 2*pi/T": gamma - wT,
                            "gamma + 4*pi/T": gamma + 2 * wT,
                            "gamma - 4*pi/T": gamma - 2 * wT}, scale)
        e2 = np.exp(2j * np.pi * tau / T)
        e4 = np.exp(4j * np.pi * tau / T)
        kernel = -(sj.a0 * (1.0 - e) / gamma
                   - 0.5 * sj.a1 * ((e2 - e) / (gamma + wT)
                                    + (np.conj(e2) - e) / (gamma - wT))
                   + 0.5 * sj.a2 * ((e4 - e) / (gamma + 2 * wT)
                                    + (np.conj(e4) - e) / (gamma - 2 * wT)))
    out = pref * kernel
    return out if out.ndim else complex(out)


def s_integral_quadrature(spec: SIntegralSpec, p, t: float,
                          tol: float = 1e-10) -> complex:
    """S integral by oscillation-capped adaptive Gauss-Kronrod panels.

    ``p`` may be scalar or an array (evaluated pointwise).  Raises
    QuadratureError with the achieved estimate on non-convergence.
    """
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    gammas = np.atleast_1d(np.asarray(spec.gamma(p_arr), dtype=float))
    t0 = spec.start
    lo_j, hi_j = spec.shape_j.window
    upper = min(t, hi_j)
    pref = evaluate(spec.shape_n, t)
    out = np.zeros(p_arr.shape, dtype=complex)
    if pref != 0.0 and upper > t0:
        brk = [lo_j, hi_j]
        if spec.shape_j.kind == pulses.TABULATED:
            brk += [s for s, _ in spec.shape_j.samples]
        for i, g in enumerate(gammas):
            integral = oscillatory_integral(
                lambda s: evaluate(spec.shape_j, s),
                max(t0, lo_j), upper, gamma=float(g), t=t, tol=tol,
                breakpoints=brk)
            out[i] = pref * (-1j) * integral
    return out if np.ndim(p) else complex(out[0])


# ---------------------------------------------------------------------------
# projector orders


def _eigsystem(mat: np.ndarray):
    mat = np.asarray(mat, dtype=complex)
    if np.allclose(mat, mat.conj().T, rtol=1e-12, atol=1e-12):
        w, v = np.linalg.eigh(mat)
        return w.astype(complex), v, v.conj().T
    w, v = np.linalg.eig(mat)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > 1e8:
        raise DecompositionError(
            f"matrix is numerically defective (eigenvector cond {cond:.2g})")
    return w, v, np.linalg.inv(v)


def _as_omega_fn(omega) -> Callable[[float], np.ndarray]:
    if callable(omega):
        return omega
    const = np.asarray(omega, dtype=complex)
    return lambda s: const


def projector_first_order(delta: np.ndarray, xi: np.ndarray, omega,
                          t0: float, t: float, tol: float = 1e-10) -> np.ndarray:
    """First projector order P1(t) = -i int U_xi(s,t) W(s) U_delta^dag(s,t) ds
    for time-independent delta/xi and a constant or callable coupling W.

    Uses eigendecomposition plus scalar oscillatory quadrature per element;
    falls back to dense time stepping of the linear Sylvester ODE when a
    matrix is defective.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    omega_fn = _as_omega_fn(omega)
    try:
        wx, vx, vxi = _eigsystem(xi)
        wd, vd, vdi = _eigsystem(delta)
    except DecompositionError:
        return sylvester_ode(delta, xi, omega_fn, t0, np.array([t]))[-1]

    gam = wx[:, None] - wd[None, :]
    if not callable(omega):
        om = vxi @ np.asarray(omega, dtype=complex) @ vd
        tau = t - t0
        x = gam * tau
        small = np.abs(x) < 1e-8
        safe = np.where(small, 1.0, gam)
        tilde = np.where(small,
                         -1j * om * tau * (1.0 - 0.5j * x),
                         -om * (1.0 - np.exp(-1j * x)) / safe)
        return vx @ tilde @ vdi

    def tilted(s: float) -> np.ndarray:
        return vxi @ np.asarray(omega_fn(s), dtype=complex) @ vd

    tilde = -1j * matrix_kernel_integral(tilted, gam.real, t0, t, t=t, tol=tol)
    return vx @ tilde @ vdi


def first_order_projector_fn(delta, xi, omega, t0: float,
                             tol: float = 1e-10) -> Callable[[float], np.ndarray]:
    """Callable t -> P1(t); cheap closed form for constant couplings."""
    return lambda t: projector_first_order(delta, xi, omega, t0, t, tol)


def projector_order(ell: int, lower: Sequence[Callable[[float], np.ndarray]],
                    delta: np.ndarray, xi: np.ndarray, omega,
                    t0: float, t: float, tol: float = 1e-10) -> np.ndarray:
    """Projector order P_ell(t) from the lower-order callables.

    ``lower`` must hold P_0 .. P_{ell-1} as functions of time.  Order zero
    returns the zero matrix (initial condition), and every even order
    vanishes identically because P_0 = 0.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    nb, na = xi.shape[0], delta.shape[0]
    if ell == 0:
        return np.zeros((nb, na), dtype=complex)
    if len(lower) < ell:
        raise ValueError(f"need P_0..P_{ell-1}, got {len(lower)} callables")
    omega_fn = _as_omega_fn(omega)

    if ell == 1:
        def inhom(s: float) -> np.ndarray:
            p0 = lower[0](s)
            return omega_fn(s) - p0 @ omega_fn(s).conj().T @ p0
    else:
        def inhom(s: float) -> np.ndarray:
            acc = np.zeros((nb, na), dtype=complex)
            om_dag = omega_fn(s).conj().T
            for k in range(ell):
                acc -= lower[ell - 1 - k](s) @ om_dag @ lower[k](s)
            return acc

    wx, vx, vxi = _eigsystem(xi)
    wd, vd, vdi = _eigsystem(delta)
    gam = (wx[:, None] - wd[None, :]).real

    def tilted(s: float) -> np.ndarray:
        return vxi @ inhom(s) @ vd

    tilde = -1j * matrix_kernel_integral(tilted, gam, t0, t, t=t, tol=tol)
    return vx @ tilde @ vdi


def projector_series(delta, xi, omega, t0: float, order: int,
                     tol: float = 1e-10) -> list[Callable[[float], np.ndarray]]:
    """Callables [P_0, .., P_order]; even orders are returned as zeros."""
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    nb, na = xi.shape[0], delta.shape[0]
    zero = np.zeros((nb, na), dtype=complex)
    fns: list[Callable[[float], np.ndarray]] = [lambda t: zero]
    for ell in range(1, order + 1):
        if ell % 2 == 0:
            fns.append(lambda t: zero)
            continue
        if ell == 1:
            fns.append(first_order_projector_fn(delta, xi, omega, t0, tol))
        else:
            captured = list(fns)
            fns.append(lambda t, _l=ell, _c=captured:
                       projector_order(_l, _c, delta, xi, omega, t0, t, tol))
    return fns


def sylvester_ode(delta: np.ndarray, xi: np.ndarray, inhom,
                  t0: float, t_eval: np.ndarray,
                  rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Dense time stepping of i dP/dt = xi P - P delta + F(t), P(t0) = 0.

    Oracle / fallback route for the projector integrals.  Returns P at the
    requested times, shape (nt, nb, na).
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    fn = _as_omega_fn(inhom)
    nb, na = xi.shape[0], delta.shape[0]

    def rhs(s, y):
        P = y.reshape(nb, na)
        return (-1j * (xi @ P - P @ delta + fn(s))).ravel()

    sol = solve_ivp(rhs, (t0, float(t_eval[-1])), np.zeros(nb * na, complex),
                    t_eval=t_eval, rtol=rtol, atol=atol)
    return sol.y.T.reshape(len(t_eval), nb, na)


def riccati_ode(delta: np.ndarray, xi: np.ndarray, omega,
                t0: float, t_eval: np.ndarray,
                rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """Dense integration of the full nonlinear projector ODE

        i dP/dt = xi P - P delta + W - P W^dag P,  P(t0) = 0.

    Reference route for order-by-order residual checks.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    fn = _as_omega_fn(omega)
    nb, na = xi.shape[0], delta.shape[0]

    def rhs(s, y):
        P = y.reshape(nb, na)
        W = fn(s)
        return (-1j * (xi @ P - P @ delta + W - P @ W.conj().T @ P)).ravel()

    sol = solve_ivp(rhs, (t0, float(t_eval[-1])), np.zeros(nb * na, complex),
                    t_eval=t_eval, rtol=rtol, atol=atol)
    return sol.y.T.reshape(len(t_eval), nb, na)


# ---------------------------------------------------------------------------
# time-independent comparison generators


def _inv(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.inv(np.asarray(mat, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError(f"{what} is singular") from exc


def markov_hamiltonian(delta, xi, omega) -> np.ndarray:
    """Memoryless elimination: delta - W^dag xi^-1 W."""
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    return delta - omega.conj().T @ _inv(np.atleast_2d(xi), "xi") @ omega


def paulisch_hamiltonian(delta, xi, omega) -> np.ndarray:
    """First-memory correction: (1 + W^dag xi^-2 W)^-1 (delta - W^dag xi^-1 W)."""
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    xi_inv = _inv(np.atleast_2d(xi), "xi")
    factor = np.eye(delta.shape[0]) + omega.conj().T @ xi_inv @ xi_inv @ omega
    return _inv(factor, "1 + W^dag xi^-2 W") @ markov_hamiltonian(delta, xi, omega)


def sanz_hamiltonian(delta, xi, omega) -> np.ndarray:
    """Unitarity-restoring correction:
    delta - W^dag xi^-1 W - (1/2){W^dag xi^-2 W, delta}."""
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    xi_inv = _inv(np.atleast_2d(xi), "xi")
    a = omega.conj().T @ xi_inv @ xi_inv @ omega
    return markov_hamiltonian(delta, xi, omega) - 0.5 * (a @ delta + delta @ a)


def commuting_limit_hamiltonian(delta, xi, omega, *,
                                degeneracy_rtol: float = 1e-9) -> np.ndarray:
    """First-order generator for diagonal commuting delta/xi after dropping
    the oscillating terms:

        delta_{lm} - sum_k W^dag_{lk} W_{km} / (xi_kk - delta_mm).
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    for name, m in (("delta", delta), ("xi", xi)):
        if not np.allclose(m, np.diag(np.diag(m))):
            raise ValueError(f"{name} must be diagonal for the commuting limit")
    dd = np.diag(delta).real
    xd = np.diag(xi).real
    gamma_star = float(np.min(xd) - np.max(dd))
    gaps = xd[:, None] - dd[None, :]                     # (k, m)
    tolerance = degeneracy_rtol * max(abs(gamma_star), 1.0)
    if np.any(np.abs(gaps) < tolerance):
        k, m = np.unravel_index(np.argmin(np.abs(gaps)), gaps.shape)
        raise PoleError(
            f"degenerate pair xi[{k}]={xd[k]:g}, delta[{m}]={dd[m]:g}",
            denominator=f"xi_{k}{k} - delta_{m}{m}")
    second = np.einsum('kl,km,km->lm', omega.conj(), omega, 1.0 / gaps)
    return delta - second


# ---------------------------------------------------------------------------
# validity report


@dataclass
class ValidityReport:
    """Quantitative check of the elimination conditions: manifold gap,
    intra-manifold width, envelope smoothness, coupling-to-gap ratio and the
    derived norm bound estimate (dimensionless, must stay well below 1)."""

    gamma_star: float
    epsilon_max: float
    smoothness: float
    coupling_ratio: float
    bound_value: float
    verdict: str
    support: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "gamma_star_rad_s": self.gamma_star,
            "epsilon_max_rad_s": self.epsilon_max,
            "smoothness": self.smoothness,
            "coupling_ratio": self.coupling_ratio,
            "bound_value": self.bound_value,
            "verdict": self.verdict,
            "support": self.support,
        }


def validity_report(system, t0: float, t: float,
                    n_time_samples: int = 201) -> ValidityReport:
    """Evaluate the elimination validity conditions for a system spec.

    ``system`` must expose delta_spectrum(), xi_spectrum() (arrays over the
    configured momentum support) and omega_matrix(t) (coupling magnitudes).
    The verdict is 'fail' when the manifolds touch or the coupling reaches
    the gap, 'warn' when coupling_ratio or smoothness exceeds 0.1, and
    'pass' otherwise.  A report is always produced.
    """
    ds = np.asarray(system.delta_spectrum(), dtype=float)
    xs = np.asarray(system.xi_spectrum(), dtype=float)
    gamma_star = float(np.min(xs) - np.max(ds))
    epsilon_max = float((np.max(xs) - np.min(ds)) - gamma_star)

    ts = np.linspace(t0, t, n_time_samples)
    norms = np.array([np.linalg.norm(system.omega_matrix(float(s)), 2)
                      for s in ts])
    omega_max = float(norms.max())

    dt = ts[1] - ts[0] if len(ts) > 1 else 1.0
    deriv = np.gradient(np.array([system.omega_matrix(float(s)) for s in ts]),
                        dt, axis=0)
    deriv_norm = float(np.max([np.linalg.norm(d, 2) for d in deriv]))

    if gamma_star > 0:
        coupling_ratio = omega_max / gamma_star
        smoothness = np.pi * deriv_norm * (t - t0) / gamma_star
        h = np.pi / gamma_star
        phase_span = min(2.0, np.pi * abs(epsilon_max) / gamma_star)
        kernel = 0.0
        for s in ts:
            w_now = system.omega_matrix(float(s))
            w_lag = system.omega_matrix(float(s - h))
            kernel = max(kernel,
                         np.linalg.norm(w_now - w_lag, 2)
                         + phase_span * np.linalg.norm(w_lag, 2))
        bound_value = (np.pi / gamma_star) * omega_max + 0.5 * (t - t0) * kernel
    else:
        coupling_ratio = np.inf
        smoothness = np.inf
        bound_value = np.inf

    if gamma_star <= 0 or coupling_ratio >= FAIL_COUPLING_RATIO:
        verdict = "fail"
    elif coupling_ratio > WARN_COUPLING_RATIO or smoothness > WARN_SMOOTHNESS:
        verdict = "warn"
    else:
        verdict = "pass"

    support = {
        "n_delta_samples": int(ds.size),
        "n_xi_samples": int(xs.size),
        "delta_range_rad_s": [float(ds.min()), float(ds.max())],
        "xi_range_rad_s": [float(xs.min()), float(xs.max())],
        "time_window_s": [float(t0), float(t)],
    }
    sup = getattr(system, "momentum_support", None)
    if callable(sup):
        support["momentum_support"] = sup()
    return ValidityReport(gamma_star, epsilon_max, float(smoothness),
                          float(coupling_ratio), float(bound_value), verdict,
                          support)


# ---------------------------------------------------------------------------
# effective Hamiltonian assembly


@dataclass
class EffectiveHamiltonian:
    """Order-N effective generator on the retained levels.

    ``block`` acts only on the relevant levels; with all couplings off it
    reduces exactly to the bare diagonal.  The first-order generator is not
    hermitian in general.
    """

    order: int
    block: BlockOperator
    validity: ValidityReport
    metadata: dict = field(default_factory=dict)

    def matrix(self, ladder, family: int, t: float) -> np.ndarray:
        return self.block.to_matrix(ladder, family, t)


class _SharedMatrixCache:
    """Evaluate an expensive matrix function once per distinct time."""

    def __init__(self, fn: Callable[[float], np.ndarray]):
        self._fn = fn
        self._t: float | None = None
        self._val: np.ndarray | None = None

    def __call__(self, t: float) -> np.ndarray:
        if self._t != t:
            self._val = self._fn(t)
            self._t = t
        return self._val


def finite_effective_matrix_fn(system, order: int) -> Callable[[float], np.ndarray]:
    """Dense effective generator t -> delta + W^dag sum_l P_l(t) for a
    finite-matrix system (no center-of-mass ladder)."""
    delta = system.delta_matrix
    xi = system.xi_matrix
    omega = system.omega_matrix_fn if system.time_dependent_omega else system.omega_static
    fns = projector_series(delta, xi, omega, system.coupling_window()[0], order)
    omega_fn = _as_omega_fn(omega)

    def matrix_fn(t: float) -> np.ndarray:
        p_sum = sum(fn(t) for fn in fns[1:])
        return delta + omega_fn(t).conj().T @ p_sum

    return matrix_fn


def _finite_effective_block(system, order: int) -> BlockOperator:
    cache = _SharedMatrixCache(finite_effective_matrix_fn(system, order))
    relevant = system.space.relevant
    terms = []
    for i, row in enumerate(relevant):
        for j, col in enumerate(relevant):
            def coeff(p, t, _i=i, _j=j):
                return np.broadcast_to(cache(t)[_i, _j], np.shape(p))
            terms.append(LadderTerm(row, col, 0, coeff))
    space = InternalSpace(
        levels=relevant,
        frequencies=tuple(system.space.frequency(l) for l in relevant),
        relevant=relevant)
    return BlockOperator(space, terms, time_dependent=True)


class _ClosedSCoefficient:
    """Closed-form S coefficient with per-grid detuning caching.

    The grid momenta are constant along a propagation run, so gamma(p) and
    its pole check run once per distinct grid object; per-call work is the
    scalar envelope prefactor plus a handful of vector operations.
    """

    def __init__(self, descriptor, rwa: bool):
        sn, sj = descriptor.shape_n, descriptor.shape_j
        if sn.kind not in (pulses.BOX, pulses.SINE_SQUARED, pulses.BLACKMAN) \
                or sj.kind != sn.kind or sn.window != sj.window:
            raise ValueError("closed form needs matching box, sine_squared "
                             "or blackman envelopes on a common window")
        self.sn, self.sj = sn, sj
        self.gamma_fn = descriptor.gamma_fn
        self.pf = descriptor.phase_freq
        self.rwa = rwa
        self.lo = sn.window[0]
        self.T = sj.duration
        self.wT = 2.0 * np.pi / self.T
        self._cache: dict = {}

    def _gamma(self, p) -> np.ndarray:
        key = id(p)
        entry = self._cache.get(key)
        if entry is not None and entry[0] is p:
            return entry[1]
        gamma = np.asarray(self.gamma_fn(p), dtype=float)
        scale = max(float(np.max(np.abs(gamma))), self.wT)
        dens = {"gamma": gamma}
        if not self.rwa and self.sn.kind != pulses.BOX:
            dens["gamma +- 2*pi/T"] = np.minimum(np.abs(gamma - self.wT),
                                                 np.abs(gamma + self.wT))
            if self.sn.kind == pulses.BLACKMAN:
                dens["gamma +- 4*pi/T"] = np.minimum(
                    np.abs(gamma - 2 * self.wT), np.abs(gamma + 2 * self.wT))
        _pole_check(gamma, dens, scale)
        if self.rwa and float(np.min(np.abs(gamma))) < RWA_GAMMA_FACTOR * self.wT:
            warnings.warn(
                "rotating-wave simplified S requested with |gamma| below "
                f"{RWA_GAMMA_FACTOR:g} x (2*pi/T); result is unreliable",
                stacklevel=2)
        if len(self._cache) > 16:
            self._cache.clear()
        self._cache[key] = (p, gamma)
        return gamma

    def __call__(self, p, t):
        gamma = self._gamma(p)
        pref = pulses.value_at(self.sn, t)
        if pref == 0.0:
            return np.zeros_like(gamma, dtype=complex)
        if self.rwa:
            val = -pref * pulses.value_at(self.sj, t) / gamma
        else:
            tau = t - self.lo
            e = np.exp(-1j * gamma * tau)
            if self.sn.kind == pulses.BOX:
                kernel = -self.sj.a0 * (1.0 - e) / gamma
            elif self.sn.kind == pulses.SINE_SQUARED:
                ep = np.exp(2j * np.pi * tau / self.T)
                kernel = -0.5 * self.sj.a0 * (
                    (1.0 - e) / gamma
                    - 0.5 * ((ep - e) / (gamma + self.wT)
                             + (np.conj(ep) - e) / (gamma - self.wT)))
            else:
                e2 = np.exp(2j * np.pi * tau / self.T)
                e4 = e2 * e2
                kernel = -(self.sj.a0 * (1.0 - e) / gamma
                           - 0.5 * self.sj.a1 * ((e2 - e) / (gamma + self.wT)
                                                 + (np.conj(e2) - e) / (gamma - self.wT))
                           + 0.5 * self.sj.a2 * ((e4 - e) / (gamma + 2 * self.wT)
                                                 + (np.conj(e4) - e) / (gamma - 2 * self.wT)))
            val = pref * kernel
        if self.pf:
            val = val * np.exp(-1j * self.pf * t)
        return val


def _s_coeff(descriptor, t0: float, s_mode: str, rwa: bool, tol: float):
    if s_mode == "closed":
        return _ClosedSCoefficient(descriptor, rwa)

    spec = SIntegralSpec(descriptor.shape_n, descriptor.shape_j,
                         descriptor.gamma_fn, t0)
    pf = descriptor.phase_freq

    def coeff(p, t):
        val = s_integral_quadrature(spec, p, t, tol=tol)
        if pf:
            val = val * np.exp(-1j * pf * t)
        return val
    return coeff


def effective_hamiltonian(system, order: int = 1, s_mode: str = "closed",
                          *, rwa: bool = False, quadrature_tol: float = 1e-10,
                          validity_window: tuple[float, float] | None = None,
                          on_invalid: str = "raise") -> EffectiveHamiltonian:
    """Build the order-N effective generator for a built-in system spec.

    Systems with center-of-mass motion support first order only (the series
    machinery for higher orders is restricted to finite-matrix systems).
    The validity report is computed first: a 'fail' verdict raises
    ValidityError (unless on_invalid='warn'), a 'warn' verdict is recorded
    in the metadata.
    """
    if s_mode not in ("closed", "quadrature"):
        raise ValueError(f"unknown s_mode {s_mode!r}")
    if order < 1:
        raise ValueError("order must be >= 1")
    t0, t1 = validity_window or system.coupling_window()
    report = validity_report(system, t0, t1)
    if report.verdict == "fail" and on_invalid == "raise":
        raise ValidityError(
            f"elimination invalid: gamma_star={report.gamma_star:g} rad/s, "
            f"coupling_ratio={report.coupling_ratio:g}", report=report)

    metadata = {
        "system": system.kind,
        "order": order,
        "s_mode": s_mode,
        "rwa": rwa,
        "gauge_offset_rad_s": getattr(system, "gauge_offset", 0.0),
        "notes": list(getattr(system, "notes", ())),
    }
    if rwa:
        metadata["rwa_dropped_terms"] = [
            "exp(-i*gamma*(t-t0)) transients", "2*pi/T denominator shifts"]
    if report.verdict != "pass":
        metadata["validity_warning"] = report.verdict

    if system.is_finite:
        if order > 1 and system.time_dependent_omega:
            raise ValueError("higher orders need a constant coupling matrix")
        block = _finite_effective_block(system, order)
        return EffectiveHamiltonian(order, block, report, metadata)

    if order != 1:
        raise ValueError("systems with center-of-mass motion support order 1 only")

    relevant = system.space.relevant
    space = InternalSpace(
        levels=relevant,
        frequencies=tuple(system.space.frequency(l) for l in relevant),
        relevant=relevant)
    terms: list[LadderTerm] = []
    for level in relevant:
        const = system.delta_constants[level]
        kin = system.kinetic_scale

        def diag_coeff(p, t, _c=const, _k=kin):
            p = np.asarray(p, dtype=float)
            return (_k * p * p + _c).astype(complex)
        diag_coeff.time_independent = True
        terms.append(LadderTerm(level, level, 0, diag_coeff))
    for d in system.eff_diag:
        terms.append(LadderTerm(d.row, d.col, 0,
                                _s_coeff(d, t0, s_mode, rwa, quadrature_tol)))
    for d in system.eff_offdiag:
        terms.append(LadderTerm(d.row, d.col, d.steps,
                                _s_coeff(d, t0, s_mode, rwa, quadrature_tol)))
    block = BlockOperator(space, terms, time_dependent=True)
    return EffectiveHamiltonian(1, block, report, metadata)
