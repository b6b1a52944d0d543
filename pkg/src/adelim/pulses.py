"""Temporal envelopes, pulse areas and amplitude calibration.

Envelopes are real-valued angular-frequency amplitudes (rad/s) that vanish
outside their window [t0, t0 + duration].  The two-photon pulse area of a
pulse pair against a reference detuning gamma0 is

    A = int 2*W1(t)*W2(t)/gamma0 dt,

with A = pi inverting the population of a resonant two-photon transition.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import CalibrationError, SingularDetuningError
from .quadrature import oscillatory_integral

BOX = "box"
SINE_SQUARED = "sine_squared"
BLACKMAN = "blackman"
TABULATED = "tabulated"

_KINDS = (BOX, SINE_SQUARED, BLACKMAN, TABULATED)


@dataclass(frozen=True)
class PulseShape:
    """Parametric envelope.  ``a1``/``a2`` are the cosine coefficients of the
    Blackman form a0 - a1*cos(2*pi*s/T) + a2*cos(4*pi*s/T); ``samples`` holds
    (t, value) rows for tabulated pulses (linearly interpolated)."""

    kind: str
    a0: float = 0.0
    t0: float = 0.0
    duration: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    samples: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.kind != TABULATED and self.duration <= 0.0:
            raise ValueError("windowed pulses need a positive duration")
        if self.kind == TABULATED:
            if len(self.samples) < 2:
                raise ValueError("tabulated pulse needs at least two samples")
            ts = [s[0] for s in self.samples]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("tabulated sample times must increase")

    @property
    def window(self) -> tuple[float, float]:
        if self.kind == TABULATED:
            return self.samples[0][0], self.samples[-1][0]
        return self.t0, self.t0 + self.duration

    def scaled(self, factor: float) -> "PulseShape":
        if self.kind == TABULATED:
            samples = tuple((t, v * factor) for t, v in self.samples)
            return replace(self, samples=samples)
        return replace(self, a0=self.a0 * factor, a1=self.a1 * factor,
                       a2=self.a2 * factor)


def box(a0: float, t0: float = 0.0, duration: float = 1.0) -> PulseShape:
    return PulseShape(BOX, a0=a0, t0=t0, duration=duration)


def sine_squared(a0: float, t0: float = 0.0, duration: float = 1.0) -> PulseShape:
    return PulseShape(SINE_SQUARED, a0=a0, t0=t0, duration=duration)


def blackman(a0: float, a1: float, a2: float, t0: float = 0.0,
             duration: float = 1.0) -> PulseShape:
    return PulseShape(BLACKMAN, a0=a0, a1=a1, a2=a2, t0=t0, duration=duration)


def tabulated(samples: Iterable[tuple[float, float]]) -> PulseShape:
    return PulseShape(TABULATED, samples=tuple((float(t), float(v))
                                               for t, v in samples))


def tabulated_from_csv(path) -> PulseShape:
    """Two-column CSV: time_s, amplitude_rad_per_s (header lines starting
    with '#' or non-numeric first field are skipped)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue
    return tabulated(rows)


def value_at(shape: PulseShape, t: float) -> float:
    """Scalar envelope value; fast path for integrator inner loops."""
    lo, hi = shape.window
    if t < lo or t > hi:
        return 0.0
    if shape.kind == BOX:
        return shape.a0
    s = t - shape.t0
    if shape.kind == SINE_SQUARED:
        return shape.a0 * math.sin(math.pi * s / shape.duration) ** 2
    if shape.kind == BLACKMAN:
        w = 2.0 * math.pi * s / shape.duration
        return shape.a0 - shape.a1 * math.cos(w) + shape.a2 * math.cos(2.0 * w)
    return float(evaluate(shape, t))


def evaluate(shape: PulseShape, t):
    """Envelope value at time t (scalar or ndarray), zero outside the window."""
    t = np.asarray(t, dtype=float)
    lo, hi = shape.window
    inside = (t >= lo) & (t <= hi)
    if shape.kind == TABULATED:
        ts = np.array([s[0] for s in shape.samples])
        vs = np.array([s[1] for s in shape.samples])
        out = np.where(inside, np.interp(t, ts, vs), 0.0)
        return out if out.ndim else float(out)
    s = np.where(inside, t - shape.t0, 0.0)
    if shape.kind == BOX:
        out = np.where(inside, shape.a0, 0.0)
    elif shape.kind == SINE_SQUARED:
        out = np.where(inside, shape.a0 * np.sin(np.pi * s / shape.duration) ** 2, 0.0)
    else:  # BLACKMAN
        w = 2.0 * np.pi * s / shape.duration
        out = np.where(inside,
                       shape.a0 - shape.a1 * np.cos(w) + shape.a2 * np.cos(2.0 * w),
                       0.0)
    return out if out.ndim else float(out)


def _sin4_antiderivative(tau: np.ndarray, period: float) -> np.ndarray:
    # int_0^tau sin^4(pi u / T) du
    w = 2.0 * np.pi * tau / period
    return 3.0 * tau / 8.0 - period * np.sin(w) / (4.0 * np.pi) \
        + period * np.sin(2.0 * w) / (32.0 * np.pi)


def pulse_area(shape1: PulseShape, shape2: PulseShape, gamma0: float,
               t_end: float, *, quadrature_tol: float = 1e-12) -> float:
    """A(t_end) = int_{t0}^{t_end} 2*W1*W2/gamma0 dt.

    Box and sine-squared pairs on a common window use the closed form;
    everything else falls back to adaptive quadrature.
    """
    if gamma0 == 0.0:
        raise SingularDetuningError("pulse area needs a nonzero reference detuning")
    t0 = min(shape1.window[0], shape2.window[0])
    if t_end <= t0:
        return 0.0
    same_window = (shape1.kind == shape2.kind
                   and shape1.window == shape2.window
                   and shape1.kind in (BOX, SINE_SQUARED))
    if same_window:
        lo, hi = shape1.window
        tau = min(t_end, hi) - lo
        if tau <= 0.0:
            return 0.0
        if shape1.kind == BOX:
            return 2.0 * shape1.a0 * shape2.a0 * tau / gamma0
        return 2.0 * shape1.a0 * shape2.a0 \
            * _sin4_antiderivative(tau, shape1.duration) / gamma0

    def integrand(s):
        return 2.0 * evaluate(shape1, s) * evaluate(shape2, s) / gamma0

    brk = set(shape1.window) | set(shape2.window)
    for sh in (shape1, shape2):
        if sh.kind == TABULATED:
            brk.update(t for t, _ in sh.samples)
    brk = sorted(brk)
    val = oscillatory_integral(integrand, t0, t_end, gamma=0.0, t=t_end,
                               tol=quadrature_tol, breakpoints=brk)
    return float(val.real)


_CLOSED_INVERSIONS = {
    # target area A -> a0 for two identical envelopes of unit ratio
    BOX: lambda area, gamma0, T: np.sqrt(area * abs(gamma0) / (2.0 * T)),
    SINE_SQUARED: lambda area, gamma0, T: np.sqrt(4.0 * area * abs(gamma0) / (3.0 * T)),
}


def calibrate_amplitude(kind: str, duration: float, gamma0: float,
                        target_area: float, *, t0: float = 0.0,
                        blackman_relative: tuple[float, float, float] = (0.42, 0.5, 0.08),
                        samples: Iterable[tuple[float, float]] | None = None,
                        max_iter: int = 200) -> float:
    """Return the a0 making a pair of identical envelopes reach target_area.

    Box and sine-squared invert their closed-form areas; Blackman (with fixed
    coefficient ratios) and tabulated shapes bisect on a0**2.
    """
    if target_area <= 0.0:
        raise ValueError("target_area must be positive")
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if gamma0 == 0.0:
        raise SingularDetuningError("calibration needs a nonzero reference detuning")

    if kind in _CLOSED_INVERSIONS:
        return float(_CLOSED_INVERSIONS[kind](target_area, gamma0, duration))

    def build(a0: float) -> PulseShape:
        if kind == BLACKMAN:
            r0, r1, r2 = blackman_relative
            return blackman(a0, a0 * r1 / r0, a0 * r2 / r0, t0=t0, duration=duration)
        if kind == TABULATED:
            base = tabulated(samples)
            peak = max(abs(v) for _, v in base.samples)
            return base.scaled(a0 / peak)
        raise ValueError(f"unknown pulse kind {kind!r}")

    def area_of(a0sq: float) -> float:
        shape = build(np.sqrt(a0sq))
        return pulse_area(shape, shape, gamma0, t0 + duration)

    # area is exactly quadratic in the common amplitude factor, so bracket
    # once and bisect on a0^2
    ref = area_of(1.0)
    if ref <= 0.0:
        raise CalibrationError("pulse pair has non-positive area at unit amplitude")
    lo, hi = 0.0, 4.0 * target_area / ref
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if area_of(mid) < target_area:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    else:
        raise CalibrationError("amplitude bisection did not converge")
    a0 = float(np.sqrt(0.5 * (lo + hi)))
    check = area_of(a0 * a0)
    if abs(check - target_area) > 1e-10 * target_area:
        raise CalibrationError(
            f"calibrated area {check:.15g} misses target {target_area:.15g}")
    return a0
