"""Fixed-step RK4 on the truncated Fourier-coefficient ODE.

    d/dt h(n) = i (n.w)^3 h(n) - sum_{m} h(n - m) h(m) (i m.w),   |n|, |m|, |n - m| <= R

This path shares nothing with the exponential-polynomial solver except the
lattice helpers, so agreement between the two is a meaningful check.  The
nonlinear sum is accumulated over unordered pairs ``{m, n - m}``, whose
combined weight ``i (m.w + (n - m).w)`` vanishes exactly for ``n = 0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .lattice import CoeffField, as_frequency, box_indices, l1, phase

MODULE = "reference_integrator"

STABILITY_LIMIT = 2.5


@dataclass(frozen=True)
class OdeState:
    t: float
    c: CoeffField

    def to_csv(self) -> str:
        """Snapshot lines ``n1,...,n_nu,re,im``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"n{j + 1}" for j in range(self.c.nu)] + ["re", "im"])
        for n, v in self.c.entries.items():
            w.writerow(list(n) + [repr(v.real), repr(v.imag)])
        return buf.getvalue()


class GalerkinSystem:
    """Right-hand side of the truncated system on the box ``|n| <= R``."""

    def __init__(self, omega, radius: int, nonlinear: bool = True):
        om = as_frequency(omega)
        self.omega = om
        self.radius = radius
        self.nonlinear = nonlinear
        self.index = box_indices(om.nu, radius)
        pos = {n: i for i, n in enumerate(self.index)}
        freqs = [phase(n, om) for n in self.index]
        self.linear = 1j * np.array([w * w * w for w in freqs])
        self.zero_slot = pos.get(tuple([0] * om.nu))
        ia, ib, iout, wt = [], [], [], []
        for a_i, a in enumerate(self.index):
            for b_i in range(a_i, len(self.index)):
                b = self.index[b_i]
                n = tuple(x + y for x, y in zip(a, b))
                if l1(n) > radius:
                    continue
                ia.append(a_i)
                ib.append(b_i)
                iout.append(pos[n])
                wt.append(freqs[a_i] if a_i == b_i else freqs[a_i] + freqs[b_i])
        self.ia = np.array(ia, dtype=np.int64)
        self.ib = np.array(ib, dtype=np.int64)
        self.iout = np.array(iout, dtype=np.int64)
        self.weight = 1j * np.array(wt)
        self.size = len(self.index)

    def rhs(self, h: np.ndarray) -> np.ndarray:
        out = self.linear * h
        if self.nonlinear and self.ia.size:
            terms = h[self.ia] * h[self.ib] * self.weight
            acc = (np.bincount(self.iout, weights=terms.real, minlength=self.size)
                   + 1j * np.bincount(self.iout, weights=terms.imag, minlength=self.size))
            out = out - acc
        return out

    def vector(self, c: CoeffField) -> np.ndarray:
        return np.array([c[n] for n in self.index], dtype=complex)

    def field(self, h: np.ndarray) -> CoeffField:
        return CoeffField(self.omega.nu, self.radius, dict(zip(self.index, h)))

    def max_stiffness(self) -> float:
        return float(np.max(np.abs(self.linear))) if self.size else 0.0


def _rk4(system: GalerkinSystem, h: np.ndarray, dt: float, steps: int) -> np.ndarray:
    z = system.zero_slot
    h0 = h[z] if z is not None else None
    f = system.rhs
    for _ in range(steps):
        k1 = f(h)
        k2 = f(h + 0.5 * dt * k1)
        k3 = f(h + 0.5 * dt * k2)
        k4 = f(h + dt * k3)
        h = h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if z is not None and h[z] != h0:
            raise AssertionError("mode zero drifted during RK4 stepping")
    return h


def _check(system: GalerkinSystem, dt: float, t_end: float):
    if not dt > 0:
        raise InvalidArgument("dt must be positive", module=MODULE)
    if not t_end >= 0:
        raise InvalidArgument("t_end must be nonnegative", module=MODULE)
    stiff = dt * system.max_stiffness()
    if stiff > STABILITY_LIMIT:
        raise InvalidArgument(
            f"dt * max|(n.w)^3| = {stiff:.3f} exceeds the stability limit {STABILITY_LIMIT}",
            module=MODULE)


def rk4_integrate(c0: CoeffField, omega, t_end: float, dt: float, nonlinear: bool = True,
                  radius: int | None = None) -> OdeState:
    """Integrate to ``t_end`` with ``ceil(t_end/dt)`` equal steps (each at most ``dt``)."""
    radius = c0.radius if radius is None else radius
    system = GalerkinSystem(omega, radius, nonlinear)
    _check(system, dt, t_end)
    steps = int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = system.vector(c0)
    if steps:
        h = _rk4(system, h, t_end / steps, steps)
    return OdeState(float(t_end), system.field(h))


def rk4_samples(c0: CoeffField, omega, times, dt: float, nonlinear: bool = True,
                radius: int | None = None):
    """States at increasing ``times``; returns ``(index list, array[len(times), len(index)])``.

    Between consecutive sample times the step is shrunk so the samples are hit exactly.
    """
    radius = c0.radius if radius is None else radius
    system = GalerkinSystem(omega, radius, nonlinear)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise InvalidArgument("sample times must be nonnegative and increasing", module=MODULE)
    _check(system, dt, float(times[-1]) if times.size else 0.0)
    h = system.vector(c0)
    out = np.empty((times.size, system.size), dtype=complex)
    t_prev = 0.0
    for i, t in enumerate(times):
        span = t - t_prev
        steps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
        if steps:
            h = _rk4(system, h, span / steps, steps)
        out[i] = h
        t_prev = t
    return system.index, out


def linear_solution(c0: CoeffField, omega, t: float) -> CoeffField:
    """Closed-form linear flow ``c0(n) exp(i t (n.w)^3)``."""
    om = as_frequency(omega)
    return CoeffField(c0.nu, c0.radius,
                      {n: v * np.exp(1j * t * phase(n, om) ** 3) for n, v in c0.entries.items()})


def richardson_order(c0: CoeffField, omega, t_end: float, steps: int,
                     nonlinear: bool = True) -> float:
    """Observed order from ``steps``, ``2 steps`` and ``4 steps`` equal steps (self-convergence)."""
    if steps < 1 or not t_end > 0:
        raise InvalidArgument("need steps >= 1 and t_end > 0", module=MODULE)
    system = GalerkinSystem(omega, c0.radius, nonlinear)
    _check(system, t_end / steps, t_end)
    h0 = system.vector(c0)
    sols = [_rk4(system, h0, t_end / s, s) for s in (steps, 2 * steps, 4 * steps)]
    e1 = np.max(np.abs(sols[0] - sols[1]))
    e2 = np.max(np.abs(sols[1] - sols[2]))
    return math.log2(e1 / e2)


__all__ = ["OdeState", "GalerkinSystem", "rk4_integrate", "rk4_samples", "linear_solution",
           "richardson_order", "STABILITY_LIMIT"]
