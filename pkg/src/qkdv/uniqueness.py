"""Integral-equation defects and the contraction estimate for two trajectories.

A coefficient trajectory ``h(t, n)`` of a solution must satisfy

    h(t,n) = h(0,n) e^{it(n.w)^3} - sum_m int_0^t h(s,n-m) h(s,m) (i m.w) e^{i(t-s)(n.w)^3} ds

and two such trajectories with the same initial data differ by at most

    B^{k+1} (2^{nu+1} C0 rho^{-nu} |w| t)^k / k! * e^{-rho|n|/2} * sum_{alpha in B^(k)} prod alpha_j!

for every ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .combinatorics import build_B, certified_C0, factorial_sum, multi_factorial, BUILD_B_LIMIT
from .errors import InconsistentInitialData, InvalidArgument
from .exp_poly import ExpPoly, ep_eval, ep_outer_integral
from .lattice import FrequencyVector, as_frequency, box_indices, l1, phase, phase_cube

MODULE = "uniqueness_verifier"

K_RANGE = 12
INITIAL_TOL = 1e-12


@dataclass
class ModeTrajectory:
    """Minimal trajectory: exponential-polynomial modes on a box, valid on ``[0, t_max]``."""

    coeffs: dict
    omega: FrequencyVector
    box_radius: int
    t_max: float

    @property
    def nu(self):
        return self.omega.nu


def as_modes(traj) -> ModeTrajectory:
    if isinstance(traj, ModeTrajectory):
        return traj
    return ModeTrajectory(dict(traj.coeffs), traj.omega, traj.box_radius, traj.t_max)


def project(traj, radius: int) -> ModeTrajectory:
    """Restrict a trajectory to the smaller box ``|n| <= radius``."""
    m = as_modes(traj)
    if radius > m.box_radius:
        raise InvalidArgument("projection radius exceeds the box", module=MODULE)
    return ModeTrajectory({n: f for n, f in m.coeffs.items() if l1(n) <= radius},
                          m.omega, radius, m.t_max)


def _flux(modes: Mapping, n, om) -> ExpPoly:
    """``sum_m h(n - m) h(m) (i m.w)``, ``m`` in lexicographic order."""
    cs, ps, ths = [], [], []
    for m, g in modes.items():
        f = modes.get(tuple(a - b for a, b in zip(n, m)))
        if f is None or f.is_zero() or g.is_zero():
            continue
        w = 1j * phase(m, om)
        if w == 0:
            continue
        cs.append(w * np.multiply.outer(f.coeffs, g.coeffs).ravel())
        ps.append(np.add.outer(f.powers, g.powers).ravel())
        ths.append(np.add.outer(f.phases, g.phases).ravel())
    if not cs:
        return ExpPoly.zero()
    return ExpPoly(np.concatenate(cs), np.concatenate(ps), np.concatenate(ths),
                   max_terms=10 ** 7)


def integral_equation_rhs(traj, n) -> ExpPoly:
    """Right side of the integral equation for mode ``n`` as an exponential polynomial."""
    m = as_modes(traj)
    n = tuple(n)
    theta = phase_cube(n, m.omega)
    h0 = m.coeffs[n].value_at_zero() if n in m.coeffs else 0j
    lin = ExpPoly.monomial(h0, 0, theta) if h0 != 0 else ExpPoly.zero()
    flux = _flux(m.coeffs, n, m.omega)
    if flux.is_zero():
        return lin
    return lin - ep_outer_integral(flux, theta, t_scale=max(m.t_max, 1e-300))


def integral_equation_defects(traj, t_samples) -> dict:
    """Per-mode ``max_t |h(t,n) - RHS(t,n)|`` over the whole box, absent modes included."""
    m = as_modes(traj)
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    out = {}
    for n in box_indices(m.nu, m.box_radius):
        f = m.coeffs.get(n, ExpPoly.zero())
        rhs = integral_equation_rhs(m, n)
        if f.is_zero() and rhs.is_zero():
            continue
        out[n] = float(np.max(np.abs(ep_eval(f, t_samples) - ep_eval(rhs, t_samples))))
    return out


def verify_integral_equations(traj, t_samples) -> float:
    """Largest integral-equation defect over modes and sample times."""
    d = integral_equation_defects(traj, t_samples)
    return max(d.values(), default=0.0)


@dataclass
class TrajectoryPair:
    """Two trajectories with equal initial data and a common envelope ``B e^{-rho|n|}``."""

    c_traj: ModeTrajectory
    h_traj: ModeTrajectory
    B: float
    rho: float

    def __post_init__(self):
        self.c_traj = as_modes(self.c_traj)
        self.h_traj = as_modes(self.h_traj)
        if self.c_traj.omega != self.h_traj.omega:
            raise InvalidArgument("trajectories use different frequency vectors", module=MODULE)
        R = min(self.c_traj.box_radius, self.h_traj.box_radius)
        if self.c_traj.box_radius != R:
            self.c_traj = project(self.c_traj, R)
        if self.h_traj.box_radius != R:
            self.h_traj = project(self.h_traj, R)
        if not (self.B >= 0 and self.rho > 0):
            raise InvalidArgument("need B >= 0 and rho > 0", module=MODULE)
        gap = self.initial_gap()
        if gap > INITIAL_TOL:
            raise InconsistentInitialData(f"initial data differ by {gap:.3e}", module=MODULE)

    @property
    def omega(self):
        return self.c_traj.omega

    @property
    def t_max(self):
        return min(self.c_traj.t_max, self.h_traj.t_max)

    def indices(self):
        return sorted(set(self.c_traj.coeffs) | set(self.h_traj.coeffs))

    def _mode(self, traj, n):
        return traj.coeffs.get(n, ExpPoly.zero())

    def initial_gap(self) -> float:
        return max((abs(self._mode(self.c_traj, n).value_at_zero()
                        - self._mode(self.h_traj, n).value_at_zero()) for n in self.indices()),
                   default=0.0)

    def differences(self, t_samples) -> dict:
        """Per-mode ``max_t |h(t,n) - c(t,n)|``."""
        out = {}
        for n in self.indices():
            a = ep_eval(self._mode(self.c_traj, n), t_samples)
            b = ep_eval(self._mode(self.h_traj, n), t_samples)
            out[n] = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        return out

    @classmethod
    def from_envelope(cls, c_traj, h_traj, B0: float, kappa: float) -> "TrajectoryPair":
        """Use the a-priori solution envelope ``2 B0 e^{-kappa|n|/2}``."""
        return cls(c_traj, h_traj, 2.0 * B0, kappa / 2.0)


def exponent_factorial_sum(k: int) -> int:
    """``sum over alpha in B^(k) of alpha!``; past the enumeration limit the larger
    ``factorial_sum(k + 1, k)`` over all weight-``k`` vectors is used."""
    if k < 1:
        raise InvalidArgument("k must be >= 1", module=MODULE)
    if k <= BUILD_B_LIMIT:
        return sum(multi_factorial(a) for a in build_B(k))
    return factorial_sum(k + 1, k)


def contraction_bound(pair: TrajectoryPair, k: int, t: float, C0: float | None = None,
                      n=None) -> float:
    """Ceiling on ``|h(t,n) - c(t,n)|``; without ``n`` the weight ``e^{-rho|n|/2}`` is omitted."""
    C0 = certified_C0() if C0 is None else float(C0)
    if t < 0:
        raise InvalidArgument("t must be nonnegative", module=MODULE)
    return _bound(pair.B, pair.rho, pair.omega, k, t, C0, n)


def _bound(B, rho, omega, k, t, C0, n=None):
    om = as_frequency(omega)
    nu = om.nu
    if B == 0:
        return 0.0
    rate = 2.0 ** (nu + 1) * C0 * rho ** (-nu) * om.norm * t
    log_val = (k + 1) * math.log(B) + (k * math.log(rate) if rate > 0 else -math.inf) \
        - math.lgamma(k + 1) + math.log(exponent_factorial_sum(k))
    val = math.exp(log_val) if log_val > -math.inf else 0.0
    if n is not None:
        val *= math.exp(-rho * l1(n) / 2.0)
    return val


def uniqueness_horizon(B, rho, omega, C0) -> float:
    """``rho^nu / (4 B 2^nu C0^nu |w|)``, below which the bound tends to zero in ``k``."""
    om = as_frequency(omega)
    return rho ** om.nu / (4.0 * B * 2 ** om.nu * C0 ** om.nu * om.norm)


def defect_allowance(pair: TrajectoryPair, defects) -> float:
    """Propagated effect of integral-equation defects ``delta``: ``(1 + 2 t |w| M) * sum(delta)``,
    with ``M = sum_{|n|<=R} |n| B e^{-rho|n|}`` the weighted box mass."""
    om = pair.omega
    R = pair.c_traj.box_radius
    M = sum(l1(n) * pair.B * math.exp(-pair.rho * l1(n)) for n in box_indices(om.nu, R))
    return (1.0 + 2.0 * pair.t_max * om.norm * M) * float(sum(defects))


def assert_unique(pair: TrajectoryPair, t_samples, C0: float | None = None,
                  k_max: int = K_RANGE, defect_tol: float = 1e-8) -> dict:
    """Compare the measured weighted difference with ``min_k`` of the contraction ceiling.

    Report keys: ``max_diff`` (unweighted), ``weighted_diff``, ``best_k``,
    ``bound_at_best_k``, ``allowance``, ``defects``, ``passed``.
    """
    C0 = certified_C0() if C0 is None else float(C0)
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if np.any(t_samples > pair.t_max * (1 + 1e-12)) or np.any(t_samples < 0):
        raise InvalidArgument("sample times outside both trajectories' range", module=MODULE)
    defects = [verify_integral_equations(pair.c_traj, t_samples),
               verify_integral_equations(pair.h_traj, t_samples)]
    diffs = pair.differences(t_samples)
    max_diff = max(diffs.values(), default=0.0)
    weighted = max((d * math.exp(pair.rho * l1(n) / 2.0) for n, d in diffs.items()),
                   default=0.0)
    t_top = float(np.max(t_samples))
    bounds = [(contraction_bound(pair, k, t_top, C0), k) for k in range(1, k_max + 1)]
    best, best_k = min(bounds)
    allowance = defect_allowance(pair, defects)
    passed = (weighted <= best + allowance) and max(defects) <= defect_tol
    return {"max_diff": max_diff, "weighted_diff": weighted, "best_k": best_k,
            "bound_at_best_k": best, "allowance": allowance, "defects": defects,
            "passed": bool(passed)}


def report_json(report: dict) -> str:
    keys = ("max_diff", "best_k", "bound_at_best_k", "defects")
    return json.dumps({k: report[k] for k in keys})


def trajectory_from_samples(times, index, values, omega, radius: int,
                            degree: int = 16) -> ModeTrajectory:
    """Fit exponential polynomials to sampled coefficients.

    For each mode, ``h(t,n) e^{-it(n.w)^3}`` is fitted by a degree-``degree``
    polynomial in ``t / T`` (least squares), then rewritten as terms
    ``a_p t^p e^{it(n.w)^3}``.
    """
    om = as_frequency(omega)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=complex)
    T = float(times.max())
    if T <= 0 or times.size <= degree:
        raise InvalidArgument("need more sample times than the fit degree", module=MODULE)
    s = times / T
    vander = np.vander(s, degree + 1, increasing=True)
    modes = {}
    for j, n in enumerate(index):
        theta = phase_cube(n, om)
        g = values[:, j] * np.exp(-1j * theta * times)
        coef, *_ = np.linalg.lstsq(vander, g, rcond=None)
        powers = np.arange(degree + 1)
        modes[tuple(n)] = ExpPoly(coef / T ** powers, powers, np.full(degree + 1, theta))
    return ModeTrajectory(modes, om, radius, T)


__all__ = [
    "ModeTrajectory", "as_modes", "project", "integral_equation_rhs",
    "integral_equation_defects", "verify_integral_equations", "TrajectoryPair",
    "exponent_factorial_sum", "contraction_bound", "uniqueness_horizon", "defect_allowance",
    "assert_unique", "report_json", "trajectory_from_samples",
]
