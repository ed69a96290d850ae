"""Picard iteration on Fourier coefficients with closed-form time dependence.

Each iterate ``c_k(t, n)`` is an :class:`~qkdv.exp_poly.ExpPoly`.  The step is

    c_k(t,n) = c(n) e^{it(n.w)^3}
               - (i n.w / 2) int_0^t e^{i(t-s)(n.w)^3} sum_{m1+m2=n} c_{k-1}(s,m1) c_{k-1}(s,m2) ds

with the convolution restricted to the box ``|n| <= R``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterator, Mapping

import numpy as np

from . import exp_poly as ep
from .combinatorics import DiffSample, certified_C0, estimate_C1
from .errors import (EnvelopeBudgetExceeded, HorizonExceeded, InvalidArgument,
                     NoContraction)
from .exp_poly import ExpPoly, ep_derivative_t, ep_eval, ep_outer_integral
from .lattice import (CoeffField, FrequencyVector, as_frequency, box_indices, l1, phase,
                      phase_cube)

MODULE = "picard_solver"

_EPS = np.finfo(float).eps


def horizon(B0: float, kappa: float, omega, C0: float) -> float:
    """Validity horizon ``kappa^nu / (8 B0 2^nu C0^nu |omega|)``."""
    om = as_frequency(omega)
    for name, v in (("B0", B0), ("kappa", kappa), ("C0", C0)):
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgument(f"{name} must be positive and finite, got {v}", module=MODULE)
    nu = om.nu
    return kappa ** nu / (8.0 * B0 * 2 ** nu * C0 ** nu * om.norm)


def theoretical_ratio(B0, kappa, omega, C1, t) -> float:
    """``q = B0 4^{nu+1} C1 kappa^{-nu} |omega| t`` from the Cauchy-difference bound."""
    om = as_frequency(omega)
    return B0 * 4.0 ** (om.nu + 1) * C1 * kappa ** (-om.nu) * om.norm * t


def sample_times(t_max: float, count: int = 16) -> np.ndarray:
    """Chebyshev-Lobatto points on ``[0, t_max]`` (both ends included)."""
    if count < 2:
        return np.array([float(t_max)])
    j = np.arange(count)
    return 0.5 * t_max * (1.0 - np.cos(np.pi * j / (count - 1)))


@dataclass(frozen=True)
class SolverConfig:
    box_radius: int
    t_request: float
    max_iterations: int = 12
    target_tol: float = 1e-13
    prune_floor: float = 1e-30
    resonance_tol: float = ep.RESONANCE_TOL
    merge_tol: float = ep.MERGE_TOL
    near_tol: float = ep.NEAR_TOL
    max_terms: int = ep.MAX_TERMS
    C0: float | None = None
    n_samples: int = 16
    stall_limit: int = 3

    def __post_init__(self):
        if self.box_radius < 0:
            raise InvalidArgument("box_radius must be >= 0", module=MODULE)
        if self.max_iterations < 1:
            raise InvalidArgument("max_iterations must be >= 1", module=MODULE)
        for name in ("target_tol", "resonance_tol", "merge_tol", "near_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive", module=MODULE)
        if not (self.t_request >= 0 and math.isfinite(self.t_request)):
            raise InvalidArgument("t_request must be finite and nonnegative", module=MODULE)
        if self.prune_floor < 0:
            raise InvalidArgument("prune_floor must be nonnegative", module=MODULE)

    def resolved_C0(self) -> float:
        return certified_C0() if self.C0 is None else float(self.C0)


@dataclass
class SolutionTrajectory:
    """Converged iterate ``c_K(t, n)`` on the box, with solver diagnostics."""

    coeffs: dict
    K: int
    t_max: float
    envelope_cert: tuple
    box_radius: int
    omega: FrequencyVector
    initial: CoeffField
    C0: float
    horizon: float
    sample_times: np.ndarray = field(repr=False)
    # diffs[k-1][s] = weighted sup over n of |c_k - c_{k-1}| at sample_times[s]
    diffs: list = field(default_factory=list, repr=False)
    noise_floor: float = 0.0
    converged: bool = True
    config: SolverConfig | None = None

    @property
    def nu(self) -> int:
        return self.omega.nu

    def indices(self):
        return list(self.coeffs)

    def weighted_diffs(self) -> list:
        """``d_k`` for ``k = 1..K``: sup over sample times."""
        return [float(np.max(d)) for d in self.diffs]

    def empirical_ratios(self) -> list:
        """``d_{k+1}/d_k`` restricted to pairs above the rounding floor."""
        d = self.weighted_diffs()
        out = []
        for k in range(1, len(d)):
            if d[k - 1] > self.noise_floor and d[k] > self.noise_floor:
                out.append((k + 1, d[k] / d[k - 1]))
        return out

    def diff_samples(self) -> list:
        B0, kappa = self.envelope_cert
        out = []
        for k, row in enumerate(self.diffs, start=1):
            for t, d in zip(self.sample_times, row):
                if d > self.noise_floor:
                    out.append(DiffSample(k, float(t), float(d), B0, kappa, self.nu,
                                          self.omega.norm))
        return out

    def fitted_C1(self):
        return estimate_C1(self.diff_samples(), self.C0)

    def theoretical_ratio(self, C1: float | None = None) -> float:
        B0, kappa = self.envelope_cert
        C1 = self.fitted_C1().value if C1 is None else C1
        return theoretical_ratio(B0, kappa, self.omega, C1, self.t_max)


# ---------------------------------------------------------------------------
# the iteration
# ---------------------------------------------------------------------------

def free_evolution(c_init: CoeffField, omega, radius: int) -> dict:
    """``c_0(t, n) = c(n) e^{it(n.w)^3}`` on the box."""
    om = as_frequency(omega)
    out = {}
    for n in box_indices(om.nu, radius):
        a = c_init[n]
        out[n] = ExpPoly.monomial(a, 0, phase_cube(n, om)) if a != 0 else ExpPoly.zero()
    return out


def mode_products(prev: Mapping, n, radius: int) -> ExpPoly:
    """``sum_{m1+m2=n} prev(m1) prev(m2)`` over the box, pairs visited in lexicographic order."""
    cs, ps, ths = [], [], []
    budget = ep.MAX_TERMS
    for m1, f in prev.items():
        if f.is_zero():
            continue
        m2 = tuple(a - b for a, b in zip(n, m1))
        if m2 < m1 or l1(m2) > radius:
            continue
        g = prev.get(m2)
        if g is None or g.is_zero():
            continue
        w = 1.0 if m1 == m2 else 2.0
        budget = max(budget, f.max_terms, g.max_terms)
        cs.append(w * np.multiply.outer(f.coeffs, g.coeffs).ravel())
        ps.append(np.add.outer(f.powers, g.powers).ravel())
        ths.append(np.add.outer(f.phases, g.phases).ravel())
    if not cs:
        return ExpPoly.zero()
    return ExpPoly(np.concatenate(cs), np.concatenate(ps), np.concatenate(ths),
                   max_terms=budget)


def picard_step(prev: Mapping, c_init: CoeffField, omega, R: int, *, t_scale: float = 1.0,
                prune_floor: float = 0.0, resonance_tol=ep.RESONANCE_TOL,
                merge_tol=ep.MERGE_TOL, near_tol=ep.NEAR_TOL,
                max_terms=ep.MAX_TERMS) -> dict:
    """One Picard update on every mode of the box ``|n| <= R``."""
    om = as_frequency(omega)
    if c_init.nu != om.nu:
        raise InvalidArgument("field and omega dimensions differ", module=MODULE)
    out = {}
    for n in box_indices(om.nu, R):
        theta = phase_cube(n, om)
        a = c_init[n]
        lin = ExpPoly.monomial(a, 0, theta) if a != 0 else ExpPoly.zero()
        nw = phase(n, om)
        if nw == 0.0:
            out[n] = lin
            continue
        prod = mode_products(prev, n, R)
        if prod.is_zero():
            out[n] = lin
            continue
        prod.max_terms = max_terms
        integral = ep_outer_integral(prod, theta, resonance_tol=resonance_tol,
                                     near_tol=near_tol, t_scale=t_scale, merge_tol=merge_tol)
        new = lin + integral.scale(-0.5j * nw)
        out[n] = new.pruned(prune_floor, t_scale) if prune_floor > 0 else new
    return out


def _step_kwargs(cfg: SolverConfig):
    return dict(t_scale=max(cfg.t_request, 1e-300), prune_floor=cfg.prune_floor,
                resonance_tol=cfg.resonance_tol, merge_tol=cfg.merge_tol,
                near_tol=cfg.near_tol, max_terms=cfg.max_terms)


def picard_iterates(c_init: CoeffField, omega, cfg: SolverConfig,
                    K: int | None = None) -> Iterator[tuple]:
    """Yield ``(k, iterate)`` for ``k = 0..K`` (default ``cfg.max_iterations``) without stopping early."""
    K = cfg.max_iterations if K is None else K
    cur = free_evolution(c_init, omega, cfg.box_radius)
    yield 0, cur
    kw = _step_kwargs(cfg)
    for k in range(1, K + 1):
        cur = picard_step(cur, c_init, omega, cfg.box_radius, **kw)
        yield k, cur


def _values(modes: Mapping, times) -> dict:
    return {n: np.asarray(ep_eval(f, times)) for n, f in modes.items()}


def _weighted_diff(new_vals, old_vals, kappa):
    out = None
    for n, v in new_vals.items():
        w = math.exp(kappa * l1(n) / 4.0)
        d = np.abs(v - old_vals[n]) * w
        out = d if out is None else np.maximum(out, d)
    return out


def solve(c_init: CoeffField, omega, cfg: SolverConfig) -> SolutionTrajectory:
    """Iterate until the weighted Cauchy difference drops below ``cfg.target_tol``.

    The difference ``max_n |c_k - c_{k-1}| e^{kappa|n|/4}`` is measured at
    ``cfg.n_samples`` Chebyshev times in ``[0, t_request]``.
    """
    om = as_frequency(omega)
    if c_init.nu != om.nu:
        raise InvalidArgument("field and omega dimensions differ", module=MODULE)
    if c_init.envelope is None:
        raise InvalidArgument("initial data must carry an envelope (B0, kappa)", module=MODULE)
    B0, kappa = c_init.envelope
    bad = c_init.envelope_violations()
    if bad:
        raise InvalidArgument(f"initial data violates its envelope at {bad[:3]}", module=MODULE)
    if any(l1(n) > cfg.box_radius for n in c_init.entries):
        raise InvalidArgument("initial support exceeds the solver box", module=MODULE)
    C0 = cfg.resolved_C0()
    t0 = horizon(B0, kappa, om, C0)
    if cfg.t_request > t0 * (1 + 1e-12):
        raise HorizonExceeded(f"t_request={cfg.t_request} exceeds the horizon {t0}",
                              module=MODULE)
    times = sample_times(cfg.t_request, cfg.n_samples)

    it = picard_iterates(c_init, om, cfg)
    _, cur = next(it)
    cur_vals = _values(cur, times)
    scale = max((float(np.max(np.abs(v))) * math.exp(kappa * l1(n) / 4.0)
                 for n, v in cur_vals.items()), default=0.0)
    noise = 1e3 * _EPS * max(scale, 1e-300)
    diffs, K, stalls, converged = [], 0, 0, False
    for k, nxt in it:
        nxt_vals = _values(nxt, times)
        d = _weighted_diff(nxt_vals, cur_vals, kappa)
        diffs.append(d)
        cur, cur_vals, K = nxt, nxt_vals, k
        dk = float(np.max(d))
        if dk <= cfg.target_tol or dk <= noise:
            converged = True
            break
        if k >= 2:
            prev = float(np.max(diffs[-2]))
            stalls = stalls + 1 if dk >= prev else 0
            if stalls >= cfg.stall_limit:
                raise NoContraction(
                    f"weighted differences failed to contract for {stalls} steps "
                    f"(d_{k} = {dk:.3e})", module=MODULE)
    return SolutionTrajectory(
        coeffs=cur, K=K, t_max=float(cfg.t_request), envelope_cert=(B0, kappa),
        box_radius=cfg.box_radius, omega=om, initial=c_init, C0=C0, horizon=t0,
        sample_times=times, diffs=diffs, noise_floor=noise, converged=converged,
        config=cfg)


# ---------------------------------------------------------------------------
# evaluation and diagnostics
# ---------------------------------------------------------------------------

def _check_time(traj: SolutionTrajectory, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > traj.t_max * (1 + 1e-12)):
        raise InvalidArgument(f"t outside [0, {traj.t_max}]", module=MODULE)


def coefficients_at(traj: SolutionTrajectory, t: float) -> CoeffField:
    """Instantaneous coefficient field ``n -> c(t, n)``."""
    _check_time(traj, t)
    ent = {n: ep_eval(f, float(t)) for n, f in traj.coeffs.items()}
    return CoeffField(traj.nu, traj.box_radius, ent)


def evaluate_u(traj: SolutionTrajectory, t: float, x):
    """``u(t, x) = sum_n c(t, n) e^{i (n.w) x}``; real when the coefficients are Hermitian."""
    _check_time(traj, t)
    x = np.asarray(x, dtype=float)
    idx = list(traj.coeffs)
    amps = np.array([ep_eval(traj.coeffs[n], float(t)) for n in idx], dtype=complex)
    freqs = np.array([phase(n, traj.omega) for n in idx])
    vals = np.exp(1j * np.multiply.outer(x, freqs)) @ amps
    if traj.initial.is_hermitian(1e-14):
        mag = float(np.sum(np.abs(amps)))
        imag = float(np.max(np.abs(np.imag(vals)))) if vals.size else 0.0
        if imag > 1e-10 * max(mag, 1e-300):
            raise InvalidArgument(f"Hermitian data produced imaginary part {imag:.3e}",
                                  module=MODULE)
        vals = np.real(vals)
    return vals if vals.ndim else vals.item()


def _residual_modes(traj: SolutionTrajectory, t: float) -> dict:
    """Fourier coefficients of ``u_t + u_xxx + u u_x`` at time ``t`` (radius 2R)."""
    om = traj.omega
    cvals = {n: ep_eval(f, t) for n, f in traj.coeffs.items()}
    dvals = {n: ep_eval(ep_derivative_t(f), t) for n, f in traj.coeffs.items()}
    out = {}
    for n in box_indices(om.nu, 2 * traj.box_radius):
        nw = phase(n, om)
        r = 0j
        if n in cvals:
            r += dvals[n] - 1j * nw ** 3 * cvals[n]
        if nw != 0.0:
            conv = 0j
            for m1, a in cvals.items():
                m2 = tuple(x - y for x, y in zip(n, m1))
                b = cvals.get(m2)
                if b is not None:
                    conv += a * b
            r += 0.5j * nw * conv
        if r != 0:
            out[n] = r
    return out


def pde_residual(traj: SolutionTrajectory, t_samples, x_samples) -> float:
    """``max |u_t + u_xxx + u u_x|`` over paired samples ``(t_i, x_i)``, exact derivatives."""
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    x_samples = np.atleast_1d(np.asarray(x_samples, dtype=float))
    if t_samples.shape != x_samples.shape:
        raise InvalidArgument("t_samples and x_samples must pair up", module=MODULE)
    _check_time(traj, t_samples)
    worst = 0.0
    cache = {}
    for t, x in zip(t_samples, x_samples):
        if t not in cache:
            cache[t] = _residual_modes(traj, float(t))
        modes = cache[t]
        val = sum((r * np.exp(1j * phase(n, traj.omega) * x) for n, r in modes.items()), 0j)
        worst = max(worst, abs(val))
    return worst


def residual_tail_bound(traj: SolutionTrajectory) -> float:
    """Bound on the out-of-box nonlinear flux using the envelope ``2 B0 e^{-kappa|n|/2}``."""
    B0, kappa = traj.envelope_cert
    om = traj.omega
    R = traj.box_radius
    box = box_indices(om.nu, R)
    total = 0.0
    for n in box_indices(om.nu, 2 * R):
        if l1(n) <= R:
            continue
        s = 0.0
        for m1 in box:
            m2 = tuple(x - y for x, y in zip(n, m1))
            if l1(m2) <= R:
                s += math.exp(-kappa * (l1(m1) + l1(m2)) / 2.0)
        total += 0.5 * abs(phase(n, om)) * (2 * B0) ** 2 * s
    return total


def residual_report(traj: SolutionTrajectory, t_samples, x_samples) -> dict:
    """Measured residual with the iteration and truncation allowances that bound it."""
    res = pde_residual(traj, t_samples, x_samples)
    d = traj.weighted_diffs()
    return {"residual": res, "last_difference": d[-1] if d else 0.0,
            "tail_bound": residual_tail_bound(traj), "K": traj.K}


def envelope_violations(traj: SolutionTrajectory, times=None, modes=None) -> list:
    """Samples where ``|c(t, n)| > 2 B0 e^{-kappa|n|/2}``; ``modes`` defaults to the solution."""
    B0, kappa = traj.envelope_cert
    times = sample_times(traj.t_max, 16) if times is None else np.asarray(times, float)
    modes = traj.coeffs if modes is None else modes
    return mode_envelope_violations(modes, times, B0, kappa)


def mode_envelope_violations(modes: Mapping, times, B0, kappa) -> list:
    bad = []
    for n, f in modes.items():
        cap = 2.0 * B0 * math.exp(-kappa * l1(n) / 2.0)
        vals = np.abs(np.asarray(ep_eval(f, times)))
        for t, v in zip(np.atleast_1d(times), np.atleast_1d(vals)):
            if v > cap:
                bad.append((n, float(t), float(v), cap))
    return bad


def mass(traj: SolutionTrajectory, t: float) -> float:
    """``sum_n |c(t, n)|^2`` over the box."""
    return math.fsum(abs(ep_eval(f, float(t))) ** 2 for f in traj.coeffs.values())


def mass_drift(traj: SolutionTrajectory, times=None) -> float:
    """Largest relative change of :func:`mass` against ``t = 0``."""
    times = sample_times(traj.t_max, 16) if times is None else times
    m0 = mass(traj, 0.0)
    if m0 == 0:
        return 0.0
    return max(abs(mass(traj, t) - m0) / m0 for t in times)


# ---------------------------------------------------------------------------
# chained restarts
# ---------------------------------------------------------------------------

def measured_envelope(c: CoeffField, kappa: float) -> float:
    """Least ``B`` with ``|c(n)| <= B e^{-kappa|n|}``."""
    return max((abs(v) * math.exp(kappa * l1(n)) for n, v in c.entries.items()), default=0.0)


@dataclass
class ChainSegment:
    index: int
    t_start: float
    t_end: float
    B: float
    K: int
    trajectory: SolutionTrajectory = field(repr=False)


def chain(c_init: CoeffField, omega, cfg: SolverConfig, segments: int,
          budget_factor: float = 4.0) -> list:
    """Experimental continuation: solve, evaluate at ``t_max``, restart from that state.

    Each segment re-measures the envelope constant ``B`` at the fixed decay
    rate ``kappa`` and runs for ``min(t_request, horizon(B))``.  Raises
    :class:`EnvelopeBudgetExceeded` once ``B`` exceeds ``budget_factor`` times
    the initial constant.
    """
    if segments < 1:
        raise InvalidArgument("segments must be >= 1", module=MODULE)
    om = as_frequency(omega)
    if c_init.envelope is None:
        raise InvalidArgument("initial data must carry an envelope (B0, kappa)", module=MODULE)
    B_start, kappa = c_init.envelope
    C0 = cfg.resolved_C0()
    state, t_abs, out = c_init, 0.0, []
    for i in range(segments):
        B = state.envelope[0]
        if B > budget_factor * B_start:
            raise EnvelopeBudgetExceeded(
                f"segment {i}: envelope {B:.6g} exceeds {budget_factor} x {B_start:.6g}",
                module=MODULE)
        dt = min(cfg.t_request, horizon(B, kappa, om, C0))
        seg_cfg = _replace(cfg, t_request=dt)
        traj = solve(state, om, seg_cfg)
        out.append(ChainSegment(i, t_abs, t_abs + dt, B, traj.K, traj))
        t_abs += dt
        nxt = coefficients_at(traj, dt)
        B_next = max(measured_envelope(nxt, kappa), 1e-300)
        if B_next > budget_factor * B_start:
            raise EnvelopeBudgetExceeded(
                f"after segment {i}: envelope {B_next:.6g} exceeds "
                f"{budget_factor} x {B_start:.6g}", module=MODULE)
        state = CoeffField(nxt.nu, nxt.radius, nxt.entries, (B_next, kappa))
    return out


def _replace(cfg: SolverConfig, **kw) -> SolverConfig:
    d = asdict(cfg)
    d.update(kw)
    return SolverConfig(**d)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def trajectory_to_json(traj: SolutionTrajectory, config: dict | None = None) -> str:
    """JSON with keys ``config, K, t_max, modes``; each mode lists ``[re, im, power, phase]`` terms."""
    modes = [{"n": list(n), "terms": f.to_list()} for n, f in traj.coeffs.items()]
    doc = {"config": config if config is not None else _default_config_doc(traj),
           "K": traj.K, "t_max": traj.t_max, "modes": modes}
    return json.dumps(doc, indent=1, sort_keys=False)


def _default_config_doc(traj):
    cfg = asdict(traj.config) if traj.config is not None else {}
    return {"omega": list(traj.omega.omega), "box_radius": traj.box_radius,
            "envelope": list(traj.envelope_cert), "C0": traj.C0, "solver": cfg}


def trajectory_from_json(text: str) -> tuple:
    """Inverse of :func:`trajectory_to_json` for the mode data: ``(K, t_max, {n: ExpPoly})``."""
    doc = json.loads(text)
    modes = {tuple(m["n"]): ExpPoly.from_list(m["terms"]) for m in doc["modes"]}
    return doc["K"], doc["t_max"], modes


def samples_to_csv(traj: SolutionTrajectory, times, xs) -> str:
    """Sampled solution, header ``t,x,u``; complex values print as ``re+imj``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "u"])
    for t in times:
        vals = np.atleast_1d(evaluate_u(traj, float(t), np.asarray(xs, float)))
        for x, u in zip(xs, vals):
            w.writerow([repr(float(t)), repr(float(x)),
                        repr(float(u)) if np.isrealobj(u) else repr(complex(u))])
    return buf.getvalue()


__all__ = [
    "horizon", "theoretical_ratio", "sample_times", "SolverConfig", "SolutionTrajectory",
    "free_evolution", "mode_products", "picard_step", "picard_iterates", "solve",
    "coefficients_at", "evaluate_u", "pde_residual", "residual_tail_bound", "residual_report",
    "envelope_violations", "mode_envelope_violations", "mass", "mass_drift",
    "measured_envelope", "ChainSegment", "chain", "trajectory_to_json",
    "trajectory_from_json", "samples_to_csv",
]
