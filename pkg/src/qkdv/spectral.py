"""Spectra of Schrodinger operators ``H = -d^2/dx^2 + V`` with the evolving potential.

Periodic potentials (``nu = 1``) are handled through the Hill discriminant
``Delta(E) = trace(monodromy)``, whose level crossings ``Delta = +-2`` are
the band edges.  Quasi-periodic potentials (``nu >= 2``) are sampled through
Bloch fibers of a Galerkin truncation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidArgument, UnresolvedRootCluster
from .lattice import CoeffField, as_frequency, box_indices, l1, phase

MODULE = "spectral_lax"

START_STEPS = 256
MAX_STEPS = 1 << 16
STEP_TOL = 1e-10
DEGENERATE_TOL = 1e-8
_CHUNK = 1 << 20
# -d^2/dx^2 + LAX_SCALE * u is the Lax operator of u_t + u_xxx + u u_x = 0
LAX_SCALE = -1.0 / 6.0


@dataclass(frozen=True)
class PeriodicPotential:
    """Real ``L``-periodic potential given as a vectorized callable."""

    func: Callable
    period: float
    label: str = "custom"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    @classmethod
    def constant(cls, value: float, period: float = 2 * math.pi):
        v = float(value)
        return cls(lambda x: np.full(np.shape(x), v), period, f"constant {v!r}")

    @classmethod
    def cosine(cls, amplitude: float, wavenumber: float, period: float):
        """``amplitude * cos(wavenumber * x)``."""
        a, k = float(amplitude), float(wavenumber)
        return cls(lambda x: a * np.cos(k * x), period, f"{a!r} cos({k!r} x)")

    @classmethod
    def from_coefficients(cls, c: CoeffField, omega, scale: float = 1.0):
        """``V(x) = scale * sum c(n) e^{i n w x}`` for Hermitian ``c`` and scalar ``w``."""
        om = as_frequency(omega)
        if om.nu != 1:
            raise InvalidArgument("periodic potentials need nu = 1", module=MODULE)
        if not c.is_hermitian(1e-12):
            raise InvalidArgument("potential coefficients must be Hermitian", module=MODULE)
        idx = [n for n in c.entries]
        freqs = np.array([phase(n, om) for n in idx])
        amps = float(scale) * np.array([c[n] for n in idx], dtype=complex)

        def func(x):
            x = np.asarray(x, dtype=float)
            if not idx:
                return np.zeros(x.shape)
            return np.real(np.exp(1j * np.multiply.outer(x, freqs)) @ amps)

        return cls(func, 2 * math.pi / abs(om.omega[0]), "fourier")

    def fourier_coefficients(self, count: int) -> np.ndarray:
        """FFT coefficients ``V_k`` for ``|k| < count/2`` of ``V = sum V_k e^{2 pi i k x / L}``."""
        x = np.arange(count) * self.period / count
        return np.fft.fft(self(x)) / count


# ---------------------------------------------------------------------------
# Hill discriminant
# ---------------------------------------------------------------------------

def _step_matrices(v0, vm, v1, E, h):
    """RK4 propagators for ``y' = [[0, 1], [V - E, 0]] y``; shape ``(len(E), N, 2, 2)``."""
    q0 = v0[None, :] - E[:, None]
    qm = vm[None, :] - E[:, None]
    q1 = v1[None, :] - E[:, None]
    shape = q0.shape + (2, 2)

    def A(q):
        a = np.zeros(shape)
        a[..., 0, 1] = 1.0
        a[..., 1, 0] = q
        return a

    I = np.broadcast_to(np.eye(2), shape)
    A0, Am, A1 = A(q0), A(qm), A(q1)
    K1 = A0
    K2 = Am @ (I + 0.5 * h * K1)
    K3 = Am @ (I + 0.5 * h * K2)
    K4 = A1 @ (I + h * K3)
    return I + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def _ordered_product(S):
    """``S[..., N-1, :, :] @ ... @ S[..., 0, :, :]`` by pairwise reduction in a fixed order."""
    while S.shape[-3] > 1:
        n = S.shape[-3]
        even = S[..., 0:n - 1:2, :, :]
        odd = S[..., 1:n:2, :, :]
        prod = odd @ even
        if n % 2:
            prod = np.concatenate([prod, S[..., n - 1:n, :, :]], axis=-3)
        S = prod
    return S[..., 0, :, :]


def monodromy(potential: PeriodicPotential, E, n_steps: int) -> np.ndarray:
    """Period map of ``-psi'' + (V - E) psi = 0`` with ``n_steps`` RK4 steps, shape ``(len(E), 2, 2)``."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    L = potential.period
    h = L / n_steps
    x = np.arange(n_steps) * h
    v0, vm, v1 = potential(x), potential(x + 0.5 * h), potential(x + h)
    per = max(1, _CHUNK // n_steps)
    out = np.empty((E.size, 2, 2))
    for s in range(0, E.size, per):
        out[s:s + per] = _ordered_product(_step_matrices(v0, vm, v1, E[s:s + per], h))
    return out


def discriminant_fixed(potential: PeriodicPotential, E, n_steps: int) -> np.ndarray:
    M = monodromy(potential, E, n_steps)
    return M[:, 0, 0] + M[:, 1, 1]


def choose_steps(potential: PeriodicPotential, probe_E, tol: float = STEP_TOL) -> int:
    """Double the step count from 256 until halving the step changes ``Delta`` by less than
    ``tol * max(1, |Delta|)``; below the spectrum ``|Delta|`` is large and an absolute
    criterion would sit under the rounding floor."""
    probe_E = np.atleast_1d(np.asarray(probe_E, dtype=float))
    n = START_STEPS
    prev = discriminant_fixed(potential, probe_E, n)
    while n < MAX_STEPS:
        cur = discriminant_fixed(potential, probe_E, 2 * n)
        if np.max(np.abs(cur - prev) / np.maximum(1.0, np.abs(cur))) < tol:
            return 2 * n
        n, prev = 2 * n, cur
    return MAX_STEPS


def hill_discriminant(potential: PeriodicPotential, E, n_steps: int | None = None,
                      tol: float = STEP_TOL):
    """``Delta(E)``; the step count is chosen by doubling unless ``n_steps`` is given."""
    scalar = np.ndim(E) == 0
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    n = choose_steps(potential, E_arr, tol) if n_steps is None else int(n_steps)
    vals = discriminant_fixed(potential, E_arr, n)
    return float(vals[0]) if scalar else vals


# ---------------------------------------------------------------------------
# band edges
# ---------------------------------------------------------------------------

@dataclass
class SpectrumReport:
    mode: str
    band_edges: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    fiber_cloud: list = field(default_factory=list)
    resolution: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"mode": self.mode, "band_edges": self.band_edges,
               "degenerate": self.degenerate,
               "fiber_cloud": [{"theta": th, "eigenvalues": list(ev)}
                               for th, ev in self.fiber_cloud],
               "resolution": self.resolution}
        return json.dumps(doc)


def band_edges(potential: PeriodicPotential, E_max: float, E_min: float | None = None,
               grid_step: float = 0.01, n_steps: int | None = None,
               degenerate_tol: float = DEGENERATE_TOL, root_tol: float = 1e-13) -> SpectrumReport:
    """Roots of ``Delta(E) = +-2`` in ``[E_min, E_max]``, sorted.

    The discriminant is scanned on a grid; sign changes are refined by
    Brent's method, and every interior extremum is refined as well so that
    narrow gaps (both edges between two grid points) are not missed.  An
    extremum with ``||Delta| - 2| <= degenerate_tol`` is a closed gap and is
    reported as a doubled edge.
    """
    L = potential.period
    if E_min is None:
        E_min = float(np.min(potential(np.linspace(0, L, 512, endpoint=False)))) - 1.0
    if not E_max > E_min:
        raise InvalidArgument("E_max must exceed E_min", module=MODULE)
    probe = np.linspace(E_min, E_max, 9)
    n = choose_steps(potential, probe) if n_steps is None else int(n_steps)
    count = max(64, int(math.ceil((E_max - E_min) / grid_step)) + 1)
    grid = np.linspace(E_min, E_max, count)
    vals = discriminant_fixed(potential, grid, n)

    def D(e):
        return float(discriminant_fixed(potential, np.array([e]), n)[0])

    roots, degenerate = [], []
    for level in (2.0, -2.0):
        g = vals - level
        for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
            roots.append(brentq(lambda e: D(e) - level, grid[i], grid[i + 1], xtol=root_tol,
                                rtol=4 * np.finfo(float).eps))
        for i in np.flatnonzero(g == 0):
            roots.append(float(grid[i]))
    # interior extrema of Delta
    d = np.diff(vals)
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0) + 1:
        is_max = d[i - 1] > 0
        sgn = -1.0 if is_max else 1.0
        lo, hi = grid[i - 1], grid[i + 1]
        e_star = _extremum(D, lo, hi, sgn)
        v_star = D(e_star)
        level = 2.0 if is_max else -2.0
        excess = (v_star - level) if is_max else (level - v_star)
        if abs(excess) <= degenerate_tol:
            degenerate.append(e_star)
            roots = [r for r in roots if not (lo <= r <= hi)]
            roots.extend([e_star, e_star])
        elif excess > 0:
            # a gap hidden between two grid points that both lie inside bands
            f_lo, f_hi = vals[i - 1] - level, vals[i + 1] - level
            hidden = (f_lo * -sgn > 0) == False and (f_hi * -sgn > 0) == False  # noqa: E712
            if hidden and not any(lo <= r <= hi for r in roots):
                for a, b in ((lo, e_star), (e_star, hi)):
                    if (D(a) - level) * (D(b) - level) > 0:
                        raise UnresolvedRootCluster(
                            f"gap near E={e_star:.6f} could not be bracketed", module=MODULE)
                    roots.append(brentq(lambda e: D(e) - level, a, b, xtol=root_tol))
    roots.sort()
    for a, b in zip(roots, roots[1:]):
        if 0 < b - a < 10 * root_tol:
            raise UnresolvedRootCluster(f"edges {a!r} and {b!r} are closer than the root "
                                        "tolerance", module=MODULE)
    return SpectrumReport("periodic", [float(r) for r in roots], sorted(degenerate),
                          resolution={"n_steps": n, "grid_points": count,
                                      "E_min": float(E_min), "E_max": float(E_max)})


def _extremum(D, lo, hi, sgn, step=1e-6):
    """Critical point of ``D`` in ``[lo, hi]``: root of a central difference, else bounded search."""
    def slope(e):
        return D(e + step) - D(e - step)

    a, b = lo + 2 * step, hi - 2 * step
    sa, sb = slope(a), slope(b)
    if sa * sb < 0:
        return float(brentq(slope, a, b, xtol=1e-14))
    opt = minimize_scalar(lambda e: sgn * D(e), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(opt.x)


# ---------------------------------------------------------------------------
# Galerkin oracles
# ---------------------------------------------------------------------------

def hill_matrix_eigenvalues(potential: PeriodicPotential, size: int, antiperiodic: bool = False,
                            fft_points: int = 1024) -> np.ndarray:
    """Eigenvalues of the Fourier truncation on ``2 size + 1`` periodic or antiperiodic modes."""
    L = potential.period
    V = potential.fourier_coefficients(fft_points)
    ks = np.arange(-size, size + 1)
    shift = 0.5 if antiperiodic else 0.0
    kin = (2 * math.pi * (ks + shift) / L) ** 2
    diff = ks[:, None] - ks[None, :]
    M = V[diff % fft_points] + np.diag(kin)
    return np.linalg.eigvalsh(0.5 * (M + M.conj().T))


def galerkin_band_edges(potential: PeriodicPotential, count: int, size: int = 40) -> np.ndarray:
    """First ``count`` band edges from the periodic and antiperiodic matrix spectra."""
    ev = np.concatenate([hill_matrix_eigenvalues(potential, size, False),
                         hill_matrix_eigenvalues(potential, size, True)])
    return np.sort(ev)[:count]


def _fiber_matrix(c_field: CoeffField, theta: float, basis_radius: int, omega):
    if omega is None:
        raise InvalidArgument("omega is required", module=MODULE)
    om = as_frequency(omega)
    if c_field.nu != om.nu:
        raise InvalidArgument("field and omega dimensions differ", module=MODULE)
    if not c_field.is_hermitian(1e-12):
        raise InvalidArgument("fiber spectra need a Hermitian field", module=MODULE)
    if basis_radius < c_field.radius:
        raise InvalidArgument("basis_radius must be at least the field radius", module=MODULE)
    idx = box_indices(om.nu, basis_radius)
    pos = {n: i for i, n in enumerate(idx)}
    freqs = np.array([phase(n, om) for n in idx])
    M = np.diag((theta + freqs) ** 2).astype(complex)
    shifts = [(k, v) for k, v in c_field.entries.items() if v != 0]
    for i, n in enumerate(idx):
        for k, v in shifts:
            j = pos.get(tuple(a - b for a, b in zip(n, k)))
            if j is not None:
                M[i, j] += v
    return idx, 0.5 * (M + M.conj().T)


def quasiperiodic_fiber_spectrum(c_field: CoeffField, theta: float, basis_radius: int,
                                 omega=None) -> np.ndarray:
    """Eigenvalues of ``M[n, m] = (theta + n.w)^2 delta_nm + c(n - m)`` on ``|n| <= basis_radius``."""
    _, M = _fiber_matrix(c_field, theta, basis_radius, omega)
    return np.linalg.eigvalsh(M)


def localized_fiber_eigenvalues(c_field: CoeffField, theta: float, basis_radius: int,
                                omega=None, E_max: float = math.inf, shell: int = 2,
                                weight_tol: float = 1e-6) -> np.ndarray:
    """Fiber eigenvalues below ``E_max`` whose eigenvectors carry at most ``weight_tol`` of
    their squared norm on the outer shell ``|n| > basis_radius - shell``.

    For a dense frequency module, enlarging the basis adds new near-resonant
    states at low energy, so "the lowest k eigenvalues" is not a convergent
    quantity.  Eigenvalues that are localized away from the truncation
    boundary are, and these are what basis-convergence checks compare.
    """
    idx, M = _fiber_matrix(c_field, theta, basis_radius, omega)
    w, V = np.linalg.eigh(M)
    outer = np.array([l1(n) > basis_radius - shell for n in idx])
    weight = np.sum(np.abs(V[outer]) ** 2, axis=0)
    return w[(weight <= weight_tol) & (w <= E_max)]


def fiber_cloud(c_field: CoeffField, omega, basis_radius: int, E_max: float,
                n_theta: int = 32) -> list:
    """Fiber eigenvalues below ``E_max`` at ``n_theta`` points of ``[0, gap)``.

    ``gap`` is the smallest positive ``|n.w|`` over the basis box.
    """
    om = as_frequency(omega)
    freqs = [abs(phase(n, om)) for n in box_indices(om.nu, basis_radius)]
    gap = min(f for f in freqs if f > 1e-12)
    out = []
    for theta in np.arange(n_theta) * gap / n_theta:
        ev = quasiperiodic_fiber_spectrum(c_field, float(theta), basis_radius, om)
        out.append((float(theta), [float(e) for e in ev if e <= E_max]))
    return out


def hausdorff_one_sided(cloud_a, cloud_b) -> float:
    """``sup_{a in A} dist(a, B)`` for flattened eigenvalue clouds."""
    a = np.sort(np.concatenate([np.asarray(ev, float) for _, ev in cloud_a]))
    b = np.sort(np.concatenate([np.asarray(ev, float) for _, ev in cloud_b]))
    if a.size == 0:
        return 0.0
    if b.size == 0:
        return math.inf
    pos = np.clip(np.searchsorted(b, a), 1, b.size - 1)
    return float(np.max(np.minimum(np.abs(a - b[pos - 1]), np.abs(a - b[pos]))))


# ---------------------------------------------------------------------------
# isospectrality along a trajectory
# ---------------------------------------------------------------------------

@dataclass
class IsospectralityResult:
    max_edge_drift: float
    times: list
    edges: list
    n_edges: int
    reports: list = field(repr=False, default_factory=list)

    def to_csv(self) -> str:
        """Band-edge table ``t,edge_index,E``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "edge_index", "E"])
        for t, row in zip(self.times, self.edges):
            for j, e in enumerate(row):
                w.writerow([repr(float(t)), j, repr(float(e))])
        return buf.getvalue()


def match_edges(baseline, edges, n_edges: int) -> list:
    """Pair edges with the baseline by index; fail if any edge is closer to a neighbor's slot."""
    if len(edges) < n_edges or len(baseline) < n_edges:
        raise UnresolvedRootCluster(
            f"expected {n_edges} edges, found {len(edges)} vs baseline {len(baseline)}",
            module=MODULE)
    out = []
    for j in range(n_edges):
        e = edges[j]
        own = abs(e - baseline[j])
        for k in (j - 1, j + 1):
            if 0 <= k < len(baseline) and baseline[k] != baseline[j] \
                    and abs(e - baseline[k]) < own:
                raise UnresolvedRootCluster(f"edge {j} at {e!r} pairs ambiguously", module=MODULE)
        out.append(e)
    return out


def isospectrality_check(traj, t_list, E_max: float, n_edges: int = 6, *,
                         basis_radius: int | None = None, n_theta: int = 32,
                         n_steps: int | None = None,
                         scale: float = 1.0) -> IsospectralityResult:
    """Largest change of the spectrum of ``-d^2/dx^2 + scale * u(t, .)`` relative to ``t_list[0]``.

    For ``nu = 1`` the first ``n_edges`` band edges are compared; for
    ``nu >= 2`` the one-sided Hausdorff distance between fiber clouds.
    The flow ``u_t + u_xxx + u u_x = 0`` is exactly isospectral for
    ``scale = LAX_SCALE``; ``scale = 1`` is the unnormalized operator.
    """
    from .picard import coefficients_at

    om = traj.omega
    t_list = [float(t) for t in t_list]
    fields = [coefficients_at(traj, t) for t in t_list]
    fields = [CoeffField(f.nu, f.radius, {n: scale * v for n, v in f.entries.items()})
              for f in fields]
    if om.nu == 1:
        pots = [PeriodicPotential.from_coefficients(_hermitian_clean(f), om) for f in fields]
        if n_steps is None:
            n_steps = choose_steps(pots[0], np.linspace(_vmin(pots[0]) - 1, E_max, 9))
        reports = [band_edges(p, E_max, E_min=_vmin(pots[0]) - 1.0, n_steps=n_steps)
                   for p in pots]
        base = reports[0].band_edges
        rows = [match_edges(base, r.band_edges, n_edges) for r in reports]
        drift = max(abs(r[j] - rows[0][j]) for r in rows for j in range(n_edges))
        return IsospectralityResult(float(drift), t_list, rows, n_edges, reports)
    R = max(traj.box_radius, basis_radius or 0)
    clouds = [fiber_cloud(_hermitian_clean(f), om, R, E_max, n_theta) for f in fields]
    drift = max(hausdorff_one_sided(c, clouds[0]) for c in clouds)
    reports = [SpectrumReport("quasiperiodic", fiber_cloud=c,
                              resolution={"basis_radius": R, "n_theta": n_theta})
               for c in clouds]
    return IsospectralityResult(float(drift), t_list, [[] for _ in t_list], 0, reports)


def _vmin(p: PeriodicPotential) -> float:
    return float(np.min(p(np.linspace(0, p.period, 512, endpoint=False))))


def _hermitian_clean(c: CoeffField) -> CoeffField:
    """Average ``c(n)`` with ``conj(c(-n))`` to remove rounding asymmetry."""
    out = {}
    for n in set(c.entries) | {tuple(-k for k in n) for n in c.entries}:
        out[n] = 0.5 * (c[n] + c[tuple(-k for k in n)].conjugate())
    return CoeffField(c.nu, c.radius, out)


__all__ = [
    "PeriodicPotential", "monodromy", "discriminant_fixed", "choose_steps", "hill_discriminant",
    "SpectrumReport", "band_edges", "hill_matrix_eigenvalues", "galerkin_band_edges",
    "quasiperiodic_fiber_spectrum", "localized_fiber_eigenvalues", "fiber_cloud",
    "hausdorff_one_sided",
    "IsospectralityResult", "match_edges", "isospectrality_check", "LAX_SCALE",
]
