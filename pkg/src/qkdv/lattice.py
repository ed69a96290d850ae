"""Frequency-lattice arithmetic on Z^nu.

Lattice indices are integer tuples; ``|n|`` is always the l1 norm.  A
:class:`CoeffField` is a finite, truncated family of Fourier amplitudes
supported in the box ``|n| <= R``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple

import mpmath
import numpy as np

from .errors import DegeneratePhaseError, InvalidArgument

MODULE = "lattice_core"

DEFAULT_PRUNE_FLOOR = 1e-30


def _invalid(msg):
    return InvalidArgument(msg, module=MODULE)


@dataclass(frozen=True)
class FrequencyVector:
    omega: tuple

    def __init__(self, omega):
        try:
            vals = tuple(float(w) for w in np.atleast_1d(np.asarray(omega, dtype=float)))
        except (TypeError, ValueError) as exc:
            raise _invalid(f"omega must be a real vector: {exc}") from exc
        if len(vals) < 1:
            raise _invalid("omega must have at least one entry")
        if not all(math.isfinite(w) for w in vals):
            raise _invalid("omega entries must be finite")
        if math.sqrt(sum(w * w for w in vals)) == 0.0:
            raise _invalid("omega must be nonzero")
        object.__setattr__(self, "omega", vals)

    @property
    def nu(self) -> int:
        return len(self.omega)

    @property
    def norm(self) -> float:
        """Euclidean norm |omega|."""
        return math.sqrt(sum(w * w for w in self.omega))

    def as_array(self):
        return np.asarray(self.omega, dtype=float)


def as_frequency(omega) -> FrequencyVector:
    if isinstance(omega, FrequencyVector):
        return omega
    return FrequencyVector(omega)


def l1(n) -> int:
    return sum(abs(int(v)) for v in n)


def check_index(n, nu):
    n = tuple(int(v) for v in n)
    if len(n) != nu:
        raise _invalid(f"index {n} has dimension {len(n)}, expected {nu}")
    return n


def box_indices(nu: int, radius: int) -> list:
    """All n in Z^nu with l1 norm at most ``radius``, lexicographically sorted."""
    if nu < 1 or radius < 0:
        raise _invalid("box needs nu >= 1 and radius >= 0")
    rng = range(-radius, radius + 1)
    return [n for n in itertools.product(rng, repeat=nu) if l1(n) <= radius]


def phase(n, omega) -> float:
    """The scalar frequency n . omega."""
    om = as_frequency(omega)
    n = check_index(n, om.nu)
    return math.fsum(k * w for k, w in zip(n, om.omega))


def phase_cube(n, omega, *, extended: bool = False):
    """(n . omega)^3, the linear Airy phase of mode n.

    With ``extended=True`` the value is computed in 40-digit software
    arithmetic and returned as an ``mpmath.mpf``.
    """
    om = as_frequency(omega)
    n = check_index(n, om.nu)
    if extended:
        with mpmath.workdps(40):
            s = mpmath.fsum(mpmath.mpf(k) * mpmath.mpf(w) for k, w in zip(n, om.omega))
            return s ** 3
    s = phase(n, om)
    return s * s * s


@dataclass(frozen=True)
class CoeffField:
    """Truncated Fourier coefficient family ``n -> c(n)`` on ``|n| <= radius``.

    ``envelope`` is an optional pair ``(B, kappa)`` asserting
    ``|c(n)| <= B exp(-kappa |n|)``.
    """

    nu: int
    radius: int
    entries: Mapping = field(default_factory=dict)
    envelope: tuple | None = None

    def __post_init__(self):
        if self.nu < 1:
            raise _invalid("nu must be >= 1")
        if self.radius < 0:
            raise _invalid("radius must be >= 0")
        clean = {}
        for n, v in self.entries.items():
            n = check_index(n, self.nu)
            if l1(n) > self.radius:
                raise _invalid(f"index {n} lies outside the box of radius {self.radius}")
            v = complex(v)
            if v != 0:
                clean[n] = v
        object.__setattr__(self, "entries", dict(sorted(clean.items())))
        if self.envelope is not None:
            B, kappa = (float(x) for x in self.envelope)
            if not (B > 0 and kappa > 0):
                raise _invalid("envelope constants must be positive")
            object.__setattr__(self, "envelope", (B, kappa))

    def __getitem__(self, n) -> complex:
        return self.entries.get(tuple(n), 0j)

    def __len__(self):
        return len(self.entries)

    def indices(self):
        return list(self.entries)

    def with_envelope(self, B, kappa) -> "CoeffField":
        return CoeffField(self.nu, self.radius, self.entries, (B, kappa))

    def envelope_violations(self, B=None, kappa=None, rtol=1e-12) -> list:
        """Indices whose amplitude exceeds ``B exp(-kappa |n|)`` by more than ``rtol``."""
        if B is None:
            if self.envelope is None:
                return []
            B, kappa = self.envelope
        return [n for n, v in self.entries.items()
                if abs(v) > (1 + rtol) * B * math.exp(-kappa * l1(n))]

    def is_hermitian(self, tol=1e-14) -> bool:
        scale = max((abs(v) for v in self.entries.values()), default=0.0)
        for n, v in self.entries.items():
            mirror = self[tuple(-k for k in n)]
            if abs(v - mirror.conjugate()) > tol * max(scale, 1e-300):
                return False
        return True

    def sup_norm(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def l2_mass(self) -> float:
        return math.fsum(abs(v) ** 2 for v in self.entries.values())

    def to_json(self, omega) -> str:
        om = as_frequency(omega)
        if om.nu != self.nu:
            raise _invalid("omega dimension does not match the field")
        payload = {
            "nu": self.nu,
            "omega": list(om.omega),
            "radius": self.radius,
            "entries": [
                {"n": list(n), "re": v.real, "im": v.imag} for n, v in self.entries.items()
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str):
        """Parse the JSON form; returns ``(field, FrequencyVector)``."""
        data = json.loads(text)
        om = FrequencyVector(data["omega"])
        if om.nu != int(data["nu"]):
            raise _invalid("omega length does not match nu")
        entries = {
            tuple(e["n"]): complex(e["re"], e["im"]) for e in data["entries"]
        }
        return cls(int(data["nu"]), int(data["radius"]), entries), om


def zero_field(nu, radius) -> CoeffField:
    return CoeffField(nu, radius, {})


def _same_nu(a: CoeffField, b: CoeffField):
    if a.nu != b.nu:
        raise _invalid(f"dimension mismatch: {a.nu} vs {b.nu}")


def convolve(a: CoeffField, b: CoeffField, out_radius: int, *,
             prune_floor: float = DEFAULT_PRUNE_FLOOR, extended: bool = False) -> CoeffField:
    """Truncated lattice convolution ``sum_{m1+m2=n} a(m1) b(m2)`` on ``|n| <= out_radius``.

    Partial sums are accumulated in lexicographic order of ``m1`` so the
    result is bit-reproducible.  Entries below ``prune_floor`` are dropped.
    """
    _same_nu(a, b)
    if out_radius < 0:
        raise _invalid("out_radius must be >= 0")
    acc = {}
    if extended:
        with mpmath.workdps(40):
            for m1, x in a.entries.items():
                x = mpmath.mpc(x)
                for m2, y in b.entries.items():
                    n = tuple(i + j for i, j in zip(m1, m2))
                    if l1(n) <= out_radius:
                        acc[n] = acc.get(n, mpmath.mpc(0)) + x * mpmath.mpc(y)
            acc = {n: complex(v) for n, v in acc.items()}
    else:
        for m1, x in a.entries.items():
            for m2, y in b.entries.items():
                n = tuple(i + j for i, j in zip(m1, m2))
                if l1(n) <= out_radius:
                    acc[n] = acc.get(n, 0j) + x * y
    kept = {n: v for n, v in acc.items() if abs(v) >= prune_floor}
    return CoeffField(a.nu, out_radius, kept)


def hermitian_symmetrize(c: CoeffField) -> CoeffField:
    """Project onto fields with ``c(-n) = conj(c(n))`` (real-valued synthesis)."""
    out = {}
    keys = set(c.entries) | {tuple(-k for k in n) for n in c.entries}
    for n in keys:
        mirror = tuple(-k for k in n)
        out[n] = 0.5 * (c[n] + c[mirror].conjugate())
    return CoeffField(c.nu, c.radius, out, c.envelope)


def random_hermitian(nu: int, radius: int, B0: float, kappa: float, seed: int) -> CoeffField:
    """Seeded Hermitian data with ``|c(n)| <= B0 e^{-kappa|n|}`` on the box.

    Each pair ``{n, -n}`` draws a modulus fraction in ``[0, 1)`` and a phase;
    ``c(0)`` is real.  Indices are visited in sorted order, so the draw is
    reproducible for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for n in box_indices(nu, radius):
        mirror = tuple(-k for k in n)
        if n in out:
            continue
        cap = B0 * math.exp(-kappa * l1(n))
        if n == mirror:
            out[n] = complex(cap * (2.0 * rng.random() - 1.0))
        else:
            v = cap * rng.random() * np.exp(2j * np.pi * rng.random())
            out[n] = complex(v)
            out[mirror] = complex(v).conjugate()
    return CoeffField(nu, radius, out, (B0, kappa))


def synthesize(c: CoeffField, omega, x):
    """Evaluate ``sum_n c(n) exp(i (n.omega) x)`` at the points ``x``."""
    om = as_frequency(omega)
    _check_field_omega(c, om)
    x = np.asarray(x, dtype=float)
    if not c.entries:
        return np.zeros(x.shape, dtype=complex)
    freqs = np.array([phase(n, om) for n in c.entries])
    amps = np.array(list(c.entries.values()), dtype=complex)
    return np.exp(1j * np.multiply.outer(x, freqs)) @ amps


def _check_field_omega(c, om):
    if c.nu != om.nu:
        raise _invalid(f"field has nu={c.nu} but omega has {om.nu} entries")


@dataclass(frozen=True)
class DiophantineParams:
    a0: float
    b0: float

    def __post_init__(self):
        if not (0 < self.a0 < 1 and math.isfinite(self.b0)):
            raise _invalid("need 0 < a0 < 1 and finite b0")


class DiophantineReport(NamedTuple):
    worst_n: tuple
    worst_ratio: float
    passed: bool
    n_max: int


def check_diophantine(omega, params: DiophantineParams, n_max: int) -> DiophantineReport:
    """Finite certificate of ``|n.omega| >= a0 |n|^{-b0}`` for ``0 < |n| <= n_max``.

    Only indices up to ``n_max`` are scanned; a pass says nothing about
    larger ``|n|``.
    """
    om = as_frequency(omega)
    if params.b0 <= om.nu - 1:
        raise _invalid(f"b0 must exceed nu - 1 = {om.nu - 1}")
    if n_max < 1:
        raise _invalid("n_max must be >= 1")
    w = om.as_array()
    idx = np.array(box_indices(om.nu, n_max), dtype=np.int64)
    norms = np.abs(idx).sum(axis=1)
    keep = norms > 0
    idx, norms = idx[keep], norms[keep]
    ratios = np.abs(idx @ w) * norms.astype(float) ** params.b0 / params.a0
    k = int(np.argmin(ratios))
    worst = float(ratios[k])
    return DiophantineReport(tuple(int(v) for v in idx[k]), worst, bool(worst >= 1.0), n_max)


class BohrMean(NamedTuple):
    value: complex
    error_scale: float
    gap: float


def extract_coefficient(f: Callable, m, omega, A: float, support: Iterable,
                        *, nodes_per_panel: int = 8) -> BohrMean:
    """Finite-window Bohr mean ``(1/2A) int_{-A}^{A} f(x) exp(-i (m.omega) x) dx``.

    ``f`` must accept an array of x values; ``support`` lists the lattice
    indices present in f.  Composite Gauss-Legendre quadrature resolves the
    highest frequency.  The leakage from the other modes is bounded by
    ``sum |h(n)| * error_scale`` with ``error_scale = 1/(A gap)``.
    """
    om = as_frequency(omega)
    m = check_index(m, om.nu)
    if not A > 0:
        raise _invalid("A must be positive")
    idx = sorted({check_index(n, om.nu) for n in support} | {m})
    freqs = np.array([phase(n, om) for n in idx])
    order = np.sort(freqs)
    scale = max(1.0, float(np.max(np.abs(freqs))))
    gaps = np.diff(order)
    if gaps.size and np.min(gaps) <= 1e-12 * scale:
        raise DegeneratePhaseError(
            "two support indices share the same phase n.omega; Bohr means cannot separate them",
            module=MODULE,
        )
    gap = float(np.min(gaps)) if gaps.size else math.inf
    alpha_m = phase(m, om)
    top = float(np.max(np.abs(freqs - alpha_m))) + 1.0
    n_panels = max(1, int(math.ceil(2 * A * top / math.pi)))
    nodes, weights = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(-A, A, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    vals = np.asarray(f(x), dtype=complex) * np.exp(-1j * alpha_m * x)
    value = complex(np.sum(wts * vals) / (2 * A))
    return BohrMean(value, 1.0 / (A * gap), gap)
