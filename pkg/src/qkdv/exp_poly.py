"""Exponential polynomials in time: finite sums ``sum_j a_j t^{p_j} exp(i theta_j t)``.

The class is closed under products, time derivatives and the Duhamel
integral ``F(t) = int_0^t exp(i (t - tau) theta0) f(tau) dtau``, which is
all the Picard scheme needs.  Terms are stored as three parallel numpy
arrays kept in canonical order (sorted by phase, then power).
"""

from __future__ import annotations

import io
import math

import numpy as np

from .errors import InvalidArgument, TermBudgetExceeded

MODULE = "exp_poly"

MERGE_TOL = 1e-12
RESONANCE_TOL = 1e-9
# |delta| * t_scale below this uses the Taylor expansion of the Duhamel kernel
NEAR_TOL = 1e-3
MAX_TERMS = 100_000
_TAYLOR_EPS = 1e-17
# integration by parts is used while its rounding amplification stays below e^_AMP_LIMIT
_AMP_LIMIT = math.log(1e3)
_lgamma = np.vectorize(math.lgamma, otypes=[float])


class ExpPoly:
    """Exponential polynomial with canonical term storage.

    Parameters
    ----------
    coeffs, powers, phases : array_like
        Term data; merged and sorted on construction.
    merge_tol : float
        Phases closer than ``merge_tol * max|theta|`` are merged onto the
        smallest phase of their cluster.
    max_terms : int
        Raise :class:`TermBudgetExceeded` past this many canonical terms.
    """

    __slots__ = ("coeffs", "powers", "phases", "max_terms")

    def __init__(self, coeffs=(), powers=(), phases=(), *, merge_tol=MERGE_TOL,
                 max_terms=MAX_TERMS, canonical=False):
        c = np.asarray(coeffs, dtype=complex).ravel()
        p = np.asarray(powers, dtype=np.int64).ravel()
        th = np.asarray(phases, dtype=float).ravel()
        if not (c.shape == p.shape == th.shape):
            raise InvalidArgument("term arrays must have equal length", module=MODULE)
        if p.size and p.min() < 0:
            raise InvalidArgument("powers must be nonnegative", module=MODULE)
        self.max_terms = max_terms
        if not canonical:
            c, p, th = _canonicalize(c, p, th, merge_tol)
        if c.size > max_terms:
            raise TermBudgetExceeded(
                f"exponential polynomial has {c.size} terms, budget is {max_terms}",
                module=MODULE,
            )
        self.coeffs, self.powers, self.phases = c, p, th

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls):
        return cls(canonical=True)

    @classmethod
    def constant(cls, a):
        return cls([a], [0], [0.0])

    @classmethod
    def monomial(cls, a=1.0, power=0, phase=0.0):
        """``a t^power exp(i phase t)``."""
        return cls([a], [power], [phase])

    @classmethod
    def from_terms(cls, terms, **kw):
        terms = list(terms)
        if not terms:
            return cls.zero()
        c, p, th = zip(*terms)
        return cls(c, p, th, **kw)

    # inspection -------------------------------------------------------------
    def __len__(self):
        return int(self.coeffs.size)

    @property
    def terms(self):
        return [(complex(a), int(p), float(th))
                for a, p, th in zip(self.coeffs, self.powers, self.phases)]

    def is_zero(self):
        return self.coeffs.size == 0

    def max_power(self):
        return int(self.powers.max()) if self.powers.size else 0

    def value_at_zero(self) -> complex:
        return complex(self.coeffs[self.powers == 0].sum())

    def __repr__(self):
        return f"ExpPoly({len(self)} terms)"

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, ExpPoly):
            other = ExpPoly.constant(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        return ExpPoly(np.concatenate([self.coeffs, other.coeffs]),
                       np.concatenate([self.powers, other.powers]),
                       np.concatenate([self.phases, other.phases]),
                       max_terms=max(self.max_terms, other.max_terms))

    __radd__ = __add__

    def __neg__(self):
        return ExpPoly(-self.coeffs, self.powers, self.phases, canonical=True,
                       max_terms=self.max_terms)

    def __sub__(self, other):
        return self + (-other if isinstance(other, ExpPoly) else -complex(other))

    def scale(self, s):
        s = complex(s)
        if s == 0 or self.is_zero():
            return ExpPoly.zero()
        return ExpPoly(self.coeffs * s, self.powers, self.phases, canonical=True,
                       max_terms=self.max_terms)

    def __mul__(self, other):
        if isinstance(other, ExpPoly):
            return ep_multiply(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __call__(self, t):
        return ep_eval(self, t)

    def pruned(self, floor: float, t_scale: float = 1.0):
        """Drop terms with ``|a| t_scale^p < floor``."""
        if floor <= 0 or self.is_zero():
            return self
        size = np.abs(self.coeffs) * float(t_scale) ** self.powers
        keep = size >= floor
        if keep.all():
            return self
        return ExpPoly(self.coeffs[keep], self.powers[keep], self.phases[keep],
                       canonical=True, max_terms=self.max_terms)

    def to_csv(self) -> str:
        """Debug dump, one ``re,im,power,phase`` line per term."""
        buf = io.StringIO()
        for a, p, th in zip(self.coeffs, self.powers, self.phases):
            buf.write(f"{a.real!r},{a.imag!r},{int(p)},{th!r}\n")
        return buf.getvalue()

    def to_list(self):
        return [[a.real, a.imag, int(p), th]
                for a, p, th in zip(self.coeffs.tolist(), self.powers, self.phases.tolist())]

    @classmethod
    def from_list(cls, rows):
        if not rows:
            return cls.zero()
        arr = list(zip(*rows))
        return cls(np.array(arr[0]) + 1j * np.array(arr[1]), arr[2], arr[3])


def _canonicalize(c, p, th, merge_tol):
    if c.size == 0:
        return c, p, th
    nz = c != 0
    if not nz.all():
        c, p, th = c[nz], p[nz], th[nz]
        if c.size == 0:
            return c, p, th
    if merge_tol > 0 and c.size > 1:
        th = _merge_phases(th, merge_tol)
    order = np.lexsort((p, th))
    c, p, th = c[order], p[order], th[order]
    new = np.empty(c.size, dtype=bool)
    new[0] = True
    new[1:] = (th[1:] != th[:-1]) | (p[1:] != p[:-1])
    if not new.all():
        starts = np.flatnonzero(new)
        c = np.add.reduceat(c, starts)
        p, th = p[starts], th[starts]
        nz = c != 0
        if not nz.all():
            c, p, th = c[nz], p[nz], th[nz]
    return c, p, th


def _merge_phases(th, merge_tol):
    scale = float(np.max(np.abs(th)))
    tol = merge_tol * scale
    if tol == 0:
        return th
    uniq = np.unique(th)
    if uniq.size < 2 or np.min(np.diff(uniq)) > tol:
        return th
    reps = uniq.copy()
    anchor = uniq[0]
    for i in range(1, uniq.size):
        if uniq[i] - anchor <= tol:
            reps[i] = anchor
        else:
            anchor = uniq[i]
    return reps[np.searchsorted(uniq, th)]


def ep_multiply(f: ExpPoly, g: ExpPoly) -> ExpPoly:
    """Termwise product, canonicalized."""
    if f.is_zero() or g.is_zero():
        return ExpPoly.zero()
    budget = max(f.max_terms, g.max_terms)
    if len(f) * len(g) > 50 * budget:
        raise TermBudgetExceeded(
            f"product of {len(f)} x {len(g)} terms exceeds the raw budget", module=MODULE)
    c = np.multiply.outer(f.coeffs, g.coeffs).ravel()
    p = np.add.outer(f.powers, g.powers).ravel()
    th = np.add.outer(f.phases, g.phases).ravel()
    return ExpPoly(c, p, th, max_terms=budget)


def ep_eval(f: ExpPoly, t):
    """Evaluate at scalar or array ``t``; terms are summed in canonical order."""
    t_arr = np.asarray(t, dtype=float)
    if f.is_zero():
        out = np.zeros(t_arr.shape, dtype=complex)
        return complex(0) if out.ndim == 0 else out
    tt = t_arr.reshape(-1)
    basis = np.power.outer(tt, f.powers.astype(float)) * np.exp(1j * np.multiply.outer(tt, f.phases))
    vals = basis @ f.coeffs
    if t_arr.ndim == 0:
        return complex(vals[0])
    return vals.reshape(t_arr.shape)


def ep_derivative_t(f: ExpPoly) -> ExpPoly:
    """d/dt of each term: ``a (p t^{p-1} + i theta t^p) exp(i theta t)``."""
    if f.is_zero():
        return f
    pos = f.powers > 0
    c = np.concatenate([f.coeffs[pos] * f.powers[pos], 1j * f.phases * f.coeffs])
    p = np.concatenate([f.powers[pos] - 1, f.powers])
    th = np.concatenate([f.phases[pos], f.phases])
    return ExpPoly(c, p, th, max_terms=f.max_terms)


def _taylor_terms_needed(x_max: float) -> int:
    """Smallest J with x_max^{J+1}/(J+1)! below the Taylor cutoff."""
    j, term = 0, x_max
    while term > _TAYLOR_EPS and j < 200:
        j += 1
        term *= x_max / (j + 1)
    return j


def ep_outer_integral(f: ExpPoly, theta0: float, *, resonance_tol=RESONANCE_TOL,
                      near_tol=NEAR_TOL, t_scale=1.0, merge_tol=MERGE_TOL) -> ExpPoly:
    """Closed form of ``F(t) = int_0^t exp(i (t - tau) theta0) f(tau) dtau``.

    For a term ``a tau^p exp(i phi tau)`` with ``delta = phi - theta0``:

    * ``|delta| <= resonance_tol``: resonant, ``a t^{p+1}/(p+1) exp(i theta0 t)``;
    * ``x = |delta| t_scale <= near_tol``, or integration by parts would
      amplify rounding by more than both 1e3 and ``e^x`` (roughly
      ``(p+1)!/x^{p+1}``): the kernel ``int_0^t tau^p exp(i delta tau)`` is
      replaced by its Taylor series, truncated to double precision for
      ``|t| <= t_scale``; this keeps the result continuous across the
      resonance threshold;
    * otherwise: ``p + 1`` integrations by parts.
    """
    if f.is_zero():
        return f
    theta0 = float(theta0)
    a, pw, phi = f.coeffs, f.powers, f.phases
    delta = phi - theta0
    ad = np.abs(delta)
    res = ad <= resonance_tol
    x = np.where(res, 1.0, ad * t_scale)
    # log of the rounding amplification of each closed form on [0, t_scale]
    amp_parts = _lgamma(pw + 2.0) - (pw + 1.0) * np.log(x)
    near = ~res & ((x <= near_tol) | ((amp_parts > _AMP_LIMIT) & (amp_parts > x)))
    gen = ~(res | near)
    out_c, out_p, out_th = [], [], []

    if res.any():
        out_c.append(a[res] / (pw[res] + 1))
        out_p.append(pw[res] + 1)
        out_th.append(np.full(int(res.sum()), theta0))

    if near.any():
        an, pn, dn = a[near], pw[near], delta[near]
        n_terms = _taylor_terms_needed(float(np.max(np.abs(dn))) * t_scale)
        zpow = np.ones_like(an)
        fact = 1.0
        for j in range(n_terms + 1):
            if j:
                zpow = zpow * (1j * dn)
                fact *= j
            out_c.append(an * zpow / (fact * (pn + j + 1)))
            out_p.append(pn + j + 1)
            out_th.append(np.full(an.size, theta0))

    if gen.any():
        ag, pg, phig = a[gen], pw[gen], phi[gen]
        z = 1j * delta[gen]
        for p in np.unique(pg):
            sel = pg == p
            az, zz, ph = ag[sel], z[sel], phig[sel]
            falling = 1.0
            zinv = 1.0 / zz
            zpow = zinv
            last = None
            for j in range(int(p) + 1):
                if j:
                    falling *= (p - j + 1)
                    zpow = zpow * zinv
                coef = az * ((-1) ** j) * falling * zpow
                out_c.append(coef)
                out_p.append(np.full(az.size, p - j, dtype=np.int64))
                out_th.append(ph)
                last = coef
            out_c.append(-last)
            out_p.append(np.zeros(az.size, dtype=np.int64))
            out_th.append(np.full(az.size, theta0))

    return ExpPoly(np.concatenate(out_c), np.concatenate(out_p), np.concatenate(out_th),
                   merge_tol=merge_tol, max_terms=f.max_terms)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def _kernel_g(p, z):
    """``g_p(z) = int_0^1 s^p exp(z s) ds`` for arrays ``p`` (int) and ``z`` (complex).

    Taylor series for ``|z| <= 4``, upward recurrence when ``|z| > p + 2``
    (where it is stable), 64-point Gauss-Legendre otherwise.
    """
    p = np.asarray(p, dtype=np.int64)
    z = np.asarray(z, dtype=complex)
    p, z = np.broadcast_arrays(p, z)
    out = np.empty(z.shape, dtype=complex)
    az = np.abs(z)
    small = az <= 4.0
    big = ~small & (az > p + 2.0)
    mid = ~(small | big)
    if small.any():
        zs, ps = z[small], p[small]
        n_terms = _taylor_terms_needed(float(np.max(np.abs(zs)))) + 2
        acc = 1.0 / (ps + 1.0) + 0j
        term = np.ones_like(zs)
        for j in range(1, n_terms + 1):
            term = term * zs / j
            acc = acc + term / (ps + j + 1.0)
        out[small] = acc
    if big.any():
        zb, pb = z[big], p[big]
        ez = np.exp(zb)
        g = (ez - 1.0) / zb
        res = np.where(pb == 0, g, 0j)
        for q in range(1, int(pb.max()) + 1):
            g = (ez - q * g) / zb
            res = np.where(pb == q, g, res)
        out[big] = res
    if mid.any():
        zm, pm = z[mid], p[mid]
        integrand = _GL_S[None, :] ** pm[:, None] * np.exp(zm[:, None] * _GL_S[None, :])
        out[mid] = integrand @ _GL_W
    return out


def duhamel_values(coeffs, powers, phases, theta0, t: float):
    """Per-term values of ``int_0^t exp(i (t - tau) theta0) a tau^p exp(i phi tau) dtau``.

    Evaluated through the phi-type kernel ``g_p(z) = int_0^1 s^p e^{zs} ds``
    (Taylor series for small ``|z|``, upward recurrence otherwise).  Arrays
    broadcast; ``theta0`` may differ per term.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    powers = np.asarray(powers, dtype=np.int64)
    phases = np.asarray(phases, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    t = float(t)
    if t == 0.0:
        return np.zeros(np.broadcast(coeffs, powers, phases, theta0).shape, dtype=complex)
    z = 1j * (phases - theta0) * t
    return coeffs * np.exp(1j * theta0 * t) * t ** (powers + 1.0) * _kernel_g(powers, z)


def ep_outer_integral_value(f: ExpPoly, theta0: float, t: float) -> complex:
    """Value at ``t`` of the Duhamel integral of ``f``, without building the closed form."""
    if f.is_zero():
        return 0j
    return complex(np.sum(duhamel_values(f.coeffs, f.powers, f.phases, theta0, t)))


def phi1(z):
    """``(e^z - 1)/z`` with a Taylor branch near zero."""
    return _kernel_g(np.zeros_like(np.asarray(z, dtype=complex), dtype=np.int64), z)


__all__ = [
    "ExpPoly", "ep_multiply", "ep_eval", "ep_derivative_t", "ep_outer_integral",
    "ep_outer_integral_value", "duhamel_values", "phi1",
    "MERGE_TOL", "RESONANCE_TOL", "NEAR_TOL", "MAX_TERMS",
]
