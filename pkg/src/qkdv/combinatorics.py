"""Multi-index combinatorics behind the convergence estimates.

Compositions of an integer into ``N`` nonnegative parts, the reduction map
``Phi``, exact factorial sums, the exponent sets ``B^(k)``, and empirical
estimation of the constants ``C0`` and ``C1`` that enter the horizon and
contraction rates.
"""

from __future__ import annotations

import csv
import functools
import io
import itertools
import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import BudgetExceeded, InvalidArgument

MODULE = "bounds_combinatorics"

ENUM_LIMIT = 8
FACTORIAL_SUM_LIMIT = 64
BUILD_B_LIMIT = 6

C0_RESOLUTION = 1e-3
C0_NUS = (1, 2, 3)
C0_KAPPAS = (0.5, 0.75, 1.0, 1.5, 2.0)
C0_MAX_WEIGHT = 6
_SERIES_RTOL = 1e-15


def enumerate_A(N: int, l: int) -> list:
    """All ``alpha`` in ``Z_+^N`` with ``sum(alpha) == l``, in descending lexicographic order."""
    if N < 1 or l < 0:
        raise InvalidArgument(f"need N >= 1 and l >= 0, got N={N}, l={l}", module=MODULE)
    if N > ENUM_LIMIT or l > ENUM_LIMIT:
        raise BudgetExceeded(f"enumeration limited to N, l <= {ENUM_LIMIT}", module=MODULE)
    return list(_compositions(N, l))


def _compositions(N, l):
    if N == 1:
        yield (l,)
        return
    for first in range(l, -1, -1):
        for rest in _compositions(N - 1, l - first):
            yield (first,) + rest


def phi_map(alpha: Sequence[int]):
    """Decrement the first minimal positive entry.

    Returns ``(beta, j1)`` with ``j1`` the 1-based position that was decremented.
    """
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise InvalidArgument("multi-index entries must be nonnegative", module=MODULE)
    positive = [a for a in alpha if a > 0]
    if not positive:
        raise InvalidArgument("phi_map needs a positive entry", module=MODULE)
    low = min(positive)
    j = alpha.index(low)
    beta = alpha[:j] + (alpha[j] - 1,) + alpha[j + 1:]
    return beta, j + 1


def phi_properties(N: int, l: int) -> dict:
    """Check the reduction-map properties on all of ``A_N(l)`` by enumeration.

    Keys map to booleans: ``maps_into`` (image lies in ``A_N(l-1)``),
    ``strict_minimum`` (the decremented entry is below every other positive
    entry), ``agree_off_j1``, ``same_j1_injective``, ``fiber_at_most_N`` and
    ``injective_above_one`` (restricted to ``alpha_{j1} > 1``).
    """
    if l < 1:
        raise InvalidArgument("phi_properties needs l >= 1", module=MODULE)
    domain = enumerate_A(N, l)
    target = set(enumerate_A(N, l - 1))
    images = [(a,) + phi_map(a) for a in domain]
    fibers = {}
    for a, b, j in images:
        fibers.setdefault(b, []).append((a, j))
    out = {
        "maps_into": all(b in target for _, b, _ in images),
        "strict_minimum": all(
            all(b[j - 1] < b[i] for i in range(N) if i != j - 1 and b[i] > 0)
            for _, b, j in images),
        "fiber_at_most_N": max(len(f) for f in fibers.values()) <= N,
    }
    agree = same_j1 = above_one = True
    for group in fibers.values():
        for (a, j), (a2, j2) in itertools.combinations(group, 2):
            if any(a[i] != a2[i] for i in range(N) if i not in (j - 1, j2 - 1)):
                agree = False
            if j == j2:
                same_j1 = False  # distinct preimages with the same j1
            if a[j - 1] > 1 and a2[j2 - 1] > 1:
                above_one = False
    out.update(agree_off_j1=agree, same_j1_injective=same_j1, injective_above_one=above_one)
    return out


def factorial_sum_enumerated(N: int, l: int) -> int:
    """``factorial_sum`` by direct enumeration (small ``N, l`` only)."""
    return sum(multi_factorial(a) for a in enumerate_A(N, l))


def multi_factorial(alpha: Iterable[int]) -> int:
    """``alpha! = prod alpha_i!``."""
    out = 1
    for a in alpha:
        out *= math.factorial(int(a))
    return out


def factorial_sum(N: int, l: int) -> int:
    """Exact ``sum over alpha in A_N(l) of prod alpha_i!``.

    Computed as the ``x^l`` coefficient of ``(sum_a a! x^a)^N`` with Python
    integers, so it does not enumerate.
    """
    if N < 1 or l < 0:
        raise InvalidArgument(f"need N >= 1 and l >= 0, got N={N}, l={l}", module=MODULE)
    if N > FACTORIAL_SUM_LIMIT or l > FACTORIAL_SUM_LIMIT:
        raise BudgetExceeded(f"factorial_sum limited to N, l <= {FACTORIAL_SUM_LIMIT}",
                             module=MODULE)
    base = [math.factorial(a) for a in range(l + 1)]
    poly = [1] + [0] * l
    for _ in range(N):
        nxt = [0] * (l + 1)
        for i, pi in enumerate(poly):
            if pi:
                for a in range(l + 1 - i):
                    nxt[i + a] += pi * base[a]
        poly = nxt
    return poly[l]


def unit_vectors(size: int) -> list:
    """The set ``I`` of weight-one vectors in ``Z_+^size``."""
    return [tuple(1 if i == j else 0 for i in range(size)) for j in range(size)]


def build_B(k: int) -> list:
    """Exponent set ``B^(k)`` in ``Z_+^{k+1}``, deduplicated, descending lexicographic."""
    if k < 1:
        raise InvalidArgument("build_B needs k >= 1", module=MODULE)
    if k > BUILD_B_LIMIT:
        raise BudgetExceeded(f"build_B limited to k <= {BUILD_B_LIMIT}", module=MODULE)
    current = {(1, 0), (0, 1)}
    for level in range(2, k + 1):
        units = unit_vectors(level + 1)
        current = {tuple(a + b for a, b in zip(beta + (0,), e))
                   for beta in current for e in units}
    return sorted(current, reverse=True)


# ---------------------------------------------------------------------------
# the constant C0
# ---------------------------------------------------------------------------

def weighted_series(a: int, kappa: float) -> float:
    """``S(a, kappa) = sum over m in Z of |m|^a exp(-kappa |m|)`` with ``0^0 = 1``.

    Direct summation, stopped once the remaining tail is below 1e-15 of the head.
    """
    if kappa <= 0:
        raise InvalidArgument("kappa must be positive", module=MODULE)
    q = math.exp(-kappa)
    terms = []
    m = 1
    while True:
        term = m ** a * q ** m
        terms.append(term)
        # past the peak the ratio of consecutive terms is below r < 1
        if m > a / kappa:
            r = ((m + 1) / m) ** a * q
            if r < 1 and term * r / (1 - r) < _SERIES_RTOL * math.fsum(terms):
                break
        m += 1
    return (1.0 if a == 0 else 0.0) + 2.0 * math.fsum(terms)


class C0Row(NamedTuple):
    nu: int
    kappa: float
    alpha: tuple
    lhs: float
    threshold: float


def lattice_moment(alpha: Sequence[int], kappa: float) -> float:
    """Left side of the moment inequality: ``prod_j S(alpha_j, kappa)``."""
    out = 1.0
    for a in alpha:
        out *= weighted_series(int(a), kappa)
    return out


def moment_threshold(alpha: Sequence[int], kappa: float) -> tuple:
    """``(lhs, C)`` where ``C`` is the least constant with ``lhs <= alpha! (C/kappa)^{|alpha| nu}``."""
    alpha = tuple(int(a) for a in alpha)
    w = sum(alpha) * len(alpha)
    if w == 0:
        raise InvalidArgument("moment inequality is only meaningful for |alpha| >= 1",
                              module=MODULE)
    lhs = lattice_moment(alpha, kappa)
    thr = kappa * (lhs / multi_factorial(alpha)) ** (1.0 / w)
    return lhs, thr


def _moment_rhs(alpha, kappa, C0):
    w = sum(alpha) * len(alpha)
    return multi_factorial(alpha) * (C0 / kappa) ** w


def default_alpha_list(nu: int, max_weight: int = C0_MAX_WEIGHT) -> list:
    out = []
    for w in range(1, max_weight + 1):
        out.extend(_compositions(nu, w))
    return out


def c0_rows(nu_list=C0_NUS, kappa_list=C0_KAPPAS, alpha_list=None) -> list:
    rows = []
    for nu in nu_list:
        alphas = default_alpha_list(nu) if alpha_list is None else \
            [tuple(a) for a in alpha_list if len(a) == nu]
        for kappa in kappa_list:
            for alpha in alphas:
                if sum(alpha) == 0:
                    continue
                lhs, thr = moment_threshold(alpha, kappa)
                rows.append(C0Row(nu, float(kappa), tuple(alpha), lhs, thr))
    return rows


def _round_up(x, res=C0_RESOLUTION):
    return math.ceil(x / res - 1e-9) * res


def estimate_C0(nu, kappa_list=C0_KAPPAS, alpha_list=None) -> float:
    """Smallest ``C0`` on a 1e-3 grid satisfying the moment inequality on every tested case.

    ``nu`` may be an integer or a list of dimensions.  ``alpha_list`` defaults to
    all ``alpha`` with ``1 <= |alpha| <= 6``; zero exponent vectors are skipped.
    """
    nus = (nu,) if isinstance(nu, (int, np.integer)) else tuple(nu)
    rows = c0_rows(nus, kappa_list, alpha_list)
    if not rows:
        raise InvalidArgument("no admissible (nu, kappa, alpha) cases", module=MODULE)
    C0 = _round_up(max(r.threshold for r in rows))
    # guard the grid rounding against floating error
    while any(r.lhs > _moment_rhs(r.alpha, r.kappa, C0) for r in rows):
        C0 += C0_RESOLUTION
    return round(C0, 6)


def c0_certificate_csv(nu_list=C0_NUS, kappa_list=C0_KAPPAS, alpha_list=None) -> str:
    """Certificate table ``nu,kappa,alpha,lhs,rhs,C0`` for the reported ``C0``."""
    rows = c0_rows(nu_list, kappa_list, alpha_list)
    C0 = estimate_C0(tuple(nu_list), kappa_list, alpha_list)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nu", "kappa", "alpha", "lhs", "rhs", "C0"])
    for r in rows:
        w.writerow([r.nu, repr(r.kappa), " ".join(map(str, r.alpha)), repr(r.lhs),
                    repr(_moment_rhs(r.alpha, r.kappa, C0)), repr(C0)])
    return buf.getvalue()


@functools.lru_cache(maxsize=None)
def certified_C0() -> float:
    """``C0`` over the fixed certification domain (nu <= 3, kappa in [0.5, 2], |alpha| <= 6)."""
    return estimate_C0(C0_NUS, C0_KAPPAS)


# ---------------------------------------------------------------------------
# the constant C1
# ---------------------------------------------------------------------------

class DiffSample(NamedTuple):
    """One logged Cauchy difference: ``d = max_n |c_k - c_{k-1}| e^{kappa|n|/4}`` at time ``t``."""
    k: int
    t: float
    d: float
    B0: float
    kappa: float
    nu: int
    omega_norm: float


class C1Fit(NamedTuple):
    raw: float
    value: float
    witness: DiffSample | None


def estimate_C1(samples: Iterable[DiffSample], C0: float | None = None) -> C1Fit:
    """Least ``C1`` with ``d <= B0^{k+1} (4^{nu+1} C1 kappa^{-nu} |omega| t)^k`` on all samples.

    ``value`` is the fit floored at ``C0``; zero data therefore returns ``C0``.
    """
    C0 = certified_C0() if C0 is None else float(C0)
    raw, witness = 0.0, None
    for s in samples:
        if s.k < 1 or s.d <= 0 or s.t <= 0:
            continue
        scale = 4.0 ** (s.nu + 1) * s.kappa ** (-s.nu) * s.omega_norm * s.t
        need = math.exp((math.log(s.d) - (s.k + 1) * math.log(s.B0)) / s.k) / scale
        if need > raw:
            raw, witness = need, s
    return C1Fit(raw, max(raw, C0), witness)


__all__ = [
    "enumerate_A", "phi_map", "phi_properties", "multi_factorial", "factorial_sum",
    "factorial_sum_enumerated", "unit_vectors", "build_B",
    "weighted_series", "lattice_moment", "moment_threshold", "estimate_C0",
    "c0_certificate_csv", "certified_C0", "DiffSample", "C1Fit", "estimate_C1",
]
