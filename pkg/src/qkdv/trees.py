"""Brute-force tree expansion of the Picard iterates.

Unrolling the recursion ``k`` times writes ``c_k(t, n)`` as a sum over
binary trees ``gamma`` in ``Gamma^(k)`` and over leaf assignments
``m = (m_1, ..., m_d)`` with ``sum m_j = n``::

    c_k(t, n) = sum_gamma sum_m  C(m) f(m) I(t, m)

where ``C`` is the product of leaf amplitudes, ``f`` collects the
``-i mu.w / 2`` prefactors of the internal nodes and ``I`` is the nested
oscillatory integral.  This module enumerates that sum directly and is
used as an oracle for :mod:`qkdv.picard`.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import exp_poly as ep
from .errors import BudgetExceeded, InvalidArgument
from .exp_poly import ExpPoly, ep_outer_integral
from .lattice import CoeffField, as_frequency, box_indices, l1, phase, phase_cube

MODULE = "tree_oracle"

MAX_DEPTH = 4
SUM_MAX_DEPTH = 3
TUPLE_BUDGET = 10_000_000

LEAF0, LEAF1, PAIR = "leaf0", "leaf1", "pair"


@dataclass(frozen=True)
class GammaTree:
    """Element of ``Gamma^(k)`` with cached statistics ``l`` (length), ``d`` (leaves), ``F`` (weight)."""

    kind: str
    depth: int
    left: "GammaTree | None" = None
    right: "GammaTree | None" = None
    l: int = field(default=0, compare=False)
    d: int = field(default=1, compare=False)
    F: int = field(default=1, compare=False)

    @classmethod
    def leaf0(cls, depth: int) -> "GammaTree":
        return cls(LEAF0, depth, l=0, d=1, F=1)

    @classmethod
    def leaf1(cls) -> "GammaTree":
        return cls(LEAF1, 1, l=1, d=2, F=1)

    @classmethod
    def pair(cls, left: "GammaTree", right: "GammaTree") -> "GammaTree":
        if left.depth != right.depth:
            raise InvalidArgument("children of a pair must have equal depth", module=MODULE)
        l = left.l + right.l + 1
        return cls(PAIR, left.depth + 1, left, right, l=l, d=left.d + right.d,
                   F=l * left.F * right.F)

    def label(self) -> str:
        if self.kind == LEAF0:
            return "0"
        if self.kind == LEAF1:
            return "1"
        return f"({self.left.label()},{self.right.label()})"

    def __repr__(self):
        return f"GammaTree[k={self.depth}]{self.label()}"


@functools.lru_cache(maxsize=None)
def _trees(k: int) -> tuple:
    if k == 1:
        return (GammaTree.leaf0(1), GammaTree.leaf1())
    prev = _trees(k - 1)
    return (GammaTree.leaf0(k),) + tuple(GammaTree.pair(a, b) for a in prev for b in prev)


def enumerate_trees(k: int) -> list:
    """All of ``Gamma^(k)``: the zero tree first, then pairs in product order."""
    if not 1 <= k <= MAX_DEPTH:
        raise InvalidArgument(f"tree depth must be in 1..{MAX_DEPTH}, got {k}", module=MODULE)
    return list(_trees(k))


@dataclass(frozen=True)
class TreeAssignment:
    """A tree together with its ordered leaf indices (left subtree first)."""

    tree: GammaTree
    leaves: tuple

    def __post_init__(self):
        leaves = tuple(tuple(int(v) for v in m) for m in self.leaves)
        if len(leaves) != self.tree.d:
            raise InvalidArgument(
                f"tree with {self.tree.d} leaves got {len(leaves)} indices", module=MODULE)
        if len({len(m) for m in leaves}) > 1:
            raise InvalidArgument("leaf indices must share one dimension", module=MODULE)
        object.__setattr__(self, "leaves", leaves)

    def split(self):
        """Children assignments of a pair node (``leaf1`` splits into two leaves)."""
        t = self.tree
        if t.kind == PAIR:
            return (TreeAssignment(t.left, self.leaves[:t.left.d]),
                    TreeAssignment(t.right, self.leaves[t.left.d:]))
        if t.kind == LEAF1:
            z = GammaTree.leaf0(1)
            return TreeAssignment(z, self.leaves[:1]), TreeAssignment(z, self.leaves[1:])
        raise InvalidArgument("leaf assignments do not split", module=MODULE)


def mu(m) -> tuple:
    """``mu(m) = sum_j m_j``."""
    if isinstance(m, TreeAssignment):
        m = m.leaves
    return tuple(int(sum(col)) for col in zip(*m))


def leaf_norm(a: TreeAssignment) -> int:
    """``|m| = sum_j |m_j|``."""
    return sum(l1(m) for m in a.leaves)


def amplitude_product(a: TreeAssignment, c_init: CoeffField) -> complex:
    out = 1 + 0j
    for m in a.leaves:
        out *= c_init[m]
    return out


def tree_f(a: TreeAssignment, omega) -> complex:
    """Product of ``-i (mu . w)/2`` over internal nodes (``1`` for a bare leaf)."""
    om = as_frequency(omega)
    if a.tree.kind == LEAF0:
        return 1 + 0j
    left, right = a.split()
    return -0.5j * phase(mu(a), om) * tree_f(left, om) * tree_f(right, om)


def tree_P(a: TreeAssignment) -> int:
    """Product of ``|mu|`` over internal nodes."""
    if a.tree.kind == LEAF0:
        return 1
    left, right = a.split()
    return l1(mu(a)) * tree_P(left) * tree_P(right)


def tree_I_poly(a: TreeAssignment, omega, **kw) -> ExpPoly:
    """``I(t, m)`` as an exponential polynomial, built bottom-up."""
    om = as_frequency(omega)
    theta = phase_cube(mu(a), om)
    if a.tree.kind == LEAF0:
        return ExpPoly.monomial(1.0, 0, theta)
    left, right = a.split()
    prod = tree_I_poly(left, om, **kw) * tree_I_poly(right, om, **kw)
    return ep_outer_integral(prod, theta, **kw)


def tree_I(t: float, a: TreeAssignment, omega) -> complex:
    """Value of the nested oscillatory integral ``I(t, m)``."""
    return complex(tree_I_poly(a, omega)(float(t)))


# ---------------------------------------------------------------------------
# exponent sets for the P-expansion
# ---------------------------------------------------------------------------

def exponent_multiset(tree: GammaTree) -> list:
    """``A^(k, gamma)`` as a list with multiplicity, entries in leaf order.

    Pairs combine the children's vectors and add one unit vector; equal
    vectors reached along different routes are all kept, which is what the
    expansion of ``P`` as a sum of monomials produces.
    """
    if tree.kind == LEAF0:
        return [(0,)]
    if tree.kind == LEAF1:
        return [(1, 0), (0, 1)]
    left, right = exponent_multiset(tree.left), exponent_multiset(tree.right)
    out = []
    for a in left:
        for b in right:
            base = a + b
            for j in range(tree.d):
                out.append(base[:j] + (base[j] + 1,) + base[j + 1:])
    return out


def exponent_set(tree: GammaTree) -> list:
    """Deduplicated, sorted version of :func:`exponent_multiset`."""
    return sorted(set(exponent_multiset(tree)))


def expansion_sum(a: TreeAssignment, exponents) -> int:
    """``sum over alpha of prod_i |m_i|^{alpha_i}`` (with ``0^0 = 1``)."""
    norms = [l1(m) for m in a.leaves]
    return sum(math.prod(x ** e for x, e in zip(norms, alpha)) for alpha in exponents)


# ---------------------------------------------------------------------------
# the full tree sum
# ---------------------------------------------------------------------------

def _count_assignments(k: int, support_size: int) -> int:
    return sum(support_size ** (t.d - 1) for t in _trees(k))


class _SubtreeTable:
    """Per-subtree lists of ``(leaves, mu, C f, I)`` with every node inside the box."""

    def __init__(self, c_init: CoeffField, omega, R: int, **kw):
        self.c = c_init
        self.om = as_frequency(omega)
        self.R = R
        self.kw = kw
        self.support = [m for m in c_init.entries if l1(m) <= R]
        self._cache = {}

    def rows(self, tree: GammaTree) -> list:
        key = (tree.kind, tree.label(), tree.depth)
        if key not in self._cache:
            self._cache[key] = self._build(tree)
        return self._cache[key]

    def _build(self, tree: GammaTree) -> list:
        om = self.om
        if tree.kind == LEAF0:
            return [((m,), m, self.c[m], ExpPoly.monomial(1.0, 0, phase_cube(m, om)))
                    for m in self.support]
        if tree.kind == LEAF1:
            z = GammaTree.leaf0(1)
            return self._combine(self.rows(z), self.rows(z))
        return self._combine(self.rows(tree.left), self.rows(tree.right))

    def _combine(self, left_rows, right_rows) -> list:
        out = []
        for lv, lm, lcf, lI in left_rows:
            for rv, rm, rcf, rI in right_rows:
                m = tuple(a + b for a, b in zip(lm, rm))
                if l1(m) > self.R:
                    continue
                w = phase(m, self.om)
                cf = lcf * rcf * (-0.5j * w)
                if cf == 0:
                    continue
                I = ep_outer_integral(lI * rI, phase_cube(m, self.om), **self.kw)
                out.append((lv + rv, m, cf, I))
        return out


def tree_sum_all(k: int, t: float, c_init: CoeffField, omega, R: int, *,
                 budget: int = TUPLE_BUDGET, by_tree: bool = False):
    """Tree sums for every ``|n| <= R`` at once: ``{n: c_k(t, n)}``.

    Every internal node's partial sum ``mu`` is kept inside the box, matching
    the truncated Picard iterate.  The root integral is evaluated directly
    from the product terms through the Duhamel kernel; subtrees are built as
    exponential polynomials and memoized.  With ``by_tree=True`` the result
    maps ``n`` to a list of per-tree contributions in enumeration order.
    """
    om = as_frequency(omega)
    if c_init.nu != om.nu:
        raise InvalidArgument("field and omega dimensions differ", module=MODULE)
    if not 1 <= k <= SUM_MAX_DEPTH:
        raise InvalidArgument(f"tree sums supported for 1 <= k <= {SUM_MAX_DEPTH}",
                              module=MODULE)
    table = _SubtreeTable(c_init, om, R)
    count = _count_assignments(k, len(table.support))
    if count > budget:
        raise BudgetExceeded(f"{count} leaf assignments exceed the budget {budget}",
                             module=MODULE)
    t = float(t)
    box = box_indices(om.nu, R)
    trees = _trees(k)
    acc = {n: [] for n in box}
    for tree in trees:
        contrib = {n: 0j for n in box}
        if tree.kind == LEAF0:
            for _, m, cf, I in table.rows(tree):
                contrib[m] += cf * I(t)
        else:
            if tree.kind == LEAF1:
                z = GammaTree.leaf0(1)
                left_rows, right_rows = table.rows(z), table.rows(z)
            else:
                left_rows, right_rows = table.rows(tree.left), table.rows(tree.right)
            by_mu = {}
            for row in right_rows:
                by_mu.setdefault(row[1], []).append(row)
            for n in box:
                w = phase(n, om)
                if w == 0.0:
                    continue
                contrib[n] = _root_value(n, w, phase_cube(n, om), t, left_rows, by_mu)
        for n in box:
            acc[n].append(contrib[n])
    if by_tree:
        return acc
    return {n: complex(math.fsum(v.real for v in vals) + 1j * math.fsum(v.imag for v in vals))
            for n, vals in acc.items()}


def _root_value(n, w, theta, t, left_rows, right_by_mu) -> complex:
    cs, ps, phs = [], [], []
    for _, lm, lcf, lI in left_rows:
        rm = tuple(a - b for a, b in zip(n, lm))
        rights = right_by_mu.get(rm)
        if not rights:
            continue
        for _, _, rcf, rI in rights:
            cf = lcf * rcf * (-0.5j * w)
            if cf == 0:
                continue
            cs.append(cf * np.multiply.outer(lI.coeffs, rI.coeffs).ravel())
            ps.append(np.add.outer(lI.powers, rI.powers).ravel())
            phs.append(np.add.outer(lI.phases, rI.phases).ravel())
    if not cs:
        return 0j
    vals = ep.duhamel_values(np.concatenate(cs), np.concatenate(ps), np.concatenate(phs),
                             theta, t)
    return complex(math.fsum(vals.real) + 1j * math.fsum(vals.imag))


def tree_sum_ck(k: int, n, t: float, c_init: CoeffField, omega, R: int, *,
                budget: int = TUPLE_BUDGET) -> complex:
    """``c_k(t, n)`` from the tree expansion."""
    om = as_frequency(omega)
    n = tuple(int(v) for v in n)
    if l1(n) > R:
        return 0j
    return tree_sum_all(k, t, c_init, om, R, budget=budget)[n]


def iter_assignments(tree: GammaTree, support, n) -> Iterator[TreeAssignment]:
    """Leaf-lexicographic assignments with ``mu = n``: all leaves but the last are free."""
    support = list(support)
    sset = set(support)
    for head in itertools.product(support, repeat=tree.d - 1):
        last = tuple(a - sum(col) for a, col in zip(n, zip(*head))) if head else tuple(n)
        if last in sset:
            yield TreeAssignment(tree, head + (last,))


def oracle_report(k, n, picard_value, tree_value) -> str:
    """Report JSON with keys ``k, n, picard_value, tree_value, abs_diff``."""
    doc = {"k": int(k), "n": list(n),
           "picard_value": [picard_value.real, picard_value.imag],
           "tree_value": [tree_value.real, tree_value.imag],
           "abs_diff": abs(picard_value - tree_value)}
    return json.dumps(doc)


__all__ = [
    "GammaTree", "TreeAssignment", "enumerate_trees", "mu", "leaf_norm", "amplitude_product",
    "tree_f", "tree_P", "tree_I_poly", "tree_I", "exponent_multiset", "exponent_set",
    "expansion_sum", "tree_sum_all", "tree_sum_ck", "iter_assignments", "oracle_report",
]
