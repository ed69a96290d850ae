import cmath
import json
import math

import numpy as np
import pytest

from conftest import LN10, tree_field
from qkdv.errors import BudgetExceeded, InvalidArgument
from qkdv.exp_poly import ep_eval
from qkdv.lattice import CoeffField, box_indices, l1, phase
from qkdv.picard import SolverConfig, picard_iterates
from qkdv.trees import (GammaTree, TreeAssignment, enumerate_trees, expansion_sum,
                        exponent_multiset, exponent_set, iter_assignments, mu, oracle_report,
                        tree_f, tree_I, tree_P, tree_sum_all, tree_sum_ck)


def _random_assignment(rng, tree, nu=1, radius=3):
    box = box_indices(nu, radius)
    return TreeAssignment(tree, tuple(box[i] for i in rng.integers(0, len(box), tree.d)))


class TestEnumeration:
    @pytest.mark.parametrize("k,size", [(1, 2), (2, 5), (3, 26), (4, 677)])
    def test_sizes(self, k, size):
        trees = enumerate_trees(k)
        assert len(trees) == size
        if k > 1:
            assert size == 1 + len(enumerate_trees(k - 1)) ** 2

    def test_pair_of_ones(self):
        t = GammaTree.pair(GammaTree.leaf1(), GammaTree.leaf1())
        assert (t.l, t.d, t.F) == (3, 4, 3)
        assert t in enumerate_trees(2)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_stat_recursions(self, k):
        for t in enumerate_trees(k):
            if t.kind == "leaf0":
                assert (t.l, t.d, t.F) == (0, 1, 1)
            elif t.kind == "leaf1":
                assert (t.l, t.d, t.F) == (1, 2, 1)
            else:
                a, b = t.left, t.right
                assert t.l == a.l + b.l + 1 and t.d == a.d + b.d
                assert t.F == t.l * a.F * b.F

    def test_range(self):
        with pytest.raises(InvalidArgument):
            enumerate_trees(5)


class TestTreeIntegral:
    def test_leaf(self):
        a = TreeAssignment(GammaTree.leaf0(1), ((2,),))
        val = tree_I(0.3, a, [1.0])
        assert abs(val - cmath.exp(0.3j * 8)) < 1e-15 and abs(abs(val) - 1) < 1e-15

    def test_resonant_leaf1(self):
        a = TreeAssignment(GammaTree.leaf1(), ((0,), (2,)))
        for t in (0.1, 0.5):
            assert abs(tree_I(t, a, [1.0]) - t * cmath.exp(8j * t)) < 1e-14

    def test_bound(self):
        rng = np.random.default_rng(3)
        trees = [t for k in (1, 2, 3) for t in enumerate_trees(k)]
        for _ in range(100):
            tree = trees[rng.integers(len(trees))]
            a = _random_assignment(rng, tree)
            t = rng.uniform(0, 1)
            assert abs(tree_I(t, a, [1.0])) <= t ** tree.l / tree.F * (1 + 1e-10) + 1e-15


class TestWeights:
    def test_f_bounded_by_P(self):
        rng = np.random.default_rng(8)
        om = [1.0, (1 + 5 ** 0.5) / 2]
        norm = math.hypot(*om)
        for _ in range(100):
            tree = enumerate_trees(3)[rng.integers(26)]
            a = _random_assignment(rng, tree, nu=2, radius=3)
            assert abs(tree_f(a, om)) <= norm ** tree.l * tree_P(a) * (1 + 1e-12)

    def test_P_expansion_bound(self):
        rng = np.random.default_rng(9)
        for k in (1, 2, 3):
            for tree in enumerate_trees(k):
                exps = exponent_multiset(tree)
                assert all(sum(e) == tree.l and len(e) == tree.d for e in exps)
                for _ in range(10):
                    a = _random_assignment(rng, tree, nu=2, radius=4)
                    assert tree_P(a) <= expansion_sum(a, exps)

    def test_deduplicated_set_is_too_small(self):
        tree = GammaTree.pair(GammaTree.leaf1(), GammaTree.leaf1())
        a = TreeAssignment(tree, ((1,), (1,), (1,), (1,)))
        assert tree_P(a) == 16
        assert expansion_sum(a, exponent_multiset(tree)) == 16
        assert expansion_sum(a, exponent_set(tree)) < 16


class TestTreeSums:
    def test_zero_data(self):
        c = CoeffField(1, 3, {}, (0.1, LN10))
        for k in (1, 2, 3):
            assert all(v == 0 for v in tree_sum_all(k, 0.05, c, [1.0], 3).values())

    def test_single_tree_k1(self):
        # only c(3) is nonzero, so no pair of leaves can land in the box
        c = CoeffField(1, 3, {(3,): 0.01}, (0.1, 1.0))
        val = tree_sum_ck(1, (3,), 0.2, c, [1.0], 3)
        assert abs(val - 0.01 * cmath.exp(0.2j * 27)) < 1e-16

    @pytest.mark.parametrize("k", [1, 2])
    def test_equals_picard(self, k):
        c = tree_field()
        t = 0.05
        picard = dict(picard_iterates(c, [1.0], SolverConfig(3, t), K=k))[k]
        trees = tree_sum_all(k, t, c, [1.0], 3)
        for n in box_indices(1, 3):
            p = ep_eval(picard[n], t)
            assert abs(trees[n] - p) <= 1e-10 * abs(p)

    def test_by_tree_sums_to_total(self):
        c = tree_field()
        parts = tree_sum_all(2, 0.05, c, [1.0], 3, by_tree=True)
        total = tree_sum_all(2, 0.05, c, [1.0], 3)
        for n, vals in parts.items():
            assert len(vals) == 5 and abs(sum(vals) - total[n]) < 1e-16

    def test_assignment_enumeration_matches_direct_sum(self):
        # brute-force k = 2 sum for one mode through explicit assignments
        c = tree_field()
        t, n = 0.05, (1,)
        support = [m for m in box_indices(1, 3) if c[m] != 0]
        ref = 0j
        for tree in enumerate_trees(2):
            for a in iter_assignments(tree, support, n):
                if _inner_nodes_in_box(a, 3):
                    amp = np.prod([c[m] for m in a.leaves])
                    ref += amp * tree_f(a, [1.0]) * tree_I(t, a, [1.0])
        assert abs(tree_sum_ck(2, n, t, c, [1.0], 3) - ref) <= 1e-12 * abs(ref)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            tree_sum_all(3, 0.05, tree_field(), [1.0], 3, budget=10)

    def test_report(self):
        doc = json.loads(oracle_report(2, (1,), 1 + 1j, 1 + 1.5j))
        assert set(doc) == {"k", "n", "picard_value", "tree_value", "abs_diff"}
        assert doc["abs_diff"] == 0.5


def _inner_nodes_in_box(a, R):
    if a.tree.kind == "leaf0":
        return True
    if l1(mu(a)) > R:
        return False
    left, right = a.split()
    return _inner_nodes_in_box(left, R) and _inner_nodes_in_box(right, R)
