import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from qkdv.errors import TermBudgetExceeded
from qkdv.exp_poly import (RESONANCE_TOL, ExpPoly, _kernel_g, duhamel_values, ep_derivative_t,
                           ep_eval, ep_multiply, ep_outer_integral, ep_outer_integral_value, phi1)


def _cquad(f, a, b):
    re = quad(lambda s: f(s).real, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    im = quad(lambda s: f(s).imag, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return re + 1j * im


def _random_poly(rng, size=5, max_power=3, phase_scale=10.0):
    return ExpPoly(rng.normal(size=size) + 1j * rng.normal(size=size),
                   rng.integers(0, max_power + 1, size=size),
                   rng.uniform(-phase_scale, phase_scale, size=size))


term = st.tuples(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
                 st.integers(0, 4), st.floats(-20, 20))


class TestCanonical:
    def test_merging_and_order(self):
        f = ExpPoly([1, 2, 3], [1, 1, 0], [2.0, 2.0 + 1e-14, -1.0])
        assert f.terms == [(3 + 0j, 0, -1.0), (3 + 0j, 1, 2.0)]

    def test_zero_terms_removed(self):
        assert ExpPoly([1, -1], [0, 0], [0.0, 0.0]).is_zero()

    def test_value_at_zero(self):
        f = ExpPoly([2, 5, 7j], [0, 1, 0], [1.0, 0.0, 3.0])
        assert f.value_at_zero() == 2 + 7j

    def test_term_budget(self):
        rng = np.random.default_rng(0)
        f = ExpPoly(rng.normal(size=30), np.zeros(30, int), rng.normal(size=30), max_terms=100)
        with pytest.raises(TermBudgetExceeded):
            ep_multiply(f, f)

    def test_csv_and_list_roundtrip(self):
        f = _random_poly(np.random.default_rng(1))
        assert len(f.to_csv().splitlines()) == len(f)
        g = ExpPoly.from_list(f.to_list())
        assert g.terms == f.terms


class TestMultiply:
    def test_exponent_law(self):
        f = ep_multiply(ExpPoly.monomial(1, 0, 1.5), ExpPoly.monomial(1, 0, -0.25))
        assert f.terms == [(1 + 0j, 0, 1.25)]

    def test_powers_add(self):
        t = ExpPoly.monomial(1, 1, 0.0)
        assert (t * t).terms == [(1 + 0j, 2, 0.0)]

    def test_random_product_matches_pointwise(self):
        rng = np.random.default_rng(5)
        f, g = _random_poly(rng), _random_poly(rng)
        ts = np.linspace(0, 2, 20)
        ref = ep_eval(f, ts) * ep_eval(g, ts)
        got = ep_eval(ep_multiply(f, g), ts)
        assert np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)) < 1e-12


class TestEval:
    def test_zero(self):
        assert ep_eval(ExpPoly.zero(), 3.7) == 0

    def test_single_term(self):
        assert ep_eval(ExpPoly.monomial(2.0, 1, 0.0), 3.0) == 6.0

    def test_array_shape(self):
        f = ExpPoly.monomial(1.0, 2, 1.0)
        assert ep_eval(f, np.zeros((3, 2))).shape == (3, 2)


class TestDerivative:
    def test_simple(self):
        assert ep_derivative_t(ExpPoly.monomial(1.0, 1, 0.0)).terms == [(1 + 0j, 0, 0.0)]
        d = ep_derivative_t(ExpPoly.monomial(1.0, 0, 2.5))
        assert d.terms == [(2.5j, 0, 2.5)]

    def test_finite_differences(self):
        rng = np.random.default_rng(9)
        f = _random_poly(rng, phase_scale=3.0)
        h = 1e-5
        ts = rng.uniform(0.1, 1.0, 10)
        fd = (ep_eval(f, ts + h) - ep_eval(f, ts - h)) / (2 * h)
        assert np.max(np.abs(ep_eval(ep_derivative_t(f), ts) - fd)) < 1e-6


class TestOuterIntegral:
    def test_resonant(self):
        F = ep_outer_integral(ExpPoly.monomial(1.0, 0, 2.0), 2.0)
        assert F.terms == [(1 + 0j, 1, 2.0)]

    def test_constant(self):
        F = ep_outer_integral(ExpPoly.constant(1.0), 0.0)
        assert F.terms == [(1 + 0j, 1, 0.0)]

    @pytest.mark.parametrize("t", [0.1, 0.7])
    def test_against_quadrature(self, t):
        f = ExpPoly.monomial(1.0, 2, 3.0)
        F = ep_outer_integral(f, -1.0)
        ref = _cquad(lambda s: cmath.exp(-1j * (t - s)) * s * s * cmath.exp(3j * s), 0.0, t)
        assert abs(ep_eval(F, t) - ref) < 1e-10

    def test_vanishes_at_zero(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            F = ep_outer_integral(_random_poly(rng), rng.uniform(-5, 5))
            assert abs(ep_eval(F, 0.0)) < 1e-13

    @settings(max_examples=40, deadline=None)
    @given(st.lists(term, min_size=1, max_size=6), st.floats(-20, 20))
    def test_fundamental_theorem(self, terms, theta0):
        f = ExpPoly.from_terms(terms)
        F = ep_outer_integral(f, theta0)
        lhs = ep_derivative_t(F) - F.scale(1j * theta0)
        ts = np.linspace(0.0, 1.0, 7)
        # the Taylor branch is exact only to truncation; compare values on [0, 1]
        scale = 1.0 + float(np.sum(np.abs(f.coeffs))) * (1 + abs(theta0))
        # terms within the resonance tolerance are integrated as exactly resonant,
        # which costs |a| |delta| t^{p+1} <= |a| |delta| on [0, 1]
        delta = np.abs(f.phases - theta0)
        snapped = (delta > 0) & (delta <= RESONANCE_TOL)
        snap_err = float(np.sum(np.abs(f.coeffs[snapped]) * delta[snapped]))
        err = np.max(np.abs(ep_eval(lhs, ts) - ep_eval(f, ts)))
        assert err <= 1e-11 * scale + snap_err * (1 + 1e-6)

    def test_fundamental_theorem_termwise_away_from_near_zone(self):
        rng = np.random.default_rng(4)
        f = ExpPoly(rng.normal(size=4) + 1j * rng.normal(size=4), [0, 1, 2, 1],
                    [3.0, -2.0, 5.5, 1.0])
        theta0 = -1.0
        F = ep_outer_integral(f, theta0)
        diff = ep_derivative_t(F) - F.scale(1j * theta0) - f
        assert diff.is_zero() or float(np.max(np.abs(diff.coeffs))) <= 1e-12

    def test_continuity_across_resonance(self):
        a = 0.8 - 0.3j
        ts = np.linspace(0.0, 1.0, 11)
        vals = []
        for factor in (1.01, 0.99):
            d = factor * RESONANCE_TOL
            F = ep_outer_integral(ExpPoly.monomial(a, 1, 2.0 + d), 2.0)
            vals.append(ep_eval(F, ts))
        assert np.max(np.abs(vals[0] - vals[1])) <= 10 * RESONANCE_TOL * abs(a)

    def test_high_power_near_branch_stable(self):
        f = ExpPoly.monomial(1.0, 12, 0.3)
        t = 0.05
        F = ep_outer_integral(f, 0.0, t_scale=t)
        ref = _cquad(lambda s: s ** 12 * cmath.exp(0.3j * s), 0.0, t)
        assert abs(ep_eval(F, t) - ref) <= 1e-12 * abs(ref)


class TestKernel:
    @pytest.mark.parametrize("p", [0, 1, 3, 8])
    @pytest.mark.parametrize("w", [1e-6, 0.5, 3.0, 7.5, 40.0])
    def test_against_quadrature(self, p, w):
        z = 1j * w
        ref = _cquad(lambda s: s ** p * cmath.exp(z * s), 0.0, 1.0)
        got = complex(_kernel_g(np.array([p]), np.array([z]))[0])
        assert abs(got - ref) <= 1e-12 * max(abs(ref), 1e-300) + 1e-15

    def test_phi1(self):
        with mpmath.workdps(40):
            for z in (1e-9j, 0.3j, 5j):
                ref = complex(mpmath.expm1(mpmath.mpc(z)) / mpmath.mpc(z))
                assert abs(complex(phi1(np.array([z]))[0]) - ref) < 1e-15

    def test_duhamel_values_match_closed_form(self):
        rng = np.random.default_rng(6)
        f = _random_poly(rng)
        for t in (0.05, 0.4, 1.3):
            F = ep_outer_integral(f, 2.0, t_scale=t)
            assert abs(ep_outer_integral_value(f, 2.0, t) - ep_eval(F, t)) < 1e-11
        assert np.all(duhamel_values(f.coeffs, f.powers, f.phases, 2.0, 0.0) == 0)
