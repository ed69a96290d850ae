import json
import math

import numpy as np
import pytest

from conftest import C0, LN10, two_mode_field
from qkdv.errors import InconsistentInitialData, InvalidArgument
from qkdv.exp_poly import ExpPoly
from qkdv.lattice import CoeffField, as_frequency
from qkdv.picard import SolverConfig, sample_times, solve
from qkdv.reference import rk4_samples
from qkdv.uniqueness import (ModeTrajectory, TrajectoryPair, assert_unique, contraction_bound,
                             defect_allowance, exponent_factorial_sum, integral_equation_defects,
                             project, report_json, trajectory_from_samples, uniqueness_horizon,
                             verify_integral_equations)

OM = as_frequency([1.0])


def _constant(value, R=4, t_max=0.1):
    coeffs = {(0,): ExpPoly.monomial(value, 0, 0.0)} if value else {}
    return ModeTrajectory(coeffs, OM, R, t_max)


class TestDefects:
    def test_zero_and_constant(self):
        ts = np.linspace(0, 0.1, 7)
        assert verify_integral_equations(_constant(0.0), ts) == 0.0
        assert verify_integral_equations(_constant(0.4), ts) == 0.0

    def test_converged_two_mode(self, two_mode):
        assert verify_integral_equations(two_mode, sample_times(two_mode.t_max)) <= 1e-8

    def test_missing_modes_have_defect(self):
        # free waves at +-1 feed modes 0 and +-2 through the flux, which are absent here
        c = CoeffField(1, 4, {(1,): 0.1, (-1,): 0.1}, (1.0, 1.0))
        free = {n: ExpPoly.monomial(v, 0, n[0] ** 3) for n, v in c.entries.items()}
        d = integral_equation_defects(ModeTrajectory(free, OM, 4, 0.05), [0.05])
        assert d[(1,)] == 0.0 and d.get((0,), 0.0) == 0.0
        assert d[(2,)] > 1e-5 and d[(-2,)] == pytest.approx(d[(2,)], rel=1e-12)


class TestBound:
    def test_zero_amplitude(self):
        pair = TrajectoryPair(_constant(0.0), _constant(0.0), 0.0, 1.0)
        assert contraction_bound(pair, 3, 0.05, C0) == 0.0

    def test_monotone(self):
        p1 = TrajectoryPair(_constant(0.0), _constant(0.0), 1.0, LN10 / 2)
        p2 = TrajectoryPair(_constant(0.0), _constant(0.0), 2.0, LN10 / 2)
        for k in (1, 3, 6):
            assert contraction_bound(p1, k, 0.01, C0) < contraction_bound(p1, k, 0.02, C0)
            assert contraction_bound(p1, k, 0.01, C0) < contraction_bound(p2, k, 0.01, C0)

    def test_decays_below_horizon(self):
        pair = TrajectoryPair(_constant(0.0), _constant(0.0), 2.0, LN10 / 2)
        t = 0.5 * uniqueness_horizon(2.0, LN10 / 2, OM, C0)
        vals = [contraction_bound(pair, k, t, C0) for k in range(1, 13)]
        assert vals[-1] < vals[0] and vals[-1] < 1e-2

    def test_mode_weight(self):
        pair = TrajectoryPair(_constant(0.0), _constant(0.0), 1.0, 2.0)
        full = contraction_bound(pair, 2, 0.01, C0)
        assert contraction_bound(pair, 2, 0.01, C0, n=(3,)) == pytest.approx(full * math.exp(-3))

    def test_factorial_sum(self):
        assert exponent_factorial_sum(1) == 2
        with pytest.raises(InvalidArgument):
            exponent_factorial_sum(0)

    def test_allowance_vanishes_without_defects(self):
        pair = TrajectoryPair(_constant(0.2), _constant(0.2), 1.0, 1.0)
        assert defect_allowance(pair, [0.0, 0.0]) == 0.0
        assert defect_allowance(pair, [1e-10, 0.0]) > 1e-10


class TestPairs:
    def test_inconsistent_initial_data(self):
        with pytest.raises(InconsistentInitialData):
            TrajectoryPair(_constant(0.2), _constant(0.3), 1.0, 1.0)

    def test_projection(self, two_mode):
        p = project(two_mode, 4)
        assert p.box_radius == 4 and all(abs(n[0]) <= 4 for n in p.coeffs)
        with pytest.raises(InvalidArgument):
            project(two_mode, 9)

    def test_identical_runs(self, two_mode):
        again = solve(two_mode_field(), [1.0], SolverConfig(8, two_mode.t_max))
        pair = TrajectoryPair.from_envelope(two_mode, again, 1.0, LN10)
        rep = assert_unique(pair, sample_times(two_mode.t_max), C0)
        assert rep["passed"] and rep["max_diff"] == 0.0

    def test_radius_extension(self, two_mode, two_mode_wide):
        pair = TrajectoryPair.from_envelope(two_mode, two_mode_wide, 1.0, LN10)
        assert pair.c_traj.box_radius == 8
        rep = assert_unique(pair, sample_times(two_mode.t_max), C0)
        assert rep["passed"], rep

    def test_against_rk4(self, two_mode):
        T = two_mode.t_max
        fit_times = sample_times(T, 41)
        index, vals = rk4_samples(two_mode_field(), [1.0], fit_times, 1e-4)
        rk = trajectory_from_samples(fit_times, index, vals, [1.0], 8)
        pair = TrajectoryPair.from_envelope(two_mode, rk, 1.0, LN10)
        rep = assert_unique(pair, sample_times(T), C0)
        assert rep["passed"], rep
        assert rep["max_diff"] <= 1e-8

    def test_times_out_of_range(self, two_mode):
        pair = TrajectoryPair.from_envelope(two_mode, two_mode, 1.0, LN10)
        with pytest.raises(InvalidArgument):
            assert_unique(pair, [2 * two_mode.t_max], C0)

    def test_report_json(self, two_mode):
        pair = TrajectoryPair.from_envelope(two_mode, two_mode, 1.0, LN10)
        doc = json.loads(report_json(assert_unique(pair, [0.0, two_mode.t_max], C0)))
        assert set(doc) == {"max_diff", "best_k", "bound_at_best_k", "defects"}
        assert 1 <= doc["best_k"] <= 12 and len(doc["defects"]) == 2
