import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmoforge.core import Solution
from cmoforge.metrics import (
    front_bounds,
    hv_monte_carlo,
    hypervolume,
    hypervolume_points,
    igd,
    igd_points,
    normalize,
    report,
)
from cmoforge.problems import make_problem, sample_cpf


def sol(objs, cv=0.0):
    return Solution(decs=[0.0], objs=objs, cons=[], cv=cv)


class TestIGD:
    def test_exact_match(self):
        ref = np.array([[0, 1], [0.5, 0.5], [1, 0]])
        assert igd(ref, [sol(r) for r in ref]) == 0.0

    def test_worked_example(self):
        assert igd(np.array([[0, 1], [1, 0]]), [sol([0, 1])]) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)

    def test_infeasible_ignored(self):
        ref = np.array([[0, 1], [1, 0]])
        assert igd(ref, [sol([0, 1]), sol([1, 0], cv=0.5)]) == pytest.approx(math.sqrt(2) / 2)
        assert math.isnan(igd(ref, [sol([0, 1], cv=0.1)]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            igd_points(np.zeros((2, 2)), np.zeros((2, 3)))


class TestHV:
    def test_examples(self):
        ref = (1.0, 1.0)
        assert hypervolume_points(np.array([[0.5, 0.5]]), ref)[0] == 0.25
        assert hypervolume_points(np.array([[0.25, 0.75], [0.75, 0.25]]), ref)[0] == 0.3125
        assert hypervolume_points(np.array([[1.2, 0.1]]), ref)[0] == 0.0

    def test_3d_box(self):
        assert hypervolume_points(np.array([[0.5, 0.5, 0.5]]), (1, 1, 1))[0] == pytest.approx(0.125)

    def test_3d_two_points(self):
        pts = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        # two 1x0.5x0.5 boxes overlapping in 0.5x0.5x0.5
        assert hypervolume_points(pts, (1, 1, 1))[0] == pytest.approx(0.25 + 0.25 - 0.125)

    def test_dominated_point_adds_nothing(self):
        a = hypervolume_points(np.array([[0.2, 0.2]]), (1, 1))[0]
        b = hypervolume_points(np.array([[0.2, 0.2], [0.5, 0.5]]), (1, 1))[0]
        assert a == b

    def test_monte_carlo_four_objectives(self):
        pts = np.array([[0.5, 0.5, 0.5, 0.0], [0.0, 0.5, 0.5, 0.5]])
        value, stderr = hypervolume_points(pts, (1,) * 4, mc_samples=200_000, rng=np.random.default_rng(0))
        exact = 2 * 0.5**3 - 0.5**4
        assert abs(value - exact) <= 4 * stderr and stderr > 0

    def test_mc_direct(self):
        value, stderr = hv_monte_carlo(np.array([[0.25, 0.75], [0.75, 0.25]]), np.array([1.0, 1.0]), 100_000, np.random.default_rng(2))
        assert abs(value - 0.3125) < 4 * stderr

    def test_infeasible_nan(self):
        assert math.isnan(hypervolume([sol([0.1, 0.1], cv=1.0)], (1.1, 1.1)))

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=8), st.tuples(st.floats(0, 1), st.floats(0, 1)))
    def test_monotone_under_insertion(self, pts, extra):
        base = hypervolume_points(np.array(pts), (1.1, 1.1))[0]
        more = hypervolume_points(np.array(pts + [extra]), (1.1, 1.1))[0]
        assert more >= base - 1e-12


class TestNormalize:
    def test_examples(self):
        ideal, nadir = front_bounds(make_problem("TRIC3"))
        assert np.allclose(ideal, [0, 0.2]) and np.allclose(nadir, [1, 1.2])
        assert np.allclose(normalize([[0.5, 0.7]], ideal, nadir), [[0.5, 0.5]])
        assert np.allclose(normalize([ideal], ideal, nadir), 0)
        assert np.allclose(normalize([nadir], ideal, nadir), 1)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            normalize([[0, 0]], [0, 0], [1, 0])


def test_report_on_front():
    p = make_problem("TRIC3")
    ref = sample_cpf(p, 200)
    rep = report([sol(r) for r in sample_cpf(p, 50)], p, ref)
    assert rep.feasible_count == 50 and rep.igd < 0.02
    assert rep.reference_point == (1.1, 1.1)
    # The straight front covers 1.21 - 0.5 of the normalized box.
    assert rep.hv == pytest.approx(1.21 - 0.5, abs=0.02)


def test_report_all_infeasible():
    p = make_problem("TRIC3")
    rep = report([sol([0.1, 0.1], cv=1.0)], p, sample_cpf(p, 10))
    assert math.isnan(rep.igd) and math.isnan(rep.hv) and rep.feasible_count == 0


def test_tric6_report():
    p = make_problem("TRIC6")
    rep = report([sol(r) for r in sample_cpf(p, 30)], p, sample_cpf(p, 100))
    assert rep.hv > 0 and rep.igd < 0.2
