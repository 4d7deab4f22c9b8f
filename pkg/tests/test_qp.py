"""Tests for the enumerated active-set cone QP.

Run:
    pytest tests/test_qp.py -v
"""

import numpy as np
import pytest

from services.exceptions import CapabilityError, QPInfeasibleError
from services.qp import MAX_INEQUALITIES, ConeQP


class TestConeQP:

    def test_unconstrained(self):
        qp = ConeQP(np.array([[2.0, 0.0], [0.0, 4.0]]))
        np.testing.assert_allclose(qp.solve_one([2.0, -4.0]), [-1.0, 1.0])

    def test_single_inequality_inactive(self):
        qp = ConeQP(np.eye(1), inequalities=np.array([[1.0]]))
        assert qp.solve_one([1.0])[0] == pytest.approx(-1.0)

    def test_single_inequality_active(self):
        qp = ConeQP(np.eye(1), inequalities=np.array([[1.0]]))
        assert qp.solve_one([-0.5])[0] == 0.0

    def test_equality_restricts_to_line(self):
        qp = ConeQP(np.eye(2), equalities=np.array([[-1.0, 0.0]]))
        np.testing.assert_allclose(qp.solve_one([0.1, 0.3]), [0.0, -0.3], atol=1e-15)

    def test_dependent_equalities(self):
        # ∇φ = (-1) and (1) span the same line
        qp = ConeQP(np.eye(1), equalities=np.array([[-1.0], [1.0]]))
        assert qp.solve_one([0.7])[0] == pytest.approx(0.0, abs=1e-15)

    def test_vectorized_draws(self, rng):
        qp = ConeQP(np.eye(1), inequalities=np.array([[1.0]]))
        c = rng.normal(size=(500, 1))
        np.testing.assert_allclose(qp.solve(c)[:, 0], -np.maximum(c[:, 0], 0.0), atol=1e-12)

    def test_two_inequalities_corner(self):
        # min ½‖η‖² + cᵀη over η ≤ 0: η = min(-c, 0) coordinatewise
        qp = ConeQP(np.eye(2), inequalities=np.eye(2))
        np.testing.assert_allclose(qp.solve_one([-1.0, 2.0]), [0.0, -2.0], atol=1e-15)

    def test_positive_homogeneity(self, rng):
        qp = ConeQP(
            np.array([[2.0, 0.5], [0.5, 1.0]]),
            inequalities=np.array([[1.0, 1.0], [-1.0, 2.0]]),
        )
        c = rng.normal(size=(100, 2))
        np.testing.assert_allclose(qp.solve(2.0 * c), 2.0 * qp.solve(c), atol=1e-9)

    def test_too_many_inequalities(self):
        with pytest.raises(CapabilityError):
            ConeQP(np.eye(2), inequalities=np.ones((MAX_INEQUALITIES + 1, 2)))

    def test_indefinite_without_constraints(self):
        with pytest.raises(QPInfeasibleError):
            ConeQP(-np.eye(1))

    def test_infeasible_draw_reports_index(self):
        # H negative: only subsets pinning η = 0 are admissible, and they need c ≤ 0
        qp = ConeQP(-np.eye(1), inequalities=np.array([[1.0]]))
        with pytest.raises(QPInfeasibleError) as excinfo:
            qp.solve(np.array([[-1.0], [1.0]]), draw_offset=10)
        assert excinfo.value.draw_index == 11
