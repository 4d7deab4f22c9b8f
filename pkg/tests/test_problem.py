"""Tests for sets, samplers, the polynomial oracle and the built-in registry.

Run:
    pytest tests/test_problem.py -v
"""

import numpy as np
import pytest

from problems.base import Box, FiniteList, GaussianSampler, ProblemSpec, xi_key, xi_to_json
from problems.builtin import REGISTRY, builtin
from problems.polynomial import Monomial, PolynomialOracle
from services.exceptions import InvalidArgumentError, PointOutsideSetError, UnknownProblemError


# =========================================================================
# Box
# =========================================================================


class TestBox:

    def test_rejects_inverted_bounds(self):
        with pytest.raises(InvalidArgumentError):
            Box([1.0], [0.0])

    def test_rejects_infinite_bounds(self):
        with pytest.raises(InvalidArgumentError):
            Box([-np.inf], [0.0])

    def test_grid_includes_bounds(self):
        grid = Box([-1.0], [1.0]).grid(5, 100)
        np.testing.assert_allclose(grid.ravel(), [-1.0, -0.5, 0.0, 0.5, 1.0])

    def test_grid_respects_cap(self):
        grid = Box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).grid(9, 100)
        assert len(grid) <= 100
        assert len(grid) == 4**3

    def test_project_and_boundary_distance(self):
        box = Box([-2.0, -1.0], [2.0, 1.0])
        np.testing.assert_array_equal(box.project([3.0, -5.0]), [2.0, -1.0])
        assert box.boundary_distance([0.0, 0.5]) == pytest.approx(0.5)
        assert box.boundary_distance([2.0, 0.0]) == 0.0

    def test_corners(self):
        corners = Box([0.0, 0.0], [1.0, 2.0]).corners()
        assert {tuple(c) for c in corners} == {(0, 0), (0, 2), (1, 0), (1, 2)}


# =========================================================================
# FiniteList
# =========================================================================


class TestFiniteList:

    def test_labels_must_be_distinct(self):
        with pytest.raises(InvalidArgumentError):
            FiniteList(("a", "a"))

    def test_needs_a_point(self):
        with pytest.raises(InvalidArgumentError):
            FiniteList(())

    def test_points_must_be_distinct(self):
        with pytest.raises(InvalidArgumentError):
            FiniteList(("a", "b"), [[0.0], [0.0]])

    def test_contains_and_labels(self):
        xi_set = FiniteList(("xi1", "xi2"))
        assert xi_set.contains(1)
        assert not xi_set.contains(2)
        assert xi_to_json(xi_set, 1) == "xi2"

    def test_sort_key(self):
        assert xi_key(3) == (3,)
        assert xi_key(np.array([0.5, -1.0])) == (0.5, -1.0)


# =========================================================================
# GaussianSampler
# =========================================================================


class TestGaussianSampler:

    def test_constant_sampler_is_deterministic(self):
        sampler = GaussianSampler.constant(2)
        assert sampler.deterministic
        np.testing.assert_array_equal(sampler.draw_rows(5, 0, 3), np.zeros((3, 2)))

    def test_rows_are_addressable(self):
        sampler = GaussianSampler([1.0, -1.0], [2.0, 0.5])
        rows = sampler.draw_rows(9, 0, 5)
        np.testing.assert_array_equal(sampler(9, 3), rows[3])


# =========================================================================
# PolynomialOracle
# =========================================================================


class TestPolynomialOracle:

    @pytest.fixture
    def saddle_oracle(self):
        # F = γ²/2 + 2γξ - ξ²/2 + X1 γ + X2 ξ
        return PolynomialOracle(
            n=1,
            m=1,
            x_dim=2,
            tables=[
                [
                    Monomial(0.5, (2,), (0,)),
                    Monomial(2.0, (1,), (1,)),
                    Monomial(-0.5, (0,), (2,)),
                    Monomial(1.0, (1,), (0,), 0),
                    Monomial(1.0, (0,), (1,), 1),
                ]
            ],
        )

    def test_value_matches_closed_form(self, saddle_oracle):
        x = np.array([[0.3, -0.7], [1.0, 2.0]])
        g, xi = 0.4, -0.2
        expected = 0.5 * g**2 + 2 * g * xi - 0.5 * xi**2 + x[:, 0] * g + x[:, 1] * xi
        np.testing.assert_allclose(saddle_oracle.value(x, np.array([g]), np.array([xi])), expected)

    def test_gradient_matches_closed_form(self, saddle_oracle):
        x = np.array([[0.3, -0.7]])
        g_gamma, g_xi = saddle_oracle.gradient(x, np.array([0.4]), np.array([-0.2]))
        assert g_gamma[0, 0] == pytest.approx(0.4 + 2 * -0.2 + 0.3)
        assert g_xi[0, 0] == pytest.approx(2 * 0.4 + 0.2 - 0.7)

    def test_hessian_is_constant(self, saddle_oracle):
        h_gg, h_gx, h_xx = saddle_oracle.hessian(np.zeros((1, 2)), np.array([1.0]), np.array([1.5]))
        assert h_gg[0, 0, 0] == pytest.approx(1.0)
        assert h_gx[0, 0, 0] == pytest.approx(2.0)
        assert h_xx[0, 0, 0] == pytest.approx(-1.0)

    def test_branch_tables(self):
        oracle = PolynomialOracle(
            n=1, m=0, x_dim=0, tables=[[Monomial(-1.0, (1,))], [Monomial(1.0, (1,))]]
        )
        empty = np.zeros((1, 0))
        assert oracle.value(empty, np.array([0.5]), 0)[0] == pytest.approx(-0.5)
        assert oracle.value(empty, np.array([0.5]), 1)[0] == pytest.approx(0.5)
        with pytest.raises(InvalidArgumentError):
            oracle.value(empty, np.array([0.5]), 2)

    def test_expectation_folds_the_mean(self, saddle_oracle):
        mean = np.array([2.0, -3.0])
        population = saddle_oracle.expectation(mean)
        gamma, xi = np.array([0.4]), np.array([-0.2])
        assert population.x_dim == 0
        assert population.value(np.zeros((1, 0)), gamma, xi)[0] == pytest.approx(
            saddle_oracle.value(mean[None, :], gamma, xi)[0]
        )

    def test_rejects_mismatched_terms(self):
        with pytest.raises(InvalidArgumentError):
            PolynomialOracle(n=2, m=0, x_dim=0, tables=[[Monomial(1.0, (1,))]])

    def test_rejects_x_index_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            PolynomialOracle(n=1, m=0, x_dim=1, tables=[[Monomial(1.0, (1,), (), 3)]])


# =========================================================================
# ProblemSpec
# =========================================================================


class TestProblemSpec:

    def test_dimension_checks(self):
        oracle = PolynomialOracle(n=1, m=0, x_dim=0, tables=[[Monomial(1.0, (1,))]])
        with pytest.raises(InvalidArgumentError):
            ProblemSpec("bad", Box([0, 0], [1, 1]), FiniteList(("a",)), oracle, GaussianSampler.constant(0))

    def test_point_checks(self, ridge2d):
        with pytest.raises(PointOutsideSetError):
            ridge2d.check_gamma([3.0, 0.0])
        with pytest.raises(PointOutsideSetError):
            ridge2d.check_xi(5)
        assert ridge2d.check_xi(1) == 1

    def test_box_xi_check(self, smooth_saddle):
        with pytest.raises(PointOutsideSetError):
            smooth_saddle.check_xi([2.5])


# =========================================================================
# Built-in registry
# =========================================================================


class TestBuiltin:

    def test_registry_names(self):
        assert set(REGISTRY) == {"paper_example", "smooth_saddle", "vee_value", "cone_qp", "ridge2d"}

    def test_unknown_name(self):
        with pytest.raises(UnknownProblemError):
            builtin("no_such_problem")

    def test_parameterized_saddle(self):
        problem = builtin("smooth_saddle(0.5)")
        assert problem.name == "smooth_saddle(0.5)"
        assert problem.ground_truth.hessian[0, 0] == pytest.approx(1.25)

    def test_parameter_only_for_saddle(self):
        with pytest.raises(UnknownProblemError):
            builtin("ridge2d(2)")

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_ground_truth_value_at_gamma_star(self, name):
        problem = builtin(name)
        truth = problem.ground_truth
        empty = np.zeros((1, 0))
        for xi in truth.active:
            value = problem.population.value(empty, truth.gamma_star, xi)[0]
            assert value == pytest.approx(truth.theta_star, abs=1e-14)

    def test_paper_example_is_deterministic(self, paper_example):
        assert paper_example.deterministic
        assert paper_example.oracle.value(np.zeros((1, 1)), np.array([0.3]), 0)[0] == pytest.approx(-0.3)
