"""Tests for inner/outer minimax solves and the finite-difference value derivative.

Run:
    pytest tests/test_solver.py -v
"""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from problems.loader import load_problem
from problems.objective import (
    Dataset,
    EmpiricalObjective,
    PopulationObjective,
    branch_constants,
    sample_dataset,
)
from problems.polynomial import Monomial, PolynomialOracle
from services.exceptions import InvalidArgumentError
from services.solver import (
    SolveStatus,
    inner_maximize,
    outer_minimize,
    phi_value,
    richardson,
    solve_population,
    solve_sample,
    value_dirderiv_fd,
)

DOUBLE_WELL = {
    # f = ξ² - ξ⁴/2 + γ²: maximizers ξ = ±1 with value 1/2 + γ²
    "name": "double_well",
    "gamma_set": {"lower": [-1.0], "upper": [1.0]},
    "xi_set": {"kind": "box", "lower": [-2.0], "upper": [2.0]},
    "x_sampler": {"mean": [0.0], "scale": [0.0]},
    "tables": [
        [
            {"coef": 1.0, "gamma": [0], "xi": [2]},
            {"coef": -0.5, "gamma": [0], "xi": [4]},
            {"coef": 1.0, "gamma": [2], "xi": [0]},
        ]
    ],
}

SLOPE = {
    # φ(γ) = γ on [-1, 1]: the minimizer is the lower bound
    "name": "slope",
    "gamma_set": {"lower": [-1.0], "upper": [1.0]},
    "xi_set": {"kind": "finite", "labels": ["only"]},
    "x_sampler": {"mean": [0.0], "scale": [0.0]},
    "tables": [[{"coef": 1.0, "gamma": [1]}]],
}


# =========================================================================
# inner_maximize
# =========================================================================


class TestInnerMaximize:

    def test_box_interior_maximizer(self, smooth_saddle):
        result = inner_maximize(PopulationObjective(smooth_saddle), np.array([0.5]))
        assert result.status == SolveStatus.CONVERGED
        assert result.best[0] == pytest.approx(0.5, abs=1e-9)
        assert result.value == pytest.approx(0.25, abs=1e-12)

    def test_finite_list_is_enumerated(self, paper_example):
        result = inner_maximize(PopulationObjective(paper_example), np.array([0.3]))
        assert result.best == 1
        assert result.value == pytest.approx(0.3)
        assert [xi for xi, _ in result.maximizers] == [1, 0]

    def test_two_global_maximizers_are_both_kept(self):
        problem = load_problem(DOUBLE_WELL)
        result = inner_maximize(PopulationObjective(problem), np.array([0.0]))
        active = result.active(1e-8)
        assert sorted(round(float(xi[0]), 6) for xi, _ in active) == [-1.0, 1.0]
        assert result.value == pytest.approx(0.5, abs=1e-12)

    def test_phi_value(self, smooth_saddle):
        assert phi_value(PopulationObjective(smooth_saddle), np.array([-1.0])) == pytest.approx(1.0)


# =========================================================================
# outer_minimize / solve_population
# =========================================================================


class TestOuterMinimize:

    def test_paper_example(self, paper_example):
        solution = solve_population(paper_example)
        assert solution.status == SolveStatus.CONVERGED
        assert solution.gamma_hat[0] == pytest.approx(0.0, abs=1e-9)
        assert solution.theta_hat == pytest.approx(0.0, abs=1e-9)
        weights = dict(solution.multipliers)
        assert weights[0] == pytest.approx(0.5, abs=1e-8)
        assert weights[1] == pytest.approx(0.5, abs=1e-8)

    @pytest.mark.parametrize("fixture", ["vee_value", "cone_qp", "ridge2d", "smooth_saddle"])
    def test_builtins_reach_ground_truth(self, fixture, request):
        problem = request.getfixturevalue(fixture)
        solution = solve_population(problem)
        truth = problem.ground_truth
        assert solution.converged
        np.testing.assert_allclose(solution.gamma_hat, truth.gamma_star, atol=1e-7)
        assert solution.theta_hat == pytest.approx(truth.theta_star, abs=1e-10)

    def test_boundary_hit(self):
        problem = load_problem(SLOPE)
        solution = outer_minimize(PopulationObjective(problem), problem.gamma_set)
        assert solution.status == SolveStatus.BOUNDARY_HIT
        assert solution.gamma_hat[0] == pytest.approx(-1.0, abs=1e-7)
        assert not solution.converged

    def test_to_dict_uses_labels(self, paper_example):
        data = solve_population(paper_example).to_dict()
        assert data["status"] == "converged"
        assert {m["xi"] for m in data["inner_maximizers"]} == {"xi1", "xi2"}
        assert data["source"]["kind"] == "population"


# =========================================================================
# solve_sample
# =========================================================================


class TestSolveSample:

    def test_deterministic(self, vee_value, fast_solver_config):
        dataset = sample_dataset(vee_value, 500, 11)
        a = solve_sample(vee_value, dataset, fast_solver_config)
        b = solve_sample(vee_value, dataset, fast_solver_config)
        assert a.gamma_hat.tobytes() == b.gamma_hat.tobytes()
        assert a.theta_hat == b.theta_hat

    def test_vee_closed_form(self, vee_value, fast_solver_config):
        dataset = sample_dataset(vee_value, 1000, 4)
        a, b = dataset.draws.mean(axis=0)
        solution = solve_sample(vee_value, dataset, fast_solver_config)
        gamma = (a - b) / 2.0
        assert solution.converged
        assert solution.gamma_hat[0] == pytest.approx(gamma, abs=1e-9)
        assert solution.theta_hat == pytest.approx((a + b) / 2.0 + gamma**2 / 2.0, abs=1e-9)

    def test_saddle_closed_form(self, smooth_saddle, fast_solver_config):
        dataset = sample_dataset(smooth_saddle, 1000, 9)
        means = dataset.draws.mean(axis=0)
        solution = solve_sample(smooth_saddle, dataset, fast_solver_config)
        assert solution.converged
        assert solution.gamma_hat[0] == pytest.approx(-(means[0] + means[1]) / 2.0, abs=1e-8)

    def test_source_records_dataset(self, cone_qp, fast_solver_config):
        dataset = sample_dataset(cone_qp, 100, 2)
        solution = outer_minimize(EmpiricalObjective(cone_qp, dataset), cone_qp.gamma_set, fast_solver_config)
        assert solution.source == {"kind": "sample", "N": 100, "seed": 2}


# =========================================================================
# Consistency of θ̂_N
# =========================================================================


class TestConsistency:

    @pytest.mark.parametrize("fixture", ["vee_value", "cone_qp", "ridge2d", "smooth_saddle"])
    def test_value_error_shrinks_with_n(self, fixture, request, fast_solver_config):
        problem = request.getfixturevalue(fixture)
        theta_star = problem.ground_truth.theta_star
        errors = []
        for N in (100, 1000, 10000):
            gaps = []
            for seed in range(8):
                solution = solve_sample(problem, sample_dataset(problem, N, seed), fast_solver_config)
                gaps.append(abs(solution.theta_hat - theta_star))
            errors.append(float(np.mean(gaps)))
        assert errors[0] > errors[1] > errors[2], errors


# =========================================================================
# Epigraph solver vs brute force
# =========================================================================


def _phi_hat(objective, gamma) -> float:
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    return max(objective.value(gamma, i) for i in range(objective.xi_set.size))


def _grid_minimize(objective, box, stages):
    """Grid search over Γ, each stage re-centred on the previous best point.

    ``stages`` lists (step, half_width); the first half_width is ignored.
    """
    center = None
    value = None
    for step, half_width in stages:
        axes = []
        for i in range(box.dim):
            lo, hi = float(box.lower[i]), float(box.upper[i])
            if center is not None:
                lo, hi = max(lo, center[i] - half_width), min(hi, center[i] + half_width)
            axes.append(np.arange(lo, hi + 0.5 * step, step))
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
        values = np.array([_phi_hat(objective, p) for p in points])
        best = int(np.argmin(values))
        center, value = points[best], float(values[best])
    return center, value


def _brute_force_1d(objective, box):
    """Grid down to step 1e-4, then bounded Brent on the bracketing cell."""
    center, _ = _grid_minimize(objective, box, [(1e-2, None), (1e-4, 2e-2)])
    lo = max(float(box.lower[0]), center[0] - 1e-4)
    hi = min(float(box.upper[0]), center[0] + 1e-4)
    result = minimize_scalar(
        lambda s: _phi_hat(objective, [s]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    return result.x, float(result.fun)


class TestBruteForceAgreement:

    @pytest.mark.parametrize(
        "fixture, seed",
        [("paper_example", 0), ("vee_value", 1), ("vee_value", 2)] + [("cone_qp", s) for s in range(5)],
    )
    def test_one_dimensional(self, fixture, seed, request, fast_solver_config):
        problem = request.getfixturevalue(fixture)
        dataset = sample_dataset(problem, 400, seed)
        solution = solve_sample(problem, dataset, fast_solver_config)
        gamma, value = _brute_force_1d(EmpiricalObjective(problem, dataset), problem.gamma_set)
        assert solution.gamma_hat[0] == pytest.approx(gamma, abs=1e-3)
        assert solution.theta_hat == pytest.approx(value, abs=1e-6)

    def test_cone_qp_shifted_mean(self, cone_qp, fast_solver_config):
        # X̄ = (0.3, 0): φ̂ = max(γ²/2 + 0.3γ, γ + γ²), first branch alone at its minimum
        dataset = Dataset("cone_qp", 2, 0, np.array([[0.6, 0.0], [0.0, 0.0]]))
        solution = solve_sample(cone_qp, dataset, fast_solver_config)
        assert solution.converged
        assert solution.gamma_hat[0] == pytest.approx(-0.3, abs=1e-8)
        assert solution.theta_hat == pytest.approx(-0.045, abs=1e-10)
        gamma, value = _brute_force_1d(EmpiricalObjective(cone_qp, dataset), cone_qp.gamma_set)
        assert solution.gamma_hat[0] == pytest.approx(gamma, abs=1e-3)
        assert solution.theta_hat == pytest.approx(value, abs=1e-6)

    def test_ridge2d_grid(self, ridge2d, fast_solver_config):
        dataset = sample_dataset(ridge2d, 400, 3)
        solution = solve_sample(ridge2d, dataset, fast_solver_config)
        gamma, value = _grid_minimize(
            EmpiricalObjective(ridge2d, dataset), ridge2d.gamma_set, [(5e-2, None), (2e-3, 0.1), (1e-4, 4e-3)]
        )
        assert np.max(np.abs(solution.gamma_hat - gamma)) <= 1e-3
        # φ̂ has unit slopes at the kink, so the grid minimum sits at most ~1e-4 above θ̂
        assert solution.theta_hat <= value + 1e-12
        assert value - solution.theta_hat <= 2e-4


# =========================================================================
# value_dirderiv_fd
# =========================================================================


class TestValueDirderivFd:

    def test_paper_example_is_one_half(self, paper_example):
        eta = branch_constants(1, [1.0, 0.0])
        result = value_dirderiv_fd(paper_example, eta)
        for _, quotient in result.table:
            assert quotient == pytest.approx(0.5, abs=1e-9)
        assert result.estimate == pytest.approx(0.5, abs=1e-9)
        assert result.monotone
        assert result.spread <= 1e-9

    def test_zero_direction(self, paper_example):
        result = value_dirderiv_fd(paper_example, branch_constants(1, [0.0, 0.0]))
        assert all(quotient == pytest.approx(0.0, abs=1e-12) for _, quotient in result.table)
        assert result.estimate == pytest.approx(0.0, abs=1e-12)

    def test_smooth_saddle_quadratic_bump(self, smooth_saddle, fast_solver_config):
        # η = γ² + 1 keeps γ* = 0 and lifts the value by t
        eta = PolynomialOracle(
            n=1, m=1, x_dim=0, tables=[[Monomial(1.0, (2,), (0,)), Monomial(1.0, (0,), (0,))]]
        )
        result = value_dirderiv_fd(smooth_saddle, eta, config=fast_solver_config)
        assert result.estimate == pytest.approx(1.0, abs=1e-6)

    def test_rejects_increasing_grid(self, paper_example):
        with pytest.raises(InvalidArgumentError):
            value_dirderiv_fd(paper_example, branch_constants(1, [1.0, 0.0]), t_grid=[0.01, 0.1])

    def test_rejects_non_positive_grid(self, paper_example):
        with pytest.raises(InvalidArgumentError):
            value_dirderiv_fd(paper_example, branch_constants(1, [1.0, 0.0]), t_grid=[0.1, 0.0])


class TestRichardson:

    def test_linear_quotients_extrapolate_exactly(self):
        assert richardson(0.2, 1.2, 0.1, 1.1) == pytest.approx(1.0)

    def test_constant_quotients(self):
        assert richardson(0.3, 0.5, 0.1, 0.5) == pytest.approx(0.5)
